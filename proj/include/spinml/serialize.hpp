#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "spinml/dataset.hpp"
#include "spinml/errors.hpp"
#include "spinml/extra_trees.hpp"
#include "spinml/gbt.hpp"
#include "spinml/linalg.hpp"
#include "spinml/meta_gbt.hpp"
#include "spinml/mlp.hpp"
#include "spinml/tree.hpp"

namespace spinml {

// 64-bit FNV-1a, used as a lightweight integrity check on serialized blobs.
inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

// json exceptions carry library-internal wording; rewrap them so loader
// errors name the component that failed.
template <typename Fn>
auto json_guard(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(cat(what, ": malformed record (", e.what(), ")"));
    }
}

}  // namespace detail

inline nlohmann::json matrix_to_json(const Matrix& m) {
    return nlohmann::json{
        {"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j, const char* what) {
    return detail::json_guard(what, [&] {
        Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
        const auto data = j.at("data").get<std::vector<double>>();
        if (data.size() != m.rows() * m.cols())
            throw DataError(detail::cat(what, ": matrix payload has ",
                                        data.size(), " values for ", m.rows(),
                                        "x", m.cols()));
        std::copy(data.begin(), data.end(), m.data().begin());
        return m;
    });
}

inline nlohmann::json tree_to_json(const Tree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : t.nodes)
        nodes.push_back({n.feature, n.threshold, n.value, n.left, n.right});
    return nodes;
}

inline Tree tree_from_json(const nlohmann::json& j, const char* what) {
    return detail::json_guard(what, [&] {
        Tree t;
        for (const auto& row : j) {
            TreeNode n;
            n.feature = row.at(0).get<int>();
            n.threshold = row.at(1).get<double>();
            n.value = row.at(2).get<double>();
            n.left = row.at(3).get<int>();
            n.right = row.at(4).get<int>();
            t.nodes.push_back(n);
        }
        const int size = static_cast<int>(t.nodes.size());
        for (const TreeNode& n : t.nodes) {
            if (n.is_leaf()) continue;
            if (n.left < 0 || n.left >= size || n.right < 0 || n.right >= size)
                throw DataError(detail::cat(what, ": tree child index out of "
                                                  "range (size ", size, ")"));
        }
        return t;
    });
}

inline nlohmann::json standardizer_to_json(const Standardizer& s) {
    return nlohmann::json{{"means", s.means}, {"stds", s.stds}};
}

inline Standardizer standardizer_from_json(const nlohmann::json& j) {
    const char* what = "standardizer";
    return detail::json_guard(what, [&] {
        Standardizer s;
        s.means = j.at("means").get<std::vector<double>>();
        s.stds = j.at("stds").get<std::vector<double>>();
        if (s.means.size() != s.stds.size() || s.means.empty())
            throw DataError(detail::cat(what, ": ", s.means.size(),
                                        " means vs ", s.stds.size(), " stds"));
        for (double v : s.stds)
            if (!(v > 0.0))
                throw DataError(detail::cat(what, ": nonpositive std ", v));
        return s;
    });
}

inline nlohmann::json mlp_to_json(const MlpModel& m) {
    nlohmann::json weights = nlohmann::json::array();
    for (const Matrix& w : m.weights) weights.push_back(matrix_to_json(w));
    return nlohmann::json{
        {"kind", "mlp"},
        {"widths", m.widths},
        {"weights", weights},
        {"biases", m.biases},
        {"config",
         {{"hidden", m.config.hidden},
          {"optimizer", optimizer_name(m.config.optimizer)},
          {"learning_rate", m.config.learning_rate},
          {"momentum", m.config.momentum},
          {"lr_floor", m.config.lr_floor},
          {"epochs", m.config.epochs},
          {"batch_size", m.config.batch_size}}},
        {"train_loss_history", m.train_loss_history}};
}

inline MlpModel mlp_from_json(const nlohmann::json& j) {
    const char* what = "mlp model";
    return detail::json_guard(what, [&] {
        if (j.at("kind").get<std::string>() != "mlp")
            throw DataError("mlp model: wrong component kind");
        MlpModel m;
        m.widths = j.at("widths").get<std::vector<std::size_t>>();
        for (const auto& w : j.at("weights"))
            m.weights.push_back(matrix_from_json(w, what));
        m.biases = j.at("biases").get<std::vector<std::vector<double>>>();
        const auto& cfg = j.at("config");
        m.config.hidden = cfg.at("hidden").get<std::vector<std::size_t>>();
        m.config.optimizer = parse_optimizer(cfg.at("optimizer").get<std::string>());
        m.config.learning_rate = cfg.at("learning_rate").get<double>();
        m.config.momentum = cfg.at("momentum").get<double>();
        m.config.lr_floor = cfg.at("lr_floor").get<double>();
        m.config.epochs = cfg.at("epochs").get<std::size_t>();
        m.config.batch_size = cfg.at("batch_size").get<std::size_t>();
        m.train_loss_history =
            j.at("train_loss_history").get<std::vector<double>>();

        if (m.widths.size() < 2 || m.weights.size() != m.widths.size() - 1 ||
            m.biases.size() != m.weights.size())
            throw DataError("mlp model: layer bookkeeping is inconsistent");
        for (std::size_t l = 0; l < m.weights.size(); ++l)
            if (m.weights[l].rows() != m.widths[l] ||
                m.weights[l].cols() != m.widths[l + 1] ||
                m.biases[l].size() != m.widths[l + 1])
                throw DataError(detail::cat(
                    "mlp model: layer ", l, " shapes disagree with widths"));
        if (m.widths.back() != 1)
            throw DataError("mlp model: output layer must be scalar");
        return m;
    });
}

inline nlohmann::json extratrees_to_json(const ExtraTreesModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : m.trees) trees.push_back(tree_to_json(t));
    return nlohmann::json{
        {"kind", "extra_trees"},
        {"input_width", m.input_width},
        {"seed", m.seed},
        {"config",
         {{"n_estimators", m.config.n_estimators},
          {"max_depth", m.config.max_depth},
          {"features_per_split", m.config.features_per_split}}},
        {"trees", trees}};
}

inline ExtraTreesModel extratrees_from_json(const nlohmann::json& j) {
    const char* what = "extra_trees model";
    return detail::json_guard(what, [&] {
        if (j.at("kind").get<std::string>() != "extra_trees")
            throw DataError("extra_trees model: wrong component kind");
        ExtraTreesModel m;
        m.input_width = j.at("input_width").get<std::size_t>();
        m.seed = j.at("seed").get<std::uint64_t>();
        const auto& cfg = j.at("config");
        m.config.n_estimators = cfg.at("n_estimators").get<std::size_t>();
        m.config.max_depth = cfg.at("max_depth").get<std::size_t>();
        m.config.features_per_split =
            cfg.at("features_per_split").get<std::size_t>();
        for (const auto& t : j.at("trees"))
            m.trees.push_back(tree_from_json(t, what));
        if (m.trees.empty())
            throw DataError("extra_trees model: no trees");
        return m;
    });
}

inline nlohmann::json gbt_to_json(const GbtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : m.trees) trees.push_back(tree_to_json(t));
    return nlohmann::json{
        {"kind", "gbt"},
        {"input_width", m.input_width},
        {"base_score", m.base_score},
        {"config",
         {{"n_estimators", m.config.n_estimators},
          {"max_depth", m.config.max_depth},
          {"learning_rate", m.config.learning_rate},
          {"lambda", m.config.lambda},
          {"gamma", m.config.gamma},
          {"features_per_split", m.config.features_per_split},
          {"seed", m.config.seed}}},
        {"train_mse_history", m.train_mse_history},
        {"trees", trees}};
}

inline GbtModel gbt_from_json(const nlohmann::json& j) {
    const char* what = "gbt model";
    return detail::json_guard(what, [&] {
        if (j.at("kind").get<std::string>() != "gbt")
            throw DataError("gbt model: wrong component kind");
        GbtModel m;
        m.input_width = j.at("input_width").get<std::size_t>();
        m.base_score = j.at("base_score").get<double>();
        const auto& cfg = j.at("config");
        m.config.n_estimators = cfg.at("n_estimators").get<std::size_t>();
        m.config.max_depth = cfg.at("max_depth").get<std::size_t>();
        m.config.learning_rate = cfg.at("learning_rate").get<double>();
        m.config.lambda = cfg.at("lambda").get<double>();
        m.config.gamma = cfg.at("gamma").get<double>();
        m.config.features_per_split =
            cfg.at("features_per_split").get<std::size_t>();
        m.config.seed = cfg.at("seed").get<std::uint64_t>();
        m.train_mse_history =
            j.at("train_mse_history").get<std::vector<double>>();
        for (const auto& t : j.at("trees"))
            m.trees.push_back(tree_from_json(t, what));
        return m;
    });
}

inline nlohmann::json meta_gbt_to_json(const MetaGbtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : m.trees) trees.push_back(tree_to_json(t));
    return nlohmann::json{
        {"kind", "meta_gbt"},
        {"input_width", m.input_width},
        {"base_score", m.base_score},
        {"best_iteration", m.best_iteration},
        {"config",
         {{"max_estimators", m.config.max_estimators},
          {"patience", m.config.patience},
          {"validation_fraction", m.config.validation_fraction},
          {"max_depth", m.config.max_depth},
          {"learning_rate", m.config.learning_rate},
          {"lambda", m.config.lambda},
          {"gamma", m.config.gamma}}},
        {"val_history", m.val_history},
        {"trees", trees}};
}

inline MetaGbtModel meta_gbt_from_json(const nlohmann::json& j) {
    const char* what = "meta_gbt model";
    return detail::json_guard(what, [&] {
        if (j.at("kind").get<std::string>() != "meta_gbt")
            throw DataError("meta_gbt model: wrong component kind");
        MetaGbtModel m;
        m.input_width = j.at("input_width").get<std::size_t>();
        m.base_score = j.at("base_score").get<double>();
        m.best_iteration = j.at("best_iteration").get<std::size_t>();
        const auto& cfg = j.at("config");
        m.config.max_estimators = cfg.at("max_estimators").get<std::size_t>();
        m.config.patience = cfg.at("patience").get<std::size_t>();
        m.config.validation_fraction =
            cfg.at("validation_fraction").get<double>();
        m.config.max_depth = cfg.at("max_depth").get<std::size_t>();
        m.config.learning_rate = cfg.at("learning_rate").get<double>();
        m.config.lambda = cfg.at("lambda").get<double>();
        m.config.gamma = cfg.at("gamma").get<double>();
        m.val_history = j.at("val_history").get<std::vector<double>>();
        for (const auto& t : j.at("trees"))
            m.trees.push_back(tree_from_json(t, what));
        if (m.trees.size() != m.best_iteration)
            throw DataError(detail::cat("meta_gbt model: ", m.trees.size(),
                                        " trees but best_iteration is ",
                                        m.best_iteration));
        return m;
    });
}

}  // namespace spinml
