#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spinml/dataset.hpp"
#include "spinml/errors.hpp"
#include "spinml/extra_trees.hpp"
#include "spinml/gbt.hpp"
#include "spinml/meta_gbt.hpp"
#include "spinml/mlp.hpp"
#include "spinml/rng.hpp"
#include "spinml/serialize.hpp"

namespace spinml {

struct FoldPlan {
    std::size_t folds = 0;
    std::vector<std::size_t> assignments;  // row index -> fold index
};

inline FoldPlan kfold_plan(std::size_t samples, std::size_t folds,
                           RngHandle rng) {
    if (folds < 2 || folds > samples)
        throw ParameterError(detail::cat("kfold_plan: K = ", folds,
                                         " outside [2, ", samples, "]"));
    FoldPlan plan;
    plan.folds = folds;
    plan.assignments.assign(samples, 0);
    const std::vector<std::size_t> perm = rng.permutation(samples);
    // The first (samples mod K) folds absorb the remainder.
    const std::size_t base = samples / folds, extra = samples % folds;
    std::size_t at = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < len; ++i) plan.assignments[perm[at++]] = f;
    }
    return plan;
}

// Meta-feature column order. Fixed and serialized so a permuted loader can
// never silently feed the meta model shuffled columns.
inline const std::array<const char*, 3>& base_model_names() {
    static const std::array<const char*, 3> names{"mlp", "extra_trees", "gbt"};
    return names;
}

struct StackConfig {
    std::size_t folds = 5;
    MlpConfig mlp;
    ExtraTreesConfig extra_trees;
    GbtConfig gbt;
    MetaGbtConfig meta;
};

namespace detail {

// Rethrow component failures with a stage tag, preserving the dynamic type
// so exit-code mapping still sees the original class.
template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const DivergenceError& e) {
        throw DivergenceError(cat(stage, ": ", e.what()), e.iteration());
    } catch (const ParameterError& e) {
        throw ParameterError(cat(stage, ": ", e.what()));
    } catch (const DataError& e) {
        throw DataError(cat(stage, ": ", e.what()));
    } catch (const ContractError& e) {
        throw ContractError(cat(stage, ": ", e.what()));
    }
}

inline MlpConfig clamp_batch(MlpConfig cfg, std::size_t rows) {
    cfg.batch_size = std::max<std::size_t>(1, std::min(cfg.batch_size, rows));
    return cfg;
}

}  // namespace detail

// Out-of-fold predictions: for every fold, each base model is trained on the
// complement and predicts the held-out rows, so no row is ever predicted by
// a model that saw it. Columns follow base_model_names().
inline Matrix oof_predictions(const Matrix& features,
                              const std::vector<double>& targets,
                              const FoldPlan& plan, const StackConfig& config,
                              RngHandle rng) {
    const std::size_t n = features.rows();
    if (targets.size() != n)
        throw ParameterError(detail::cat("oof_predictions: ", n, " rows vs ",
                                         targets.size(), " targets"));
    if (plan.assignments.size() != n || plan.folds < 2)
        throw ContractError(detail::cat("oof_predictions: plan covers ",
                                        plan.assignments.size(),
                                        " rows, features have ", n));
    for (const std::size_t f : plan.assignments)
        if (f >= plan.folds)
            throw ContractError(detail::cat("oof_predictions: fold index ", f,
                                            " out of range ", plan.folds));

    Matrix out(n, 3);
    for (std::size_t f = 0; f < plan.folds; ++f) {
        std::vector<std::size_t> hold, rest;
        for (std::size_t i = 0; i < n; ++i)
            (plan.assignments[i] == f ? hold : rest).push_back(i);
        if (hold.empty() || rest.empty())
            throw ContractError(detail::cat("oof_predictions: fold ", f,
                                            " leaves ", rest.size(),
                                            " training rows"));
        const Matrix xt = take_rows(features, rest);
        const Matrix xh = take_rows(features, hold);
        const std::vector<double> yt = take(targets, rest);

        const auto tag = [&](const char* model) {
            return detail::cat("fold ", f, " ", model);
        };
        const MlpModel mlp = detail::staged(tag("mlp"), [&] {
            return mlp_fit(xt, yt, detail::clamp_batch(config.mlp, rest.size()),
                           rng.substream(3 * f));
        });
        const ExtraTreesModel extra = detail::staged(tag("extra_trees"), [&] {
            return extratrees_fit(xt, yt, config.extra_trees,
                                  rng.substream(3 * f + 1));
        });
        GbtConfig gcfg = config.gbt;
        gcfg.seed = rng.substream(3 * f + 2).seed();
        const GbtModel gbt =
            detail::staged(tag("gbt"), [&] { return gbt_fit(xt, yt, gcfg); });

        const std::vector<double> pm = mlp.predict(xh);
        const std::vector<double> pe = extra.predict(xh);
        const std::vector<double> pg = gbt.predict(xh);
        for (std::size_t i = 0; i < hold.size(); ++i) {
            out(hold[i], 0) = pm[i];
            out(hold[i], 1) = pe[i];
            out(hold[i], 2) = pg[i];
        }
    }
    for (const double v : out.data())
        if (!std::isfinite(v))
            throw ContractError("oof_predictions: non-finite base prediction");
    return out;
}

// The assembled stack: feature standardizer, three full-data base models,
// and a holdout-tuned boosted combiner trained only on out-of-fold columns.
struct StackedEnsemble {
    Standardizer standardizer;
    FoldPlan plan;
    MlpModel mlp;
    ExtraTreesModel extra_trees;
    GbtModel gbt;
    MetaGbtModel meta;
    std::uint64_t seed = 0;
};

inline StackedEnsemble fit_stack(const Dataset& train, const StackConfig& config,
                                 RngHandle rng) {
    const std::size_t n = train.size();
    if (n < 5 * config.folds)
        throw ParameterError(detail::cat("fit_stack: ", n,
                                         " samples cannot support ",
                                         config.folds, " folds (need ",
                                         5 * config.folds, ")"));

    StackedEnsemble e;
    e.seed = rng.seed();
    e.standardizer = detail::staged("standardize", [&] {
        return fit_standardizer(train.features);
    });
    const Matrix x = apply_standardizer(e.standardizer, train.features);

    e.plan = kfold_plan(n, config.folds, rng.substream(0));
    const Matrix oof =
        oof_predictions(x, train.targets, e.plan, config, rng.substream(1));

    e.meta = detail::staged("meta", [&] {
        return meta_gbt_fit(oof, train.targets, config.meta, rng.substream(2));
    });

    e.mlp = detail::staged("final mlp", [&] {
        return mlp_fit(x, train.targets, detail::clamp_batch(config.mlp, n),
                       rng.substream(3));
    });
    e.extra_trees = detail::staged("final extra_trees", [&] {
        return extratrees_fit(x, train.targets, config.extra_trees,
                              rng.substream(4));
    });
    GbtConfig gcfg = config.gbt;
    gcfg.seed = rng.substream(5).seed();
    e.gbt = detail::staged("final gbt", [&] {
        return gbt_fit(x, train.targets, gcfg);
    });
    return e;
}

inline std::vector<double> stack_predict(const StackedEnsemble& e,
                                         const Matrix& raw_features) {
    if (raw_features.cols() != e.standardizer.means.size())
        throw ParameterError(detail::cat("stack_predict: expected ",
                                         e.standardizer.means.size(),
                                         " features, got ",
                                         raw_features.cols()));
    if (raw_features.rows() == 0) return {};
    const Matrix x = apply_standardizer(e.standardizer, raw_features);
    const std::vector<double> pm = e.mlp.predict(x);
    const std::vector<double> pe = e.extra_trees.predict(x);
    const std::vector<double> pg = e.gbt.predict(x);
    Matrix meta_in(x.rows(), 3);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        meta_in(i, 0) = pm[i];
        meta_in(i, 1) = pe[i];
        meta_in(i, 2) = pg[i];
    }
    std::vector<double> out = e.meta.predict(meta_in);
    for (double& v : out) v = std::max(v, 0.0);  // negativity is nonnegative
    return out;
}

inline nlohmann::json fold_plan_to_json(const FoldPlan& p) {
    return nlohmann::json{{"folds", p.folds}, {"assignments", p.assignments}};
}

inline FoldPlan fold_plan_from_json(const nlohmann::json& j) {
    return detail::json_guard("fold plan", [&] {
        FoldPlan p;
        p.folds = j.at("folds").get<std::size_t>();
        p.assignments = j.at("assignments").get<std::vector<std::size_t>>();
        for (const std::size_t f : p.assignments)
            if (f >= p.folds)
                throw DataError(detail::cat("fold plan: assignment ", f,
                                            " out of range ", p.folds));
        return p;
    });
}

// Container layout: schema version, a manifest of per-component checksums,
// and the component blobs themselves. The checksum is computed over each
// component's compact JSON text.
inline constexpr int kEnsembleSchemaVersion = 1;

inline void save_ensemble(const StackedEnsemble& e, const std::string& path) {
    nlohmann::json components{
        {"standardizer", standardizer_to_json(e.standardizer)},
        {"fold_plan", fold_plan_to_json(e.plan)},
        {"mlp", mlp_to_json(e.mlp)},
        {"extra_trees", extratrees_to_json(e.extra_trees)},
        {"gbt", gbt_to_json(e.gbt)},
        {"meta", meta_gbt_to_json(e.meta)}};
    nlohmann::json manifest;
    for (const auto& [name, blob] : components.items())
        manifest[name] = fnv1a64(blob.dump());

    const nlohmann::json root{{"schema_version", kEnsembleSchemaVersion},
                              {"column_order", base_model_names()},
                              {"seed", e.seed},
                              {"manifest", manifest},
                              {"components", components}};
    std::ofstream out(path);
    if (!out)
        throw DataError(detail::cat("save_ensemble: cannot write ", path));
    out << root.dump(1, '\t') << '\n';
    if (!out)
        throw DataError(detail::cat("save_ensemble: short write to ", path));
}

inline StackedEnsemble load_ensemble(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError(detail::cat("load_ensemble: cannot open ", path));
    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(detail::cat("load_ensemble: ", path,
                                    " is not valid JSON (", ex.what(), ")"));
    }
    return detail::json_guard("ensemble container", [&] {
        const int version = root.at("schema_version").get<int>();
        if (version != kEnsembleSchemaVersion)
            throw DataError(detail::cat("load_ensemble: schema_version ",
                                        version, ", expected ",
                                        kEnsembleSchemaVersion));
        const auto order = root.at("column_order").get<std::vector<std::string>>();
        const auto& names = base_model_names();
        if (order.size() != names.size() ||
            !std::equal(order.begin(), order.end(), names.begin()))
            throw DataError("load_ensemble: unexpected meta column order");

        const nlohmann::json& manifest = root.at("manifest");
        const nlohmann::json& components = root.at("components");
        for (const auto& [name, blob] : components.items()) {
            const std::uint64_t want = manifest.at(name).get<std::uint64_t>();
            const std::uint64_t got = fnv1a64(blob.dump());
            if (want != got)
                throw DataError(detail::cat("load_ensemble: checksum mismatch "
                                            "in component ", name));
        }

        StackedEnsemble e;
        e.seed = root.at("seed").get<std::uint64_t>();
        e.standardizer = standardizer_from_json(components.at("standardizer"));
        e.plan = fold_plan_from_json(components.at("fold_plan"));
        e.mlp = mlp_from_json(components.at("mlp"));
        e.extra_trees = extratrees_from_json(components.at("extra_trees"));
        e.gbt = gbt_from_json(components.at("gbt"));
        e.meta = meta_gbt_from_json(components.at("meta"));
        if (e.meta.input_width != 3)
            throw DataError(detail::cat("load_ensemble: meta model expects ",
                                        e.meta.input_width,
                                        " columns, stack provides 3"));
        if (e.mlp.input_width() != e.standardizer.means.size() ||
            e.extra_trees.input_width != e.standardizer.means.size() ||
            e.gbt.input_width != e.standardizer.means.size())
            throw DataError("load_ensemble: base model widths disagree with "
                            "the standardizer");
        return e;
    });
}

}  // namespace spinml
