#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spinml/dataset.hpp"
#include "spinml/errors.hpp"
#include "spinml/metrics.hpp"
#include "spinml/negativity.hpp"
#include "spinml/serialize.hpp"
#include "spinml/stacking.hpp"

namespace spinml {

// Largest negativity any state of this pair can reach. The normalize flag
// rescales emitted curve and scatter values by this bound; metrics always
// stay on the raw scale.
inline double negativity_cap(const SpinPair& pair) {
    return 0.5 * (std::min(pair.d1(), pair.d2()) - 1);
}

// A prediction this far above zero counts as detected entanglement when
// scanning a Werner curve for its threshold crossing.
inline constexpr double kDetectionFloor = 0.01;

inline constexpr double kTrainFraction = 0.8;

inline std::vector<double> linspace_grid(double lo, double hi, std::size_t points) {
    if (points < 2 || !(lo < hi))
        throw ParameterError(detail::cat(
            "linspace_grid: need at least 2 points and lo < hi, got ", points,
            " on [", lo, ", ", hi, "]"));
    std::vector<double> g(points);
    for (std::size_t k = 0; k < points; ++k)
        g[k] = lo + (hi - lo) * static_cast<double>(k) /
                        static_cast<double>(points - 1);
    g.front() = lo;
    g.back() = hi;
    return g;
}

inline std::vector<double> default_theta_grid() {
    return linspace_grid(0.0, 0.5 * std::numbers::pi, 41);
}

inline std::vector<double> default_alpha_grid() {
    return linspace_grid(0.0, 1.0, 41);
}

struct ExperimentConfig {
    std::string family = "pure";  // pure | werner
    HalfInt j1 = HalfInt::from_twice(1);
    HalfInt j2 = HalfInt::from_twice(1);
    std::size_t samples = 0;              // 0 = family/spin default
    std::uint64_t seed = 1;
    std::optional<FeatureLayout> layout;  // unset = family/spin default
    StackConfig stack;
    bool normalize_negativity = false;
    std::string out_dir = ".";  // locator only, never part of the config hash
};

inline void validate_family(const ExperimentConfig& c) {
    if (c.family != "pure" && c.family != "werner")
        throw ParameterError(detail::cat("unknown family '", c.family,
                                         "' (expected pure or werner)"));
    if (c.family == "werner" && !(c.j1 == c.j2))
        throw ParameterError(detail::cat("werner family needs equal spins, got j1 = ",
                                         c.j1.str(), ", j2 = ", c.j2.str()));
}

inline SpinPair experiment_pair(const ExperimentConfig& c) {
    validate_family(c);
    return SpinPair{c.j1, c.j2};
}

// Desk-scale sample counts: enough rows for the headline accuracy targets
// without leaving laptop territory.
inline std::size_t resolved_samples(const ExperimentConfig& c) {
    if (c.samples > 0) return c.samples;
    if (c.family == "pure" && c.j1 == c.j2) {
        switch (c.j1.twice()) {
            case 1: return 10000;
            case 2: return 20000;
            case 10: return 30000;
            default: break;
        }
    }
    return 10000;
}

// Pure states keep their amplitude vector. Werner mixtures default to the
// full real/imag density layout while it stays narrow and switch to the
// upper-triangle encoding once the full layout would pass 1000 columns.
inline FeatureLayout resolved_layout(const ExperimentConfig& c) {
    const SpinPair pair = experiment_pair(c);
    if (c.family == "pure") {
        if (c.layout && *c.layout != FeatureLayout::pure_amplitudes)
            throw ParameterError(detail::cat(
                "family pure uses the pure_amplitudes layout, not ",
                layout_name(*c.layout)));
        return FeatureLayout::pure_amplitudes;
    }
    if (c.layout) {
        if (*c.layout == FeatureLayout::pure_amplitudes)
            throw ParameterError(
                "family werner needs a density layout (density_full or density_compact)");
        return *c.layout;
    }
    return feature_width(pair, FeatureLayout::density_full) > 1000
               ? FeatureLayout::density_compact
               : FeatureLayout::density_full;
}

// Canonical echo of everything that shapes the run's bytes. out_dir is
// deliberately absent so the same experiment hashes the same wherever its
// files land.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    const FeatureLayout layout = resolved_layout(c);
    return nlohmann::json{
        {"family", c.family},
        {"j1", c.j1.str()},
        {"j2", c.j2.str()},
        {"samples", resolved_samples(c)},
        {"seed", c.seed},
        {"layout", layout_name(layout)},
        {"folds", c.stack.folds},
        {"normalize_negativity", c.normalize_negativity},
        {"mlp",
         {{"hidden", c.stack.mlp.hidden},
          {"optimizer", optimizer_name(c.stack.mlp.optimizer)},
          {"learning_rate", c.stack.mlp.learning_rate},
          {"momentum", c.stack.mlp.momentum},
          {"lr_floor", c.stack.mlp.lr_floor},
          {"epochs", c.stack.mlp.epochs},
          {"batch_size", c.stack.mlp.batch_size}}},
        {"extra_trees",
         {{"n_estimators", c.stack.extra_trees.n_estimators},
          {"max_depth", c.stack.extra_trees.max_depth},
          {"features_per_split", c.stack.extra_trees.features_per_split}}},
        {"gbt",
         {{"n_estimators", c.stack.gbt.n_estimators},
          {"max_depth", c.stack.gbt.max_depth},
          {"learning_rate", c.stack.gbt.learning_rate},
          {"lambda", c.stack.gbt.lambda},
          {"gamma", c.stack.gbt.gamma},
          {"features_per_split", c.stack.gbt.features_per_split}}},
        {"meta",
         {{"max_estimators", c.stack.meta.max_estimators},
          {"patience", c.stack.meta.patience},
          {"validation_fraction", c.stack.meta.validation_fraction},
          {"max_depth", c.stack.meta.max_depth},
          {"learning_rate", c.stack.meta.learning_rate},
          {"lambda", c.stack.meta.lambda},
          {"gamma", c.stack.meta.gamma}}},
    };
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    return detail::json_guard("experiment config", [&] {
        ExperimentConfig c;
        c.family = j.at("family").get<std::string>();
        c.j1 = HalfInt::parse(j.at("j1").get<std::string>());
        c.j2 = HalfInt::parse(j.at("j2").get<std::string>());
        c.samples = j.at("samples").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.layout = parse_layout(j.at("layout").get<std::string>());
        c.stack.folds = j.at("folds").get<std::size_t>();
        c.normalize_negativity = j.at("normalize_negativity").get<bool>();
        const nlohmann::json& m = j.at("mlp");
        c.stack.mlp.hidden = m.at("hidden").get<std::vector<std::size_t>>();
        c.stack.mlp.optimizer =
            parse_optimizer(m.at("optimizer").get<std::string>());
        c.stack.mlp.learning_rate = m.at("learning_rate").get<double>();
        c.stack.mlp.momentum = m.at("momentum").get<double>();
        c.stack.mlp.lr_floor = m.at("lr_floor").get<double>();
        c.stack.mlp.epochs = m.at("epochs").get<std::size_t>();
        c.stack.mlp.batch_size = m.at("batch_size").get<std::size_t>();
        const nlohmann::json& et = j.at("extra_trees");
        c.stack.extra_trees.n_estimators = et.at("n_estimators").get<std::size_t>();
        c.stack.extra_trees.max_depth = et.at("max_depth").get<std::size_t>();
        c.stack.extra_trees.features_per_split =
            et.at("features_per_split").get<std::size_t>();
        const nlohmann::json& g = j.at("gbt");
        c.stack.gbt.n_estimators = g.at("n_estimators").get<std::size_t>();
        c.stack.gbt.max_depth = g.at("max_depth").get<std::size_t>();
        c.stack.gbt.learning_rate = g.at("learning_rate").get<double>();
        c.stack.gbt.lambda = g.at("lambda").get<double>();
        c.stack.gbt.gamma = g.at("gamma").get<double>();
        c.stack.gbt.features_per_split = g.at("features_per_split").get<std::size_t>();
        const nlohmann::json& mg = j.at("meta");
        c.stack.meta.max_estimators = mg.at("max_estimators").get<std::size_t>();
        c.stack.meta.patience = mg.at("patience").get<std::size_t>();
        c.stack.meta.validation_fraction = mg.at("validation_fraction").get<double>();
        c.stack.meta.max_depth = mg.at("max_depth").get<std::size_t>();
        c.stack.meta.learning_rate = mg.at("learning_rate").get<double>();
        c.stack.meta.lambda = mg.at("lambda").get<double>();
        c.stack.meta.gamma = mg.at("gamma").get<double>();
        return c;
    });
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
    return fnv1a64(config_to_json(c).dump());
}

inline std::string config_hash_hex(const ExperimentConfig& c) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(config_hash(c)));
    return std::string(buf);
}

struct ModelEval {
    std::string name;
    MetricsReport metrics;
    // Identity would be slope 1, intercept 0; NaN when the test targets
    // are constant and no line exists.
    LineFit line{std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN()};
};

inline ModelEval evaluate_model(std::string name,
                                const std::vector<double>& actual,
                                const std::vector<double>& predicted) {
    ModelEval ev;
    ev.name = std::move(name);
    ev.metrics = compute_metrics(actual, predicted);
    if (!ev.metrics.degenerate) ev.line = line_fit(actual, predicted);
    return ev;
}

struct ExperimentReport {
    nlohmann::json config_echo;
    std::string config_hash_hex;
    nlohmann::json dataset_echo;
    SplitPlan split_plan;
    std::vector<ModelEval> models;  // mlp, extra_trees, gbt, ensemble
    StackedEnsemble ensemble;
    std::map<std::string, double> timings_seconds;
    nlohmann::json artifacts = nlohmann::json::object();
};

inline const ModelEval& eval_for(const ExperimentReport& r, std::string_view name) {
    for (const ModelEval& ev : r.models)
        if (ev.name == name) return ev;
    throw ContractError(detail::cat("report has no evaluation named '", name, "'"));
}

inline nlohmann::json experiment_report_json(const ExperimentReport& r) {
    nlohmann::json models = nlohmann::json::array();
    for (const ModelEval& ev : r.models)
        models.push_back({{"name", ev.name},
                          {"mse", ev.metrics.mse},
                          {"mae", ev.metrics.mae},
                          {"r2", ev.metrics.r2},
                          {"n", ev.metrics.n},
                          {"degenerate", ev.metrics.degenerate},
                          {"slope", ev.line.slope},
                          {"intercept", ev.line.intercept}});
    nlohmann::json config = r.config_echo;
    config["hash"] = r.config_hash_hex;
    return nlohmann::json{
        {"schema_version", 1},
        {"config", std::move(config)},
        {"dataset", r.dataset_echo},
        {"split",
         {{"train_fraction", r.split_plan.ratio},
          {"train_rows", r.split_plan.train_indices.size()},
          {"test_rows", r.split_plan.test_indices.size()},
          {"train_indices", r.split_plan.train_indices},
          {"test_indices", r.split_plan.test_indices}}},
        {"models", std::move(models)},
        {"artifacts", r.artifacts},
    };
}

namespace detail {

inline std::string stage_tag(const char* stage, const std::string& hash_hex) {
    return cat("stage ", stage, " (config ", hash_hex, ")");
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::binary);
    f << j.dump(1, '\t') << '\n';
    if (!f) throw DataError(cat("failed writing '", path, "'"));
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw DataError(cat("failed writing '", path, "'"));
}

// Every CSV travels with a sidecar declaring its shape, so a reader can
// detect truncation without guessing.
inline void write_csv_sidecar(const std::string& csv_path,
                              const std::vector<std::string>& columns,
                              std::size_t rows,
                              nlohmann::json extra = nlohmann::json::object()) {
    extra["columns"] = columns;
    extra["rows"] = rows;
    write_json_file(csv_path + ".meta", extra);
}

class CsvFile {
public:
    explicit CsvFile(const std::string& path)
        : path_(path), f_(std::fopen(path.c_str(), "wb")) {
        if (!f_) throw DataError(cat("cannot open '", path, "' for writing"));
    }
    CsvFile(const CsvFile&) = delete;
    CsvFile& operator=(const CsvFile&) = delete;
    ~CsvFile() {
        if (f_) std::fclose(f_);
    }

    void field(const std::string& text) {
        sep();
        std::fputs(text.c_str(), f_);
    }
    void field(double v) {
        sep();
        std::fprintf(f_, "%.17g", v);
    }
    void field(std::size_t v) {
        sep();
        std::fprintf(f_, "%zu", v);
    }
    void endrow() {
        std::fputc('\n', f_);
        first_ = true;
    }
    void close() {
        std::FILE* f = f_;
        f_ = nullptr;
        if (std::fclose(f) != 0)
            throw DataError(cat("failed writing '", path_, "'"));
    }

private:
    void sep() {
        if (!first_) std::fputc(',', f_);
        first_ = false;
    }

    std::string path_;
    std::FILE* f_;
    bool first_ = true;
};

inline void write_scatter_csv(const std::string& path,
                              const std::vector<double>& actual,
                              const std::vector<double>& predicted,
                              double scale, bool normalized) {
    CsvFile csv(path);
    csv.field(std::string("actual"));
    csv.field(std::string("predicted"));
    csv.endrow();
    for (std::size_t i = 0; i < actual.size(); ++i) {
        csv.field(actual[i] * scale);
        csv.field(predicted[i] * scale);
        csv.endrow();
    }
    csv.close();
    write_csv_sidecar(path, {"actual", "predicted"}, actual.size(),
                      nlohmann::json{{"normalized", normalized}});
}

}  // namespace detail

// One full protocol run: build a dataset, hold out a test slice, fit the
// stacked ensemble on the rest, and score the three refit base models plus
// the stack on rows none of them saw. With emit_files the out_dir receives
// report.json, one scatter CSV per model, and a timings.json sidecar
// (timings stay out of report.json so equal configs produce byte-identical
// reports).
inline ExperimentReport run_pipeline(const ExperimentConfig& config,
                                     bool emit_files = true) {
    const std::size_t samples = resolved_samples(config);
    const FeatureLayout layout = resolved_layout(config);
    const SpinPair pair = experiment_pair(config);

    ExperimentReport report;
    report.config_echo = config_to_json(config);
    report.config_hash_hex = config_hash_hex(config);

    const RngHandle root(config.seed);
    auto timed = [&](const char* name, auto&& fn) -> decltype(fn()) {
        const auto start = std::chrono::steady_clock::now();
        auto finish = [&] {
            report.timings_seconds[name] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                              start)
                    .count();
        };
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                detail::staged(detail::stage_tag(name, report.config_hash_hex),
                               std::forward<decltype(fn)>(fn));
                finish();
            } else {
                auto value = detail::staged(
                    detail::stage_tag(name, report.config_hash_hex),
                    std::forward<decltype(fn)>(fn));
                finish();
                return value;
            }
        } catch (...) {
            finish();
            throw;
        }
    };

    const Dataset ds = timed("generate", [&] {
        RngHandle gen = root.substream(0);
        return config.family == "pure"
                   ? build_pure_dataset(pair, samples, gen)
                   : build_werner_dataset(config.j1, samples, layout, gen);
    });
    report.dataset_echo = nlohmann::json{
        {"family", ds.meta.family},
        {"j1", ds.meta.pair.j1.str()},
        {"j2", ds.meta.pair.j2.str()},
        {"layout", layout_name(ds.meta.layout)},
        {"samples", ds.meta.size},
        {"generator_seed", ds.meta.seed},
        {"generator_version", ds.meta.generator_version},
    };

    report.split_plan = timed("split", [&] {
        RngHandle srng = root.substream(1);
        return split(ds, kTrainFraction, srng);
    });
    const SplitPlan& plan = report.split_plan;

    report.ensemble = timed("fit", [&] {
        Dataset train{take_rows(ds.features, plan.train_indices),
                      take(ds.targets, plan.train_indices),
                      DatasetMeta{ds.meta.pair, ds.meta.family, ds.meta.seed,
                                  ds.meta.layout, plan.train_indices.size(),
                                  ds.meta.generator_version, {}}};
        train.meta.provenance.reserve(plan.train_indices.size());
        for (const std::size_t i : plan.train_indices)
            train.meta.provenance.push_back(ds.meta.provenance[i]);
        train.check_invariants();
        return fit_stack(train, config.stack, root.substream(2));
    });
    const StackedEnsemble& e = report.ensemble;

    std::vector<double> test_actual;
    std::vector<std::vector<double>> test_predicted;
    timed("evaluate", [&] {
        const Matrix raw = take_rows(ds.features, plan.test_indices);
        test_actual = take(ds.targets, plan.test_indices);
        const Matrix xs = apply_standardizer(e.standardizer, raw);
        test_predicted.push_back(e.mlp.predict(xs));
        test_predicted.push_back(e.extra_trees.predict(xs));
        test_predicted.push_back(e.gbt.predict(xs));
        test_predicted.push_back(stack_predict(e, raw));
        const char* names[] = {"mlp", "extra_trees", "gbt", "ensemble"};
        for (std::size_t m = 0; m < 4; ++m)
            report.models.push_back(
                evaluate_model(names[m], test_actual, test_predicted[m]));
    });

    if (emit_files) {
        timed("write", [&] {
            namespace fs = std::filesystem;
            fs::create_directories(config.out_dir);
            const double scale = config.normalize_negativity
                                     ? 1.0 / negativity_cap(pair)
                                     : 1.0;
            for (std::size_t m = 0; m < report.models.size(); ++m) {
                const std::string base = "scatter_" + report.models[m].name + ".csv";
                detail::write_scatter_csv((fs::path(config.out_dir) / base).string(),
                                          test_actual, test_predicted[m], scale,
                                          config.normalize_negativity);
                report.artifacts[report.models[m].name] =
                    nlohmann::json{{"path", base}, {"rows", test_actual.size()}};
            }
            detail::write_json_file(
                (fs::path(config.out_dir) / "report.json").string(),
                experiment_report_json(report));
            nlohmann::json timings = nlohmann::json::object();
            for (const auto& [stage, seconds] : report.timings_seconds)
                timings[stage] = seconds;
            detail::write_json_file(
                (fs::path(config.out_dir) / "timings.json").string(), timings);
        });
    }
    return report;
}

struct SweepObservation {
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::vector<ModelEval> models;
};

struct SweepFailure {
    std::size_t samples = 0;
    std::string message;
};

struct SampleSweep {
    std::string family;
    HalfInt j1;
    HalfInt j2;
    std::vector<SweepObservation> rows;
    std::vector<SweepFailure> failures;
};

// One pipeline run per size on a fresh dataset whose seed is derived from
// (sweep seed, size), so growing the sweep never reshuffles earlier points.
// A failed size is recorded and the sweep moves on.
inline SampleSweep sweep_samples(const ExperimentConfig& base,
                                 const std::vector<std::size_t>& sizes) {
    if (sizes.empty()) throw ParameterError("sweep_samples: no sizes given");
    for (std::size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] <= sizes[i - 1])
            throw ParameterError(detail::cat(
                "sweep_samples: sizes must be strictly ascending, got ",
                sizes[i - 1], " then ", sizes[i]));
    validate_family(base);

    SampleSweep sweep{base.family, base.j1, base.j2, {}, {}};
    const RngHandle root(base.seed);
    for (const std::size_t S : sizes) {
        ExperimentConfig cfg = base;
        cfg.samples = S;
        cfg.seed = root.substream(S).seed();
        try {
            ExperimentReport rep = run_pipeline(cfg, false);
            sweep.rows.push_back(SweepObservation{S, cfg.seed, std::move(rep.models)});
        } catch (const Error& err) {
            sweep.failures.push_back(SweepFailure{S, err.what()});
        }
    }
    return sweep;
}

inline std::string sweep_spin_label(const SampleSweep& sweep) {
    if (sweep.j1 == sweep.j2) return sweep.j1.str();
    return sweep.j1.str() + "+" + sweep.j2.str();
}

inline const std::string& sample_sweep_header() {
    static const std::string header = "samples,family,j,model,mse,mae,r2";
    return header;
}

inline void write_sample_sweep_csv(const SampleSweep& sweep,
                                   const std::string& path) {
    detail::CsvFile csv(path);
    csv.field(std::string("samples"));
    csv.field(std::string("family"));
    csv.field(std::string("j"));
    csv.field(std::string("model"));
    csv.field(std::string("mse"));
    csv.field(std::string("mae"));
    csv.field(std::string("r2"));
    csv.endrow();
    std::size_t rows = 0;
    const std::string spin = sweep_spin_label(sweep);
    for (const SweepObservation& obs : sweep.rows)
        for (const ModelEval& ev : obs.models) {
            csv.field(obs.samples);
            csv.field(sweep.family);
            csv.field(spin);
            csv.field(ev.name);
            csv.field(ev.metrics.mse);
            csv.field(ev.metrics.mae);
            csv.field(ev.metrics.r2);
            csv.endrow();
            ++rows;
        }
    csv.close();
    nlohmann::json failures = nlohmann::json::array();
    for (const SweepFailure& f : sweep.failures)
        failures.push_back({{"samples", f.samples}, {"message", f.message}});
    detail::write_csv_sidecar(
        path, {"samples", "family", "j", "model", "mse", "mae", "r2"}, rows,
        nlohmann::json{{"failures", std::move(failures)}});
}

// Reads rows for one model back out of a sweep CSV as scaling-law records.
// The sidecar row count is enforced when the sidecar is present.
inline std::vector<ScalingRecord> parse_sample_sweep_csv(
    const std::string& path, const std::string& model = "ensemble") {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError(detail::cat("cannot open sweep log '", path, "'"));
    std::string line;
    if (!std::getline(f, line) || line != sample_sweep_header())
        throw DataError(detail::cat("sweep log '", path,
                                    "' does not start with the header '",
                                    sample_sweep_header(), "'"));
    std::vector<ScalingRecord> records;
    std::size_t rows = 0;
    for (std::size_t lineno = 2; std::getline(f, line); ++lineno) {
        if (line.empty()) continue;
        ++rows;
        std::vector<std::string> fields;
        std::size_t at = 0;
        while (true) {
            const std::size_t comma = line.find(',', at);
            fields.push_back(line.substr(at, comma - at));
            if (comma == std::string::npos) break;
            at = comma + 1;
        }
        if (fields.size() != 7)
            throw DataError(detail::cat("sweep log '", path, "' line ", lineno,
                                        " has ", fields.size(),
                                        " fields (expected 7)"));
        if (fields[3] != model) continue;
        auto num = [&](const std::string& text, const char* what) {
            char* end = nullptr;
            const double v = std::strtod(text.c_str(), &end);
            if (end == text.c_str() || *end != '\0')
                throw DataError(detail::cat("sweep log '", path, "' line ",
                                            lineno, ": unreadable ", what, " '",
                                            text, "'"));
            return v;
        };
        records.push_back(ScalingRecord{num(fields[2], "spin"),
                                        num(fields[4], "mse"),
                                        num(fields[5], "mae"),
                                        num(fields[6], "r2"),
                                        num(fields[0], "sample count")});
    }
    const std::string sidecar = path + ".meta";
    if (std::filesystem::exists(sidecar)) {
        nlohmann::json meta;
        try {
            std::ifstream mf(sidecar, std::ios::binary);
            mf >> meta;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(detail::cat("unreadable sidecar '", sidecar, "': ",
                                        e.what()));
        }
        const std::size_t declared =
            detail::json_guard("sweep log sidecar", [&] {
                return meta.at("rows").get<std::size_t>();
            });
        if (declared != rows)
            throw DataError(detail::cat("sweep log '", path, "' has ", rows,
                                        " data rows but its sidecar declares ",
                                        declared));
    }
    return records;
}

struct CurvePoint {
    double x = 0.0;
    double exact = 0.0;
    double predicted = 0.0;
};

struct CurveSweep {
    std::string variable;
    std::vector<CurvePoint> points;
    double max_abs_error = 0.0;
};

// Exact-vs-predicted negativity along the partially entangled pure family.
// The closed form picks up sin/cos rounding at the two product-state
// endpoints, where the true value is exactly zero; those are pinned.
inline CurveSweep sweep_theta(const StackedEnsemble& ensemble, HalfInt j,
                              const std::vector<double>& grid) {
    if (grid.empty()) throw ParameterError("sweep_theta: empty grid");
    const SpinPair pair = SpinPair::equal(j);
    const std::size_t width = feature_width(pair, FeatureLayout::pure_amplitudes);
    if (width != ensemble.standardizer.means.size())
        throw ParameterError(detail::cat(
            "sweep_theta: ensemble expects ", ensemble.standardizer.means.size(),
            " features but spin ", j.str(), " amplitude vectors have ", width));

    Matrix feats(grid.size(), width);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const FeatureVector fv = featurize_pure(zeta_state(j, grid[i]));
        std::copy(fv.values.begin(), fv.values.end(), feats.row(i));
    }
    const std::vector<double> predicted = stack_predict(ensemble, feats);

    const double half_pi = 0.5 * std::numbers::pi;
    CurveSweep sweep{"theta", {}, 0.0};
    sweep.points.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double theta = grid[i];
        const double exact = (theta == 0.0 || theta == half_pi)
                                 ? 0.0
                                 : zeta_negativity_closed_form(theta);
        sweep.points.push_back(CurvePoint{theta, exact, predicted[i]});
        sweep.max_abs_error =
            std::max(sweep.max_abs_error, std::fabs(exact - predicted[i]));
    }
    return sweep;
}

struct AlphaSweep {
    CurveSweep curve;
    double exact_threshold = 0.0;
    double predicted_threshold = std::numeric_limits<double>::quiet_NaN();
    bool predicted_crossed = false;
};

// Exact-vs-predicted negativity along the Werner mixing axis, plus the first
// grid point where the prediction clears the detection floor. Thresholds are
// read off the raw predictions even when emitted curves are normalized.
inline AlphaSweep sweep_alpha(const StackedEnsemble& ensemble, HalfInt j,
                              FeatureLayout layout,
                              const std::vector<double>& grid) {
    if (grid.empty()) throw ParameterError("sweep_alpha: empty grid");
    if (layout == FeatureLayout::pure_amplitudes)
        throw ParameterError(
            "sweep_alpha: layout must be density_full or density_compact");
    const SpinPair pair = SpinPair::equal(j);
    const std::size_t width = feature_width(pair, layout);
    if (width != ensemble.standardizer.means.size())
        throw ParameterError(detail::cat(
            "sweep_alpha: ensemble expects ", ensemble.standardizer.means.size(),
            " features but spin ", j.str(), " ", layout_name(layout),
            " rows have ", width));

    Matrix feats(grid.size(), width);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const FeatureVector fv = featurize_density(werner_state(j, grid[i]), layout);
        std::copy(fv.values.begin(), fv.values.end(), feats.row(i));
    }
    const std::vector<double> predicted = stack_predict(ensemble, feats);

    AlphaSweep sweep;
    sweep.curve.variable = "alpha";
    sweep.curve.points.reserve(grid.size());
    sweep.exact_threshold = werner_alpha_threshold(j);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double alpha = grid[i];
        const double exact = werner_negativity_closed_form(j, alpha);
        sweep.curve.points.push_back(CurvePoint{alpha, exact, predicted[i]});
        sweep.curve.max_abs_error =
            std::max(sweep.curve.max_abs_error, std::fabs(exact - predicted[i]));
        if (!sweep.predicted_crossed && predicted[i] > kDetectionFloor) {
            sweep.predicted_crossed = true;
            sweep.predicted_threshold = alpha;
        }
    }
    return sweep;
}

inline void write_curve_csv(const CurveSweep& sweep, const std::string& path,
                            double scale = 1.0, bool normalized = false,
                            nlohmann::json extra = nlohmann::json::object()) {
    detail::CsvFile csv(path);
    csv.field(sweep.variable);
    csv.field(std::string("exact"));
    csv.field(std::string("predicted"));
    csv.endrow();
    for (const CurvePoint& p : sweep.points) {
        csv.field(p.x);
        csv.field(p.exact * scale);
        csv.field(p.predicted * scale);
        csv.endrow();
    }
    csv.close();
    extra["normalized"] = normalized;
    detail::write_csv_sidecar(path, {sweep.variable, "exact", "predicted"},
                              sweep.points.size(), std::move(extra));
}

struct ModelComparison {
    ExperimentReport report;
    std::string table;
};

inline std::string comparison_table(const std::vector<ModelEval>& models) {
    auto find = [&](std::string_view name) -> const ModelEval& {
        for (const ModelEval& ev : models)
            if (ev.name == name) return ev;
        throw ContractError(detail::cat("comparison is missing model '", name, "'"));
    };
    struct Row {
        const char* label;
        const char* name;
    };
    static constexpr Row rows[] = {{"MLP", "mlp"},
                                   {"GBT", "gbt"},
                                   {"ExtraTrees", "extra_trees"},
                                   {"Ensemble", "ensemble"}};
    char line[160];
    std::string table;
    std::snprintf(line, sizeof line, "%-12s %13s %13s %13s\n", "model", "mse",
                  "mae", "r2");
    table += line;
    for (const Row& row : rows) {
        const ModelEval& ev = find(row.name);
        std::snprintf(line, sizeof line, "%-12s %13.6e %13.6e %13.6f\n",
                      row.label, ev.metrics.mse, ev.metrics.mae, ev.metrics.r2);
        table += line;
    }
    return table;
}

// Side-by-side accuracy table for the three base models and the stack,
// emitted as aligned text and as CSV next to the pipeline artifacts.
inline ModelComparison compare_models(const ExperimentConfig& config,
                                      bool emit_files = true) {
    ModelComparison cmp{run_pipeline(config, emit_files), {}};
    cmp.table = comparison_table(cmp.report.models);
    if (emit_files) {
        namespace fs = std::filesystem;
        detail::write_text_file((fs::path(config.out_dir) / "compare.txt").string(),
                                cmp.table);
        const std::string csv_path = (fs::path(config.out_dir) / "compare.csv").string();
        detail::CsvFile csv(csv_path);
        csv.field(std::string("model"));
        csv.field(std::string("mse"));
        csv.field(std::string("mae"));
        csv.field(std::string("r2"));
        csv.endrow();
        static constexpr const char* order[] = {"mlp", "gbt", "extra_trees",
                                                "ensemble"};
        for (const char* name : order) {
            const ModelEval& ev = eval_for(cmp.report, name);
            csv.field(std::string(ev.name));
            csv.field(ev.metrics.mse);
            csv.field(ev.metrics.mae);
            csv.field(ev.metrics.r2);
            csv.endrow();
        }
        csv.close();
        detail::write_csv_sidecar(csv_path, {"model", "mse", "mae", "r2"}, 4);
    }
    return cmp;
}

}  // namespace spinml
