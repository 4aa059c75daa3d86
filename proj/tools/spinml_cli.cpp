// Command-line front end for the negativity-regression pipeline: dataset
// generation, ensemble training and evaluation, model comparison, curve and
// sample-count sweeps, and scaling-law refits.
//
// Exit codes: 0 success, 2 bad parameters, 3 data or integrity problems,
// 4 training divergence, 1 anything unexpected.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinml/experiment.hpp"
#include "spinml/stacking.hpp"

namespace fs = std::filesystem;
using namespace spinml;

namespace {

struct Cli {
    std::string family = "pure";
    std::string j = "0.5";
    std::string j2;  // defaults to j
    std::size_t samples = 0;
    std::uint64_t seed = 1;
    std::size_t folds = 5;
    std::string layout;
    std::string out;  // per-command default applied in the action
    bool normalize = false;
    std::vector<std::size_t> sizes;
    std::size_t points = 41;
    std::string data;
    std::string model;
    std::vector<std::string> logs;
    std::string config_path;
};

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& text, const std::string& key) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (end == text.c_str() || *end != '\0')
        throw ParameterError(detail::cat("config key '", key,
                                         "': unreadable integer '", text, "'"));
    return v;
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ParameterError(detail::cat("config key '", key,
                                     "': expected true/false, got '", text, "'"));
}

std::vector<std::size_t> parse_size_list(const std::string& text,
                                         const std::string& key) {
    std::vector<std::size_t> out;
    std::size_t at = 0;
    while (at <= text.size()) {
        const std::size_t comma = text.find(',', at);
        const std::string item =
            trim(text.substr(at, comma == std::string::npos ? comma : comma - at));
        if (!item.empty())
            out.push_back(static_cast<std::size_t>(parse_u64(item, key)));
        if (comma == std::string::npos) break;
        at = comma + 1;
    }
    if (out.empty())
        throw ParameterError(detail::cat("config key '", key, "': empty list"));
    return out;
}

// key=value file applied after flag parsing, so file entries win over flags.
void apply_config(Cli& o) {
    if (o.config_path.empty()) return;
    std::ifstream f(o.config_path, std::ios::binary);
    if (!f)
        throw DataError(detail::cat("cannot open config file '", o.config_path, "'"));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const std::string entry = trim(line);
        if (entry.empty() || entry.front() == '#') continue;
        const std::size_t eq = entry.find('=');
        if (eq == std::string::npos)
            throw ParameterError(detail::cat("config file '", o.config_path,
                                             "' line ", lineno,
                                             ": expected key=value"));
        const std::string key = trim(entry.substr(0, eq));
        const std::string value = trim(entry.substr(eq + 1));
        if (key == "family") o.family = value;
        else if (key == "j") o.j = value;
        else if (key == "j2") o.j2 = value;
        else if (key == "samples") o.samples = parse_u64(value, key);
        else if (key == "seed") o.seed = parse_u64(value, key);
        else if (key == "folds") o.folds = parse_u64(value, key);
        else if (key == "layout") o.layout = value;
        else if (key == "out") o.out = value;
        else if (key == "normalize-negativity") o.normalize = parse_bool(value, key);
        else if (key == "sizes") o.sizes = parse_size_list(value, key);
        else if (key == "points") o.points = parse_u64(value, key);
        else if (key == "data") o.data = value;
        else if (key == "model") o.model = value;
        else
            throw ParameterError(detail::cat("config file '", o.config_path,
                                             "' line ", lineno,
                                             ": unknown key '", key, "'"));
    }
}

ExperimentConfig to_experiment(const Cli& o) {
    ExperimentConfig c;
    c.family = o.family;
    c.j1 = HalfInt::parse(o.j);
    c.j2 = o.j2.empty() ? c.j1 : HalfInt::parse(o.j2);
    c.samples = o.samples;
    c.seed = o.seed;
    if (!o.layout.empty()) c.layout = parse_layout(o.layout);
    c.stack.folds = o.folds;
    c.normalize_negativity = o.normalize;
    c.out_dir = o.out.empty() ? "." : o.out;
    return c;
}

std::string out_or(const Cli& o, const char* fallback) {
    return o.out.empty() ? std::string(fallback) : o.out;
}

void require(const std::string& value, const char* flag, const char* sub) {
    if (value.empty())
        throw ParameterError(detail::cat(sub, ": ", flag, " is required"));
}

FeatureLayout resolve_model_layout(const Cli& o, const StackedEnsemble& e,
                                   HalfInt j) {
    if (!o.layout.empty()) return parse_layout(o.layout);
    const SpinPair pair = SpinPair::equal(j);
    const std::size_t width = e.standardizer.means.size();
    if (width == feature_width(pair, FeatureLayout::density_full))
        return FeatureLayout::density_full;
    if (width == feature_width(pair, FeatureLayout::density_compact))
        return FeatureLayout::density_compact;
    throw ParameterError(detail::cat(
        "cannot infer a density layout: the model expects ", width,
        " features but spin ", j.str(), " states have ",
        feature_width(pair, FeatureLayout::density_full), " (density_full) or ",
        feature_width(pair, FeatureLayout::density_compact),
        " (density_compact)"));
}

void run_generate(Cli& o) {
    apply_config(o);
    const ExperimentConfig cfg = to_experiment(o);
    const std::size_t samples = resolved_samples(cfg);
    const FeatureLayout layout = resolved_layout(cfg);
    const SpinPair pair = experiment_pair(cfg);
    const RngHandle root(cfg.seed);
    RngHandle gen = root.substream(0);
    const Dataset ds = cfg.family == "pure"
                           ? build_pure_dataset(pair, samples, gen)
                           : build_werner_dataset(cfg.j1, samples, layout, gen);
    const std::string path = out_or(o, "dataset.csv");
    save_dataset(ds, path);
    std::printf("wrote %zu rows (%zu features, %s, j=%s, layout %s) to %s\n",
                ds.size(), ds.width(), cfg.family.c_str(), cfg.j1.str().c_str(),
                layout_name(ds.meta.layout), path.c_str());
}

void run_train(Cli& o) {
    apply_config(o);
    require(o.data, "--data", "train");
    const Dataset ds = load_dataset(o.data);
    StackConfig sc;
    sc.folds = o.folds;
    const StackedEnsemble e = fit_stack(ds, sc, RngHandle(o.seed));
    const std::string path = out_or(o, "ensemble.json");
    save_ensemble(e, path);
    std::printf(
        "fitted stacked ensemble on %zu rows (%zu features, %zu folds, seed "
        "%llu); saved to %s\n",
        ds.size(), ds.width(), sc.folds,
        static_cast<unsigned long long>(e.seed), path.c_str());
}

void run_evaluate(Cli& o) {
    apply_config(o);
    require(o.model, "--model", "evaluate");
    require(o.data, "--data", "evaluate");
    const StackedEnsemble e = load_ensemble(o.model);
    const Dataset ds = load_dataset(o.data);
    const std::vector<double> predicted = stack_predict(e, ds.features);
    const ModelEval ev = evaluate_model("ensemble", ds.targets, predicted);
    std::printf("rows        %zu\n", ev.metrics.n);
    std::printf("mse         %.6e\n", ev.metrics.mse);
    std::printf("mae         %.6e\n", ev.metrics.mae);
    std::printf("r2          %.6f\n", ev.metrics.r2);
    if (!ev.metrics.degenerate) {
        std::printf("slope       %.6f\n", ev.line.slope);
        std::printf("intercept   %.6f\n", ev.line.intercept);
    }
    if (!o.out.empty()) {
        const double scale =
            o.normalize ? 1.0 / negativity_cap(ds.meta.pair) : 1.0;
        detail::write_scatter_csv(o.out, ds.targets, predicted, scale,
                                  o.normalize);
        std::printf("wrote %zu scatter rows to %s\n", ds.size(), o.out.c_str());
    }
}

void run_compare(Cli& o) {
    apply_config(o);
    const ExperimentConfig cfg = to_experiment(o);
    const ModelComparison cmp = compare_models(cfg);
    std::fputs(cmp.table.c_str(), stdout);
    std::printf("artifacts in %s (report.json, compare.txt, compare.csv, scatter_*.csv)\n",
                cfg.out_dir.c_str());
}

void run_sweep_samples(Cli& o) {
    apply_config(o);
    if (o.sizes.empty())
        throw ParameterError(
            "sweep-samples: --sizes is required (ascending sample counts)");
    const ExperimentConfig cfg = to_experiment(o);
    const SampleSweep sweep = sweep_samples(cfg, o.sizes);
    for (const SweepObservation& obs : sweep.rows)
        for (const ModelEval& ev : obs.models)
            if (ev.name == "ensemble")
                std::printf("S=%zu ensemble: mse=%.6e mae=%.6e r2=%.6f\n",
                            obs.samples, ev.metrics.mse, ev.metrics.mae,
                            ev.metrics.r2);
    for (const SweepFailure& fail : sweep.failures)
        std::fprintf(stderr, "size %zu failed: %s\n", fail.samples,
                     fail.message.c_str());
    if (sweep.rows.empty())
        throw DataError("sweep-samples: every size failed");
    fs::create_directories(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "sweep_samples.csv").string();
    write_sample_sweep_csv(sweep, path);
    std::printf("wrote %zu rows to %s\n", sweep.rows.size() * 4, path.c_str());
}

void run_sweep_theta(Cli& o) {
    apply_config(o);
    require(o.model, "--model", "sweep-theta");
    const StackedEnsemble e = load_ensemble(o.model);
    const HalfInt j = HalfInt::parse(o.j);
    const CurveSweep sweep =
        sweep_theta(e, j, linspace_grid(0.0, 0.5 * std::numbers::pi, o.points));
    const std::string dir = out_or(o, ".");
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / "sweep_theta.csv").string();
    const double scale =
        o.normalize ? 1.0 / negativity_cap(SpinPair::equal(j)) : 1.0;
    write_curve_csv(sweep, path, scale, o.normalize);
    std::printf("max |exact - predicted| = %.6e over %zu points; wrote %s\n",
                sweep.max_abs_error, sweep.points.size(), path.c_str());
}

void run_sweep_alpha(Cli& o) {
    apply_config(o);
    require(o.model, "--model", "sweep-alpha");
    const StackedEnsemble e = load_ensemble(o.model);
    const HalfInt j = HalfInt::parse(o.j);
    const FeatureLayout layout = resolve_model_layout(o, e, j);
    const AlphaSweep sweep =
        sweep_alpha(e, j, layout, linspace_grid(0.0, 1.0, o.points));
    const std::string dir = out_or(o, ".");
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / "sweep_alpha.csv").string();
    const double scale =
        o.normalize ? 1.0 / negativity_cap(SpinPair::equal(j)) : 1.0;
    write_curve_csv(sweep.curve, path, scale, o.normalize,
                    nlohmann::json{
                        {"exact_threshold", sweep.exact_threshold},
                        {"predicted_threshold", sweep.predicted_threshold},
                        {"predicted_crossed", sweep.predicted_crossed},
                    });
    if (sweep.predicted_crossed)
        std::printf("predicted threshold alpha = %.6f (exact 1/(D+1) = %.6f)\n",
                    sweep.predicted_threshold, sweep.exact_threshold);
    else
        std::printf("prediction never exceeded %.2f (exact threshold %.6f)\n",
                    kDetectionFloor, sweep.exact_threshold);
    std::printf("wrote %zu rows to %s\n", sweep.curve.points.size(), path.c_str());
}

void run_scaling_fit(Cli& o) {
    apply_config(o);
    std::vector<ScalingRecord> records;
    for (const std::string& log : o.logs) {
        const std::vector<ScalingRecord> part = parse_sample_sweep_csv(log);
        records.insert(records.end(), part.begin(), part.end());
    }
    const ScalingCoefficients c = fit_scaling_law(records);
    std::printf("log10(samples) = c0 + cJ*j + cMSE*mse + cMAE*mae + cR2*r2  (%zu records)\n",
                records.size());
    std::printf("c0    %+.10g\n", c.c0);
    std::printf("cJ    %+.10g\n", c.cJ);
    std::printf("cMSE  %+.10g\n", c.cMSE);
    std::printf("cMAE  %+.10g\n", c.cMAE);
    std::printf("cR2   %+.10g\n", c.cR2);
    const std::string dir = out_or(o, ".");
    fs::create_directories(dir);
    const std::string path = (fs::path(dir) / "scaling_fit.json").string();
    detail::write_json_file(path, nlohmann::json{{"records", records.size()},
                                                 {"c0", c.c0},
                                                 {"cJ", c.cJ},
                                                 {"cMSE", c.cMSE},
                                                 {"cMAE", c.cMAE},
                                                 {"cR2", c.cR2}});
    std::printf("wrote %s\n", path.c_str());
}

void add_spin_flags(CLI::App* sub, Cli& o) {
    sub->add_option("--family", o.family, "state family: pure or werner");
    sub->add_option("--j", o.j, "spin (0.5, 1, 1.5, ...)");
    sub->add_option("--j2", o.j2, "second spin for unequal pure pairs");
    sub->add_option("--samples", o.samples, "dataset size (0 = family default)");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--layout", o.layout,
                    "feature layout: pure_amplitudes, density_full, density_compact");
}

void add_common_flags(CLI::App* sub, Cli& o) {
    sub->add_option("--out", o.out, "output file or directory");
    sub->add_option("--config", o.config_path,
                    "key=value file; entries override flags");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "negativity regression for spin pairs: datasets, stacked ensembles, "
        "sweeps"};
    app.require_subcommand(1);
    Cli o;

    CLI::App* generate = app.add_subcommand("generate", "build and save a dataset");
    add_spin_flags(generate, o);
    add_common_flags(generate, o);
    generate->callback([&] { run_generate(o); });

    CLI::App* train = app.add_subcommand(
        "train", "fit a stacked ensemble on a saved dataset and save it");
    train->add_option("--data", o.data, "dataset CSV (with .meta sidecar)");
    train->add_option("--folds", o.folds, "out-of-fold split count");
    train->add_option("--seed", o.seed, "master seed");
    add_common_flags(train, o);
    train->callback([&] { run_train(o); });

    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "score a saved ensemble on a saved dataset");
    evaluate->add_option("--model", o.model, "ensemble JSON");
    evaluate->add_option("--data", o.data, "dataset CSV");
    evaluate->add_flag("--normalize-negativity", o.normalize,
                       "rescale scatter output by the spin pair's maximum");
    add_common_flags(evaluate, o);
    evaluate->callback([&] { run_evaluate(o); });

    CLI::App* compare = app.add_subcommand(
        "compare", "run the full pipeline and tabulate per-model accuracy");
    add_spin_flags(compare, o);
    compare->add_option("--folds", o.folds, "out-of-fold split count");
    compare->add_flag("--normalize-negativity", o.normalize,
                      "rescale emitted scatter values by the spin pair's maximum");
    add_common_flags(compare, o);
    compare->callback([&] { run_compare(o); });

    CLI::App* sweep_s = app.add_subcommand(
        "sweep-samples", "rerun the pipeline over ascending dataset sizes");
    add_spin_flags(sweep_s, o);
    sweep_s->add_option("--folds", o.folds, "out-of-fold split count");
    sweep_s->add_option("--sizes", o.sizes, "ascending sample counts")
        ->delimiter(',');
    add_common_flags(sweep_s, o);
    sweep_s->callback([&] { run_sweep_samples(o); });

    CLI::App* sweep_t = app.add_subcommand(
        "sweep-theta", "exact vs predicted negativity along the pure family");
    sweep_t->add_option("--model", o.model, "ensemble JSON");
    sweep_t->add_option("--j", o.j, "spin (0.5, 1, 1.5, ...)");
    sweep_t->add_option("--points", o.points, "grid size on [0, pi/2]");
    sweep_t->add_flag("--normalize-negativity", o.normalize,
                      "rescale emitted values by the spin pair's maximum");
    add_common_flags(sweep_t, o);
    sweep_t->callback([&] { run_sweep_theta(o); });

    CLI::App* sweep_a = app.add_subcommand(
        "sweep-alpha", "exact vs predicted negativity along the Werner axis");
    sweep_a->add_option("--model", o.model, "ensemble JSON");
    sweep_a->add_option("--j", o.j, "spin (0.5, 1, 1.5, ...)");
    sweep_a->add_option("--layout", o.layout,
                        "density layout (inferred from the model when omitted)");
    sweep_a->add_option("--points", o.points, "grid size on [0, 1]");
    sweep_a->add_flag("--normalize-negativity", o.normalize,
                      "rescale emitted values by the spin pair's maximum");
    add_common_flags(sweep_a, o);
    sweep_a->callback([&] { run_sweep_alpha(o); });

    CLI::App* scaling = app.add_subcommand(
        "scaling-fit", "refit the sample-count scaling law from sweep logs");
    scaling->add_option("logs", o.logs, "sweep_samples.csv files")->required();
    add_common_flags(scaling, o);
    scaling->callback([&] { run_scaling_fit(o); });

    try {
        app.parse(argc, argv);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return e.exit_code();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
}
