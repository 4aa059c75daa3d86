#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spinml/experiment.hpp"

using namespace spinml;
using Catch::Matchers::ContainsSubstring;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("spinml_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (const char c : text)
        if (c == '\n') ++n;
    return n;
}

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SPINML_CLI_PATH) + " " + args + " 2>&1";
    std::FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = ::pclose(pipe);
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    return r;
}

std::string q(const std::string& s) { return "'" + s + "'"; }

}  // namespace

TEST_CASE("bare invocation and bad flags exit with the parameter code") {
    CHECK(run_cli("").exit_code == 2);
    CHECK(run_cli("--nonsense").exit_code == 2);
    CHECK(run_cli("generate --family bogus").exit_code == 2);

    const RunResult help = run_cli("--help");
    CHECK(help.exit_code == 0);
    CHECK_THAT(help.output, ContainsSubstring("generate"));
    CHECK_THAT(help.output, ContainsSubstring("sweep-alpha"));
}

TEST_CASE("pure workflow: generate, train, evaluate, sweep-theta") {
    TempDir dir;
    const std::string data = dir.file("d.csv");
    const std::string model = dir.file("m.json");

    const RunResult gen = run_cli("generate --family pure --j 0.5 --samples 150 "
                                  "--seed 11 --out " + q(data));
    REQUIRE(gen.exit_code == 0);
    CHECK_THAT(gen.output, ContainsSubstring("wrote 150 rows"));
    CHECK_THAT(gen.output, ContainsSubstring("4 features"));
    REQUIRE(fs::exists(data));
    REQUIRE(fs::exists(data + ".meta"));

    SECTION("regeneration with the same seed is byte-identical") {
        const std::string again = dir.file("d2.csv");
        REQUIRE(run_cli("generate --family pure --j 0.5 --samples 150 --seed 11 "
                        "--out " + q(again)).exit_code == 0);
        CHECK(slurp(data) == slurp(again));
        CHECK(slurp(data + ".meta") == slurp(again + ".meta"));
    }

    SECTION("train, evaluate, and curve sweep against the saved model") {
        const RunResult train = run_cli("train --data " + q(data) +
                                        " --folds 5 --seed 7 --out " + q(model));
        REQUIRE(train.exit_code == 0);
        CHECK_THAT(train.output, ContainsSubstring("150 rows"));
        REQUIRE(fs::exists(model));

        const std::string scatter = dir.file("scatter.csv");
        const RunResult eval = run_cli("evaluate --model " + q(model) +
                                       " --data " + q(data) + " --out " +
                                       q(scatter));
        REQUIRE(eval.exit_code == 0);
        CHECK_THAT(eval.output, ContainsSubstring("rows        150"));
        CHECK_THAT(eval.output, ContainsSubstring("r2"));
        CHECK_THAT(eval.output, ContainsSubstring("slope"));
        const nlohmann::json sidecar =
            nlohmann::json::parse(slurp(scatter + ".meta"));
        CHECK(sidecar.at("rows").get<std::size_t>() == 150);

        const RunResult sweep = run_cli("sweep-theta --model " + q(model) +
                                        " --j 0.5 --points 9 --out " +
                                        q(dir.path.string()));
        REQUIRE(sweep.exit_code == 0);
        CHECK_THAT(sweep.output, ContainsSubstring("max |exact - predicted|"));
        const std::string curve = slurp(dir.file("sweep_theta.csv"));
        CHECK(line_count(curve) == 10);
        CHECK(curve.rfind("theta,exact,predicted\n", 0) == 0);
        CHECK_THAT(curve, ContainsSubstring("\n0,0,"));
        CHECK_THAT(curve, ContainsSubstring("\n1.5707963267948966,0,"));

        // a pure-amplitude model cannot score density features
        const RunResult alpha = run_cli("sweep-alpha --model " + q(model) +
                                        " --j 0.5 --out " + q(dir.path.string()));
        CHECK(alpha.exit_code == 2);
        CHECK_THAT(alpha.output, ContainsSubstring("cannot infer"));
    }

    SECTION("unequal spins widen the amplitude vector") {
        const std::string mixed = dir.file("mixed.csv");
        const RunResult gen2 = run_cli("generate --family pure --j 0.5 --j2 1 "
                                       "--samples 60 --seed 3 --out " + q(mixed));
        REQUIRE(gen2.exit_code == 0);
        CHECK_THAT(gen2.output, ContainsSubstring("6 features"));
    }
}

TEST_CASE("werner workflow reports the detection threshold") {
    TempDir dir;
    const std::string data = dir.file("w.csv");
    const std::string model = dir.file("w.json");

    REQUIRE(run_cli("generate --family werner --j 0.5 --samples 150 --seed 5 "
                    "--out " + q(data)).exit_code == 0);
    REQUIRE(run_cli("train --data " + q(data) + " --folds 5 --seed 9 --out " +
                    q(model)).exit_code == 0);

    const RunResult sweep = run_cli("sweep-alpha --model " + q(model) +
                                    " --j 0.5 --points 21 --out " +
                                    q(dir.path.string()));
    REQUIRE(sweep.exit_code == 0);
    CHECK_THAT(sweep.output, ContainsSubstring("threshold"));
    CHECK_THAT(sweep.output, ContainsSubstring("wrote 21 rows"));

    const std::string curve = slurp(dir.file("sweep_alpha.csv"));
    CHECK(curve.rfind("alpha,exact,predicted\n", 0) == 0);
    CHECK(line_count(curve) == 22);

    const nlohmann::json sidecar =
        nlohmann::json::parse(slurp(dir.file("sweep_alpha.csv.meta")));
    CHECK(sidecar.at("rows").get<std::size_t>() == 21);
    CHECK(sidecar.at("exact_threshold").get<double>() ==
          Catch::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("missing and damaged artifacts exit with the data code") {
    TempDir dir;
    const std::string data = dir.file("d.csv");
    REQUIRE(run_cli("generate --samples 60 --seed 2 --out " + q(data))
                .exit_code == 0);

    CHECK(run_cli("evaluate --model " + q(dir.file("absent.json")) +
                  " --data " + q(data)).exit_code == 3);
    CHECK(run_cli("train --data " + q(dir.file("absent.csv"))).exit_code == 3);

    std::ofstream(dir.file("broken.json"), std::ios::binary) << "{}";
    const RunResult broken = run_cli("evaluate --model " +
                                     q(dir.file("broken.json")) + " --data " +
                                     q(data));
    CHECK(broken.exit_code == 3);
    CHECK_THAT(broken.output, ContainsSubstring("error:"));

    CHECK(run_cli("train").exit_code == 2);  // --data is required
    CHECK(run_cli("evaluate --data " + q(data)).exit_code == 2);
}

TEST_CASE("config file entries override command-line flags") {
    TempDir dir;
    const std::string cfg = dir.file("run.cfg");
    std::ofstream(cfg, std::ios::binary)
        << "# sample-count override\nsamples = 60\nseed = 4\n";

    const std::string data = dir.file("d.csv");
    const RunResult gen = run_cli("generate --samples 999 --seed 1 --config " +
                                  q(cfg) + " --out " + q(data));
    REQUIRE(gen.exit_code == 0);
    CHECK_THAT(gen.output, ContainsSubstring("wrote 60 rows"));
    const nlohmann::json meta = nlohmann::json::parse(slurp(data + ".meta"));
    CHECK(meta.at("S").get<std::size_t>() == 60);
    CHECK(meta.at("seed").get<std::uint64_t>() == RngHandle(4).substream(0).seed());

    std::ofstream(cfg, std::ios::binary) << "richter = 9\n";
    const RunResult bad = run_cli("generate --config " + q(cfg));
    CHECK(bad.exit_code == 2);
    CHECK_THAT(bad.output, ContainsSubstring("unknown key"));

    std::ofstream(cfg, std::ios::binary) << "no separator here\n";
    CHECK(run_cli("generate --config " + q(cfg)).exit_code == 2);
}

TEST_CASE("sample sweep logs feed the scaling-law refit") {
    TempDir dir;

    const RunResult sweep = run_cli(
        "sweep-samples --family pure --j 0.5 --sizes 5,60,120 --seed 5 --out " +
        q(dir.path.string()));
    REQUIRE(sweep.exit_code == 0);
    CHECK_THAT(sweep.output, ContainsSubstring("size 5 failed"));
    CHECK_THAT(sweep.output, ContainsSubstring("S=120 ensemble:"));
    const std::string log = slurp(dir.file("sweep_samples.csv"));
    CHECK(log.rfind(sample_sweep_header() + "\n", 0) == 0);
    CHECK(line_count(log) == 1 + 2 * 4);

    // two surviving sizes cannot pin five coefficients
    const RunResult starved =
        run_cli("scaling-fit " + q(dir.file("sweep_samples.csv")) + " --out " +
                q(dir.path.string()));
    CHECK(starved.exit_code == 3);
    CHECK_THAT(starved.output, ContainsSubstring("cannot determine"));
}

TEST_CASE("scaling-fit recovers planted coefficients from synthetic logs") {
    TempDir dir;
    const ScalingCoefficients truth{3.1, 0.45, -2.5, -7.0, 0.9};

    SampleSweep sweep{"pure", HalfInt::from_twice(1), HalfInt::from_twice(1),
                      {}, {}};
    const double js[] = {0.5, 1.0, 2.0};
    const double mses[] = {0.0005, 0.002, 0.01, 0.02};
    std::size_t k = 0;
    for (const double j : js)
        for (const double mse : mses) {
            const double mae = 0.004 + 0.003 * static_cast<double>(k % 5);
            const double r2 = 0.9 + 0.008 * static_cast<double>(k % 11);
            const double s =
                scaling_estimate(j, mse, mae, r2, truth);
            SweepObservation obs;
            obs.samples = static_cast<std::size_t>(std::llround(s));
            ModelEval ev;
            ev.name = "ensemble";
            ev.metrics = MetricsReport{mse, mae, r2, 100, false};
            obs.models.push_back(ev);
            sweep.rows.push_back(obs);
            ++k;
        }
    // rows must ascend in S for the file to look like a real sweep; sort
    std::sort(sweep.rows.begin(), sweep.rows.end(),
              [](const SweepObservation& a, const SweepObservation& b) {
                  return a.samples < b.samples;
              });
    const std::string log = dir.file("synthetic.csv");
    // spin label comes from the sweep header fields, but the per-row j
    // column is what the fit consumes; write rows by hand for mixed spins
    {
        std::ofstream f(log, std::ios::binary);
        f << sample_sweep_header() << "\n";
        std::size_t rows = 0;
        for (const SweepObservation& obs : sweep.rows) {
            const ModelEval& ev = obs.models[0];
            const double j_from_s =
                (std::log10(static_cast<double>(obs.samples)) - truth.c0 -
                 truth.cMSE * ev.metrics.mse - truth.cMAE * ev.metrics.mae -
                 truth.cR2 * ev.metrics.r2) /
                truth.cJ;
            char line[256];
            std::snprintf(line, sizeof line, "%zu,pure,%.17g,ensemble,%.17g,%.17g,%.17g\n",
                          obs.samples, j_from_s, ev.metrics.mse,
                          ev.metrics.mae, ev.metrics.r2);
            f << line;
            ++rows;
        }
        REQUIRE(rows == 12);
    }

    const RunResult fit = run_cli("scaling-fit " + q(log) + " --out " +
                                  q(dir.path.string()));
    REQUIRE(fit.exit_code == 0);
    CHECK_THAT(fit.output, ContainsSubstring("12 records"));

    const nlohmann::json out =
        nlohmann::json::parse(slurp(dir.file("scaling_fit.json")));
    CHECK(out.at("records").get<std::size_t>() == 12);
    CHECK(out.at("c0").get<double>() == Catch::Approx(truth.c0).margin(1e-6));
    CHECK(out.at("cJ").get<double>() == Catch::Approx(truth.cJ).margin(1e-6));
    CHECK(out.at("cMSE").get<double>() == Catch::Approx(truth.cMSE).margin(1e-4));
    CHECK(out.at("cMAE").get<double>() == Catch::Approx(truth.cMAE).margin(1e-4));
    CHECK(out.at("cR2").get<double>() == Catch::Approx(truth.cR2).margin(1e-5));
}

TEST_CASE("compare emits its table deterministically") {
    TempDir a, b;
    const std::string flags = "compare --family pure --j 0.5 --samples 100 --seed 3 --out ";
    const RunResult first = run_cli(flags + q(a.path.string()));
    REQUIRE(first.exit_code == 0);
    CHECK_THAT(first.output, ContainsSubstring("MLP"));
    CHECK_THAT(first.output, ContainsSubstring("Ensemble"));

    REQUIRE(run_cli(flags + q(b.path.string())).exit_code == 0);
    CHECK(slurp(a.file("compare.txt")) == slurp(b.file("compare.txt")));
    CHECK(slurp(a.file("report.json")) == slurp(b.file("report.json")));
    CHECK(line_count(slurp(a.file("compare.csv"))) == 5);
}
