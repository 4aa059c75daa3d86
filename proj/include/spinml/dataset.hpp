#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spinml/errors.hpp"
#include "spinml/linalg.hpp"
#include "spinml/negativity.hpp"
#include "spinml/rng.hpp"
#include "spinml/states.hpp"

namespace spinml {

enum class FeatureLayout { pure_amplitudes, density_full, density_compact };

inline const char* layout_name(FeatureLayout layout) {
    switch (layout) {
        case FeatureLayout::pure_amplitudes: return "pure_amplitudes";
        case FeatureLayout::density_full: return "density_full";
        case FeatureLayout::density_compact: return "density_compact";
    }
    throw ContractError("unknown feature layout");
}

inline FeatureLayout parse_layout(const std::string& name) {
    if (name == "pure_amplitudes") return FeatureLayout::pure_amplitudes;
    if (name == "density_full") return FeatureLayout::density_full;
    if (name == "density_compact") return FeatureLayout::density_compact;
    throw ParameterError(detail::cat("unknown feature layout '", name, "'"));
}

// Feature width for a spin pair under a given layout; n is the composite
// dimension, which is also the density-matrix side length.
inline std::size_t feature_width(const SpinPair& pair, FeatureLayout layout) {
    const std::size_t n = static_cast<std::size_t>(pair.amplitude_count());
    switch (layout) {
        case FeatureLayout::pure_amplitudes: return n;
        case FeatureLayout::density_full: return 2 * n * n;
        case FeatureLayout::density_compact: return n * (n + 1) / 2;
    }
    throw ContractError("unknown feature layout");
}

struct FeatureVector {
    std::vector<double> values;
    FeatureLayout layout;
};

// Signed amplitudes straight through; sign information is the point.
inline FeatureVector featurize_pure(const PureState& state) {
    return FeatureVector{state.amplitudes, FeatureLayout::pure_amplitudes};
}

// density_full: row-major real parts, then row-major imaginary parts (all
// zero in this real pipeline). density_compact: upper triangle including
// the diagonal, row-major; enough to reconstruct a symmetric matrix.
inline FeatureVector featurize_density(const DensityOperator& rho,
                                       FeatureLayout layout) {
    const std::size_t n = rho.matrix.rows();
    if (layout == FeatureLayout::density_full) {
        std::vector<double> v(2 * n * n, 0.0);
        std::copy(rho.matrix.data().begin(), rho.matrix.data().end(), v.begin());
        return FeatureVector{std::move(v), layout};
    }
    if (layout == FeatureLayout::density_compact) {
        std::vector<double> v;
        v.reserve(n * (n + 1) / 2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) v.push_back(rho.matrix(i, j));
        return FeatureVector{std::move(v), layout};
    }
    throw ParameterError("featurize_density: layout must be density_full or density_compact");
}

struct RowProvenance {
    std::string kind;  // dense | sparse | werner
    int k = 0;         // sparse only
    double alpha = 0.0;  // werner only
};

struct DatasetMeta {
    SpinPair pair;
    std::string family;  // pure | werner
    std::uint64_t seed = 0;
    FeatureLayout layout = FeatureLayout::pure_amplitudes;
    std::size_t size = 0;
    int generator_version = 1;
    std::vector<RowProvenance> provenance;
};

struct Dataset {
    Matrix features;  // size x width
    std::vector<double> targets;
    DatasetMeta meta;

    std::size_t size() const noexcept { return targets.size(); }
    std::size_t width() const noexcept { return features.cols(); }

    void check_invariants() const {
        if (features.rows() != targets.size() || targets.size() != meta.size ||
            meta.provenance.size() != meta.size)
            throw DataError(detail::cat(
                "dataset integrity: ", features.rows(), " feature rows, ",
                targets.size(), " targets, declared size ", meta.size));
        if (features.cols() != feature_width(meta.pair, meta.layout))
            throw DataError(detail::cat(
                "dataset integrity: feature width ", features.cols(),
                " does not match layout ", layout_name(meta.layout)));
        const double bound =
            0.5 * (std::min(meta.pair.d1(), meta.pair.d2()) - 1) + 1e-9;
        for (std::size_t i = 0; i < targets.size(); ++i)
            if (targets[i] < 0.0 || targets[i] > bound)
                throw DataError(detail::cat("dataset integrity: target ",
                                            targets[i], " at row ", i,
                                            " outside [0, ", bound, "]"));
    }
};

// Mixed ensemble of pure states: ceil(0.10*S) dense Gaussian rows, the rest
// sparse with k uniform on {1..k_max}, k_max = max(2, n_amp/8). Row i is
// generated entirely from substream(i) of the caller's handle, so the loop
// can be fanned out across workers without changing a byte of the output;
// the final row shuffle draws from the caller's own stream.
inline Dataset build_pure_dataset(const SpinPair& pair, std::size_t S,
                                  RngHandle& rng) {
    if (S < 10)
        throw ParameterError(
            detail::cat("build_pure_dataset: S = ", S, " is below 10"));
    const int n_amp = pair.amplitude_count();
    const int k_max = std::max(2, n_amp / 8);
    const std::size_t n_dense = (S + 9) / 10;

    const std::size_t width = static_cast<std::size_t>(n_amp);
    Matrix feats(S, width);
    std::vector<double> targets(S);
    std::vector<RowProvenance> prov(S);
    for (std::size_t i = 0; i < S; ++i) {
        RngHandle row_rng = rng.substream(i);
        PureState psi{pair, {}};
        if (i < n_dense) {
            psi = random_pure_state(pair, row_rng);
            prov[i] = RowProvenance{"dense", 0, 0.0};
        } else {
            const int k =
                1 + static_cast<int>(row_rng.uniform_int(static_cast<std::uint64_t>(k_max)));
            psi = sparse_pure_state(pair, k, row_rng);
            prov[i] = RowProvenance{"sparse", k, 0.0};
        }
        targets[i] = negativity(density_from_pure(psi)).value;
        std::copy(psi.amplitudes.begin(), psi.amplitudes.end(), feats.row(i));
    }

    const std::vector<std::size_t> perm = rng.permutation(S);
    Matrix shuffled_feats(S, width);
    std::vector<double> shuffled_targets(S);
    std::vector<RowProvenance> shuffled_prov(S);
    for (std::size_t r = 0; r < S; ++r) {
        const std::size_t src = perm[r];
        std::copy(feats.row(src), feats.row(src) + width, shuffled_feats.row(r));
        shuffled_targets[r] = targets[src];
        shuffled_prov[r] = std::move(prov[src]);
    }
    Dataset out{std::move(shuffled_feats), std::move(shuffled_targets),
                DatasetMeta{pair, "pure", rng.seed(),
                            FeatureLayout::pure_amplitudes, S, 1,
                            std::move(shuffled_prov)}};
    out.check_invariants();
    return out;
}

// Werner mixtures with alpha uniform on [0,1]; same per-row substream
// scheme as the pure builder.
inline Dataset build_werner_dataset(HalfInt j, std::size_t S,
                                    FeatureLayout layout, RngHandle& rng) {
    if (S < 2)
        throw ParameterError(
            detail::cat("build_werner_dataset: S = ", S, " is below 2"));
    if (layout == FeatureLayout::pure_amplitudes)
        throw ParameterError(
            "build_werner_dataset: layout must be density_full or density_compact");
    const SpinPair pair = SpinPair::equal(j);
    const std::size_t width = feature_width(pair, layout);

    Dataset out{Matrix(S, width), std::vector<double>(S),
                DatasetMeta{pair, "werner", rng.seed(), layout, S, 1, {}}};
    out.meta.provenance.resize(S);
    for (std::size_t i = 0; i < S; ++i) {
        RngHandle row_rng = rng.substream(i);
        const double alpha = row_rng.uniform();
        const DensityOperator rho = werner_state(j, alpha);
        const FeatureVector fv = featurize_density(rho, layout);
        std::copy(fv.values.begin(), fv.values.end(), out.features.row(i));
        out.targets[i] = negativity(rho).value;
        out.meta.provenance[i] = RowProvenance{"werner", 0, alpha};
    }
    out.check_invariants();
    return out;
}

// Per-feature affine map to zero mean, unit variance on the training rows.
// Population (divide-by-S) convention; constant columns get std floored at
// 1e-8 so they transform to exactly zero.
struct Standardizer {
    std::vector<double> means;
    std::vector<double> stds;
};

inline Standardizer fit_standardizer(const Matrix& train) {
    if (train.rows() < 2)
        throw ParameterError(detail::cat(
            "fit_standardizer: need at least 2 rows, got ", train.rows()));
    const std::size_t n = train.rows(), d = train.cols();
    Standardizer out{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = train.row(i);
        for (std::size_t j = 0; j < d; ++j) out.means[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) out.means[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = train.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - out.means[j];
            out.stds[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < d; ++j)
        out.stds[j] = std::max(std::sqrt(out.stds[j] / static_cast<double>(n)), 1e-8);
    return out;
}

inline Matrix apply_standardizer(const Standardizer& s, const Matrix& features) {
    if (features.cols() != s.means.size())
        throw ContractError(detail::cat("apply_standardizer: ",
                                        features.cols(), " columns vs ",
                                        s.means.size(), " fitted"));
    Matrix out(features.rows(), features.cols());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const double* src = features.row(i);
        double* dst = out.row(i);
        for (std::size_t j = 0; j < features.cols(); ++j)
            dst[j] = (src[j] - s.means[j]) / s.stds[j];
    }
    return out;
}

struct SplitPlan {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
    double ratio = 0.0;
};

// Random permutation cut at floor(ratio * S).
inline SplitPlan split(const Dataset& ds, double ratio, RngHandle& rng) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ParameterError(
            detail::cat("split: ratio = ", ratio, " outside (0, 1)"));
    const std::size_t S = ds.size();
    if (S < 2)
        throw ParameterError(detail::cat("split: S = ", S, " is below 2"));
    const std::vector<std::size_t> perm = rng.permutation(S);
    const std::size_t cut = static_cast<std::size_t>(ratio * static_cast<double>(S));
    SplitPlan plan;
    plan.ratio = ratio;
    plan.train_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cut));
    plan.test_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(cut), perm.end());
    return plan;
}

inline Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(m.row(idx[r]), m.row(idx[r]) + m.cols(), out.row(r));
    return out;
}

inline std::vector<double> take(const std::vector<double>& v,
                                const std::vector<std::size_t>& idx) {
    std::vector<double> out(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) out[r] = v[idx[r]];
    return out;
}

// On-disk form: CSV `f0,...,f{d-1},negativity` with 17-significant-digit
// decimals (lossless for doubles), plus a JSON sidecar `<path>.meta`
// carrying identity and per-row provenance.
inline void save_dataset(const Dataset& ds, const std::string& path) {
    ds.check_invariants();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError(detail::cat("cannot open '", path, "' for writing"));
    for (std::size_t j = 0; j < ds.width(); ++j) std::fprintf(f, "f%zu,", j);
    std::fputs("negativity\n", f);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double* row = ds.features.row(i);
        for (std::size_t j = 0; j < ds.width(); ++j)
            std::fprintf(f, "%.17g,", row[j]);
        std::fprintf(f, "%.17g\n", ds.targets[i]);
    }
    if (std::fclose(f) != 0)
        throw DataError(detail::cat("failed writing '", path, "'"));

    nlohmann::json meta{
        {"schema_version", 1},
        {"family", ds.meta.family},
        {"j1", ds.meta.pair.j1.str()},
        {"j2", ds.meta.pair.j2.str()},
        {"layout", layout_name(ds.meta.layout)},
        {"seed", ds.meta.seed},
        {"S", ds.meta.size},
        {"generator_version", ds.meta.generator_version},
    };
    nlohmann::json prov = nlohmann::json::array();
    for (const RowProvenance& p : ds.meta.provenance) {
        nlohmann::json row{{"kind", p.kind}};
        if (p.kind == "sparse") row["k"] = p.k;
        if (p.kind == "werner") row["alpha"] = p.alpha;
        prov.push_back(std::move(row));
    }
    meta["provenance"] = std::move(prov);
    std::ofstream mf(path + ".meta", std::ios::binary);
    mf << meta.dump(2) << '\n';
    if (!mf) throw DataError(detail::cat("failed writing '", path, ".meta'"));
}

inline Dataset load_dataset(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw DataError(detail::cat("dataset file not found: '", path, "'"));
    const std::string meta_path = path + ".meta";
    if (!std::filesystem::exists(meta_path))
        throw DataError(detail::cat("dataset sidecar not found: '", meta_path, "'"));

    nlohmann::json meta;
    try {
        std::ifstream mf(meta_path, std::ios::binary);
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(detail::cat("unreadable sidecar '", meta_path, "': ", e.what()));
    }
    if (!meta.contains("schema_version") || !meta["schema_version"].is_number_integer())
        throw DataError(detail::cat("sidecar '", meta_path, "' lacks a schema_version"));
    if (meta["schema_version"].get<int>() != 1)
        throw DataError(detail::cat("unsupported dataset schema version ",
                                    meta["schema_version"].dump(), " (expected 1)"));

    auto parse_meta = [&]() -> DatasetMeta {
        try {
            DatasetMeta m{SpinPair{HalfInt::parse(meta.at("j1").get<std::string>()),
                                   HalfInt::parse(meta.at("j2").get<std::string>())},
                          meta.at("family").get<std::string>(),
                          meta.at("seed").get<std::uint64_t>(),
                          parse_layout(meta.at("layout").get<std::string>()),
                          meta.at("S").get<std::size_t>(),
                          meta.at("generator_version").get<int>(),
                          {}};
            for (const auto& row : meta.at("provenance")) {
                RowProvenance p;
                p.kind = row.at("kind").get<std::string>();
                if (row.contains("k")) p.k = row["k"].get<int>();
                if (row.contains("alpha")) p.alpha = row["alpha"].get<double>();
                m.provenance.push_back(std::move(p));
            }
            return m;
        } catch (const nlohmann::json::exception& e) {
            throw DataError(detail::cat("malformed sidecar '", meta_path, "': ", e.what()));
        } catch (const ParameterError& e) {
            throw DataError(detail::cat("malformed sidecar '", meta_path, "': ", e.what()));
        }
    };
    Dataset ds{Matrix(0, 0), {}, parse_meta()};

    const std::size_t width = feature_width(ds.meta.pair, ds.meta.layout);
    std::ifstream f(path, std::ios::binary);
    std::string line;
    if (!std::getline(f, line))
        throw DataError(detail::cat("dataset '", path, "' is empty"));
    {
        std::string expect;
        for (std::size_t j = 0; j < width; ++j) {
            expect += 'f';
            expect += std::to_string(j);
            expect += ',';
        }
        expect += "negativity";
        if (line != expect)
            throw DataError(detail::cat("dataset '", path,
                                        "' header does not match layout ",
                                        layout_name(ds.meta.layout), " (width ",
                                        width, ")"));
    }
    ds.features = Matrix(ds.meta.size, width);
    ds.targets.resize(ds.meta.size);
    std::size_t rows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (rows >= ds.meta.size)
            throw DataError(detail::cat("dataset '", path, "' has more than the ",
                                        ds.meta.size, " rows the sidecar declares"));
        const char* p = line.c_str();
        double* dst = ds.features.row(rows);
        for (std::size_t j = 0; j <= width; ++j) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p)
                throw DataError(detail::cat("dataset '", path, "' row ", rows,
                                            ": malformed number at column ", j));
            if (j < width) {
                dst[j] = v;
                if (*end != ',')
                    throw DataError(detail::cat("dataset '", path, "' row ", rows,
                                                " has too few columns"));
                p = end + 1;
            } else {
                ds.targets[rows] = v;
                if (*end != '\0' && *end != '\r')
                    throw DataError(detail::cat("dataset '", path, "' row ", rows,
                                                " has trailing content"));
            }
        }
        ++rows;
    }
    if (rows != ds.meta.size)
        throw DataError(detail::cat("dataset '", path, "' has ", rows,
                                    " rows but the sidecar declares ", ds.meta.size));
    ds.check_invariants();
    return ds;
}

}  // namespace spinml
