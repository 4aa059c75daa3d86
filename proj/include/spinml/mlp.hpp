#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "spinml/errors.hpp"
#include "spinml/linalg.hpp"
#include "spinml/rng.hpp"

namespace spinml {

enum class MlpOptimizer { momentum, adam };

inline const char* optimizer_name(MlpOptimizer o) {
    return o == MlpOptimizer::adam ? "adam" : "momentum";
}

inline MlpOptimizer parse_optimizer(const std::string& s) {
    if (s == "adam") return MlpOptimizer::adam;
    if (s == "momentum") return MlpOptimizer::momentum;
    throw ParameterError(detail::cat("unknown optimizer \"", s, "\""));
}

struct MlpConfig {
    std::vector<std::size_t> hidden{128, 64, 32};
    MlpOptimizer optimizer = MlpOptimizer::adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;   // momentum optimizer only
    // Cosine decay from learning_rate down to lr_floor * learning_rate over
    // the epoch range; 1.0 keeps the rate constant.
    double lr_floor = 0.01;
    std::size_t epochs = 400;
    std::size_t batch_size = 64;
};

// Fully connected rectifier network with a linear scalar output.
// weights[l] is widths[l] x widths[l+1]; biases[l] has widths[l+1] entries.
struct MlpModel {
    std::vector<std::size_t> widths;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    MlpConfig config;
    std::vector<double> train_loss_history;

    std::size_t input_width() const noexcept { return widths.front(); }
    std::size_t layer_count() const noexcept { return weights.size(); }

    std::vector<double> predict(const Matrix& features) const;
};

namespace detail {

// out = in * W + b, rectified unless this is the output layer. The j-loop
// skips exact zeros: standardized constant columns and dead rectifier units
// contribute nothing, and sparse inputs are common here.
inline void mlp_layer_forward(const Matrix& in, const Matrix& w,
                              const std::vector<double>& b, bool rectify,
                              Matrix& out) {
    const std::size_t n = in.rows(), in_w = w.rows(), out_w = w.cols();
    out = Matrix(n, out_w);
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = in.row(i);
        double* dst = out.row(i);
        for (std::size_t k = 0; k < out_w; ++k) dst[k] = b[k];
        for (std::size_t j = 0; j < in_w; ++j) {
            const double v = src[j];
            if (v == 0.0) continue;
            const double* wr = w.row(j);
            for (std::size_t k = 0; k < out_w; ++k) dst[k] += v * wr[k];
        }
        if (rectify)
            for (std::size_t k = 0; k < out_w; ++k)
                if (dst[k] < 0.0) dst[k] = 0.0;
    }
}

// Activations for every layer; act[0] aliases the input copy, act[L] is the
// n x 1 prediction column.
inline void mlp_forward_all(const MlpModel& m, const Matrix& x,
                            std::vector<Matrix>& act) {
    const std::size_t layers = m.layer_count();
    act.resize(layers + 1);
    act[0] = x;
    for (std::size_t l = 0; l < layers; ++l)
        mlp_layer_forward(act[l], m.weights[l], m.biases[l], l + 1 < layers,
                          act[l + 1]);
}

}  // namespace detail

inline double mlp_forward(const MlpModel& m, const std::vector<double>& x) {
    if (x.size() != m.input_width())
        throw ParameterError(detail::cat("mlp_forward: expected ",
                                         m.input_width(), " features, got ",
                                         x.size()));
    Matrix row(1, x.size());
    std::copy(x.begin(), x.end(), row.row(0));
    std::vector<Matrix> act;
    detail::mlp_forward_all(m, row, act);
    return act.back()(0, 0);
}

inline std::vector<double> MlpModel::predict(const Matrix& features) const {
    if (features.rows() == 0) return {};
    if (features.cols() != input_width())
        throw ParameterError(detail::cat("mlp predict: expected ",
                                         input_width(), " features, got ",
                                         features.cols()));
    std::vector<Matrix> act;
    detail::mlp_forward_all(*this, features, act);
    std::vector<double> out(features.rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = act.back()(i, 0);
    return out;
}

struct MlpGradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

namespace detail {

// Batch-MSE backprop. Fills grad with the exact analytic gradients and
// returns the batch MSE; act is reusable scratch.
inline double mlp_backward(const MlpModel& m, const Matrix& x,
                           const std::vector<double>& y,
                           std::vector<Matrix>& act, MlpGradients& grad) {
    const std::size_t n = x.rows();
    const std::size_t layers = m.layer_count();
    mlp_forward_all(m, x, act);

    grad.weights.resize(layers);
    grad.biases.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        grad.weights[l] = Matrix(m.weights[l].rows(), m.weights[l].cols());
        grad.biases[l].assign(m.biases[l].size(), 0.0);
    }

    double loss = 0.0;
    Matrix delta(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = act[layers](i, 0) - y[i];
        loss += r * r;
        delta(i, 0) = 2.0 * r / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);

    for (std::size_t l = layers; l-- > 0;) {
        const Matrix& a_prev = act[l];
        Matrix& dw = grad.weights[l];
        std::vector<double>& db = grad.biases[l];
        const std::size_t out_w = dw.cols();
        for (std::size_t i = 0; i < n; ++i) {
            const double* ar = a_prev.row(i);
            const double* dr = delta.row(i);
            for (std::size_t k = 0; k < out_w; ++k) db[k] += dr[k];
            for (std::size_t j = 0; j < dw.rows(); ++j) {
                const double a = ar[j];
                if (a == 0.0) continue;
                double* dwr = dw.row(j);
                for (std::size_t k = 0; k < out_w; ++k) dwr[k] += a * dr[k];
            }
        }
        if (l == 0) break;
        // delta_prev = (delta * W^T) masked by the rectifier gate; a == 0
        // marks a closed gate (or an exact-zero input, where the product is
        // zero anyway).
        Matrix prev(n, m.weights[l].rows());
        const Matrix& w = m.weights[l];
        for (std::size_t i = 0; i < n; ++i) {
            const double* dr = delta.row(i);
            const double* ar = a_prev.row(i);
            double* pr = prev.row(i);
            for (std::size_t j = 0; j < w.rows(); ++j) {
                if (ar[j] == 0.0) {
                    pr[j] = 0.0;
                    continue;
                }
                const double* wr = w.row(j);
                double s = 0.0;
                for (std::size_t k = 0; k < out_w; ++k) s += dr[k] * wr[k];
                pr[j] = s;
            }
        }
        delta = std::move(prev);
    }
    return loss;
}

}  // namespace detail

inline MlpGradients mlp_gradient(const MlpModel& m, const Matrix& x,
                                 const std::vector<double>& y) {
    if (x.rows() == 0)
        throw ParameterError("mlp_gradient: empty batch");
    if (x.cols() != m.input_width())
        throw ParameterError(detail::cat("mlp_gradient: expected ",
                                         m.input_width(), " features, got ",
                                         x.cols()));
    if (y.size() != x.rows())
        throw ParameterError(detail::cat("mlp_gradient: ", x.rows(),
                                         " rows vs ", y.size(), " targets"));
    MlpGradients grad;
    std::vector<Matrix> act;
    detail::mlp_backward(m, x, y, act, grad);
    return grad;
}

// He-scaled Gaussian init on the hidden layers; the output layer starts at
// zero so an untrained model predicts 0 for every input.
inline MlpModel mlp_init(std::size_t input_width, const MlpConfig& config,
                         RngHandle& rng) {
    if (input_width == 0) throw ParameterError("mlp_init: zero input width");
    MlpModel m;
    m.config = config;
    m.widths.push_back(input_width);
    for (std::size_t h : config.hidden) {
        if (h == 0) throw ParameterError("mlp_init: zero-width hidden layer");
        m.widths.push_back(h);
    }
    m.widths.push_back(1);
    const std::size_t layers = m.widths.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        Matrix w(m.widths[l], m.widths[l + 1]);
        if (l + 1 < layers) {
            const double scale = std::sqrt(2.0 / static_cast<double>(m.widths[l]));
            for (std::size_t j = 0; j < w.rows(); ++j)
                for (std::size_t k = 0; k < w.cols(); ++k)
                    w(j, k) = scale * rng.normal();
        }
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(m.widths[l + 1], 0.0);
    }
    return m;
}

// Mini-batch training with the configured optimizer (adam or momentum SGD)
// and optional cosine learning-rate decay. Epoch order reshuffles from the
// fit stream, so identical (data, config, seed) gives identical weights.
inline MlpModel mlp_fit(const Matrix& features, const std::vector<double>& targets,
                        const MlpConfig& config, RngHandle rng) {
    const std::size_t n = features.rows();
    if (n == 0 || features.cols() == 0)
        throw ParameterError("mlp_fit: empty training set");
    if (targets.size() != n)
        throw ParameterError(detail::cat("mlp_fit: ", n, " rows vs ",
                                         targets.size(), " targets"));
    if (config.batch_size == 0 || n < config.batch_size)
        throw ParameterError(detail::cat("mlp_fit: batch size ",
                                         config.batch_size,
                                         " exceeds sample count ", n));

    MlpModel m = mlp_init(features.cols(), config, rng);

    std::vector<Matrix> act;
    {
        detail::mlp_forward_all(m, features, act);
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = act.back()(i, 0) - targets[i];
            loss += r * r;
        }
        m.train_loss_history.push_back(loss / static_cast<double>(n));
    }

    MlpGradients grad;
    // First-moment (velocity) state for both optimizers; second-moment only
    // for adam.
    std::vector<Matrix> vel_w, sq_w;
    std::vector<std::vector<double>> vel_b, sq_b;
    const bool adam = config.optimizer == MlpOptimizer::adam;
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        vel_w.emplace_back(m.weights[l].rows(), m.weights[l].cols());
        vel_b.emplace_back(m.biases[l].size(), 0.0);
        if (adam) {
            sq_w.emplace_back(m.weights[l].rows(), m.weights[l].cols());
            sq_b.emplace_back(m.biases[l].size(), 0.0);
        }
    }
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double beta1_t = 1.0, beta2_t = 1.0;

    const std::size_t b = config.batch_size;
    Matrix xb;
    std::vector<double> yb;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        double lr = config.learning_rate;
        if (config.lr_floor < 1.0 && config.epochs > 1) {
            const double t = static_cast<double>(epoch - 1) /
                             static_cast<double>(config.epochs - 1);
            const double floor = config.learning_rate * config.lr_floor;
            lr = floor + 0.5 * (config.learning_rate - floor) *
                             (1.0 + std::cos(std::numbers::pi * t));
        }
        const std::vector<std::size_t> order = rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += b) {
            const std::size_t rows = std::min(b, n - start);
            xb = Matrix(rows, features.cols());
            yb.resize(rows);
            for (std::size_t i = 0; i < rows; ++i) {
                const std::size_t src = order[start + i];
                std::copy(features.row(src), features.row(src) + features.cols(),
                          xb.row(i));
                yb[i] = targets[src];
            }
            const double loss = detail::mlp_backward(m, xb, yb, act, grad);
            if (!std::isfinite(loss))
                throw DivergenceError(
                    detail::cat("mlp_fit: non-finite loss at epoch ", epoch),
                    static_cast<long>(epoch));
            epoch_loss += loss * static_cast<double>(rows);
            if (adam) {
                beta1_t *= beta1;
                beta2_t *= beta2;
                const double step = lr * std::sqrt(1.0 - beta2_t) / (1.0 - beta1_t);
                for (std::size_t l = 0; l < m.layer_count(); ++l) {
                    Matrix& w = m.weights[l];
                    const Matrix& gw = grad.weights[l];
                    for (std::size_t idx = 0; idx < w.data().size(); ++idx) {
                        const double g = gw.data()[idx];
                        double& mom = vel_w[l].data()[idx];
                        double& sq = sq_w[l].data()[idx];
                        mom = beta1 * mom + (1.0 - beta1) * g;
                        sq = beta2 * sq + (1.0 - beta2) * g * g;
                        w.data()[idx] -= step * mom / (std::sqrt(sq) + adam_eps);
                    }
                    std::vector<double>& bias = m.biases[l];
                    const std::vector<double>& gb = grad.biases[l];
                    for (std::size_t k = 0; k < bias.size(); ++k) {
                        const double g = gb[k];
                        double& mom = vel_b[l][k];
                        double& sq = sq_b[l][k];
                        mom = beta1 * mom + (1.0 - beta1) * g;
                        sq = beta2 * sq + (1.0 - beta2) * g * g;
                        bias[k] -= step * mom / (std::sqrt(sq) + adam_eps);
                    }
                }
            } else {
                for (std::size_t l = 0; l < m.layer_count(); ++l) {
                    Matrix& w = m.weights[l];
                    Matrix& vw = vel_w[l];
                    const Matrix& gw = grad.weights[l];
                    for (std::size_t idx = 0; idx < w.data().size(); ++idx) {
                        vw.data()[idx] =
                            config.momentum * vw.data()[idx] - lr * gw.data()[idx];
                        w.data()[idx] += vw.data()[idx];
                    }
                    std::vector<double>& bias = m.biases[l];
                    std::vector<double>& vb = vel_b[l];
                    const std::vector<double>& gb = grad.biases[l];
                    for (std::size_t k = 0; k < bias.size(); ++k) {
                        vb[k] = config.momentum * vb[k] - lr * gb[k];
                        bias[k] += vb[k];
                    }
                }
            }
        }
        m.train_loss_history.push_back(epoch_loss / static_cast<double>(n));
    }
    return m;
}

}  // namespace spinml
