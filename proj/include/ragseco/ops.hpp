#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ragseco/rng.hpp"
#include "ragseco/sparse.hpp"
#include "ragseco/tensor.hpp"

namespace ragseco::ad::ops {

inline void require_rank2(const Tensor& t, const char* who) {
    if (t.rank() != 2)
        throw ShapeError(std::string(who) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
}

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    {
        const double* av = a.values().data();
        const double* bv = b.values().data();
        double* ov = out.values().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = av[i * k + p];
                if (aip == 0.0) continue;
                const double* brow = bv + p * n;
                double* orow = ov + i * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
            }
    }
    if (a.needs_grad() || b.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
            const double* go = out.grad().data();
            if (a.needs_grad()) {
                double* ga = a.grad().data();
                const double* bv = b.values().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* gr = go + i * n;
                        const double* br = bv + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += gr[j] * br[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (b.needs_grad()) {
                double* gb = b.grad().data();
                const double* av = a.values().data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = av[i * k + p];
                        if (aip == 0.0) continue;
                        const double* gr = go + i * n;
                        double* gbr = gb + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbr[j] += aip * gr[j];
                    }
            }
        });
    }
    return out;
}

// Sparse weights are constants; gradient flows to the dense operand only.
inline Tensor spmm(Tape& tape, const SparseMatrix& s, const Tensor& d) {
    require_rank2(d, "spmm");
    if (s.cols() != d.rows())
        throw ShapeError("spmm: inner dimensions differ, [" + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + "] x " + shape_str(d.shape()));
    const std::size_t n = d.cols();
    Tensor out = Tensor::zeros({s.rows(), n});
    {
        const double* dv = d.values().data();
        double* ov = out.values().data();
        for (const auto& e : s.entries()) {
            const double* drow = dv + e.col * n;
            double* orow = ov + e.row * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += e.weight * drow[j];
        }
    }
    if (d.needs_grad()) {
        out.mark_graph_output();
        const std::vector<SparseMatrix::Entry> entries = s.entries();
        tape.record([entries, d, out, n]() mutable {
            if (!out.has_grad()) return;
            const double* go = out.grad().data();
            double* gd = d.grad().data();
            for (const auto& e : entries) {
                const double* grow = go + e.row * n;
                double* drow = gd + e.col * n;
                for (std::size_t j = 0; j < n; ++j) drow[j] += e.weight * grow[j];
            }
        });
    }
    return out;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.values()[i] = a.values()[i] + b.values()[i];
    if (a.needs_grad() || b.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            if (a.needs_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (b.needs_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        });
    }
    return out;
}

// a[m x n] + bias[n] broadcast over rows
inline Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& bias) {
    require_rank2(a, "add_rowvec");
    if (bias.rank() != 1 || bias.numel() != a.cols())
        throw ShapeError("add_rowvec: bias " + shape_str(bias.shape()) + " does not match columns of " +
                         shape_str(a.shape()));
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.values()[i * n + j] = a.values()[i * n + j] + bias.values()[j];
    if (a.needs_grad() || bias.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, bias, out]() mutable {
            if (!out.has_grad()) return;
            const std::size_t m = a.rows(), n = a.cols();
            const auto& go = out.grad();
            if (a.needs_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (bias.needs_grad()) {
                auto& gb = bias.grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
            }
        });
    }
    return out;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.values()[i] = a.values()[i] * b.values()[i];
    if (a.needs_grad() || b.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, b, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            if (a.needs_grad()) {
                auto& ga = a.grad();
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.values()[i];
            }
            if (b.needs_grad()) {
                auto& gb = b.grad();
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.values()[i];
            }
        });
    }
    return out;
}

inline Tensor scale(Tape& tape, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = c * a.values()[i];
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out, c]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += c * go[i];
        });
    }
    return out;
}

inline Tensor add_const(Tape& tape, const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] + c;
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        });
    }
    return out;
}

inline Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                if (a.values()[i] > 0.0) ga[i] += go[i];
        });
    }
    return out;
}

inline double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
    const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794; // 1/sqrt(2*pi)
    return cdf + x * pdf;
}

inline Tensor gelu(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = gelu_value(a.values()[i]);
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i)
                ga[i] += go[i] * gelu_derivative(a.values()[i]);
        });
    }
    return out;
}

inline double sigmoid_value(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    // keep strictly inside (0,1); saturated tails carry ~zero gradient anyway
    const double hi = std::nextafter(1.0, 0.0);
    return std::min(std::max(y, 5e-324), hi);
}

inline Tensor sigmoid(Tape& tape, const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = sigmoid_value(a.values()[i]);
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) {
                const double y = out.values()[i];
                ga[i] += go[i] * y * (1.0 - y);
            }
        });
    }
    return out;
}

inline Tensor softmax_rows(Tape& tape, const Tensor& a) {
    require_rank2(a, "softmax_rows");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.values().data() + i * n;
        double* orow = out.values().data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (std::size_t j = 0; j < n; ++j) orow[j] /= z;
    }
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const std::size_t m = a.rows(), n = a.cols();
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = out.values().data() + i * n;
                const double* g = go.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

// log of the input clamped into [lo, hi]; gradient is zero outside the clamp range
inline Tensor log_clamped(Tape& tape, const Tensor& a, double lo = 1e-12,
                          double hi = 1.0 - 1e-12) {
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.values()[i] = std::log(std::min(std::max(a.values()[i], lo), hi));
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out, lo, hi]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) {
                const double x = a.values()[i];
                if (x >= lo && x <= hi) ga[i] += go[i] / x;
            }
        });
    }
    return out;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    Tensor out = Tensor::from({1}, {acc});
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const double g = out.grad()[0];
            auto& ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

// m x n -> m x 1
inline Tensor row_sum(Tape& tape, const Tensor& a) {
    require_rank2(a, "row_sum");
    const std::size_t m = a.rows(), n = a.cols();
    Tensor out = Tensor::zeros({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += a.values()[i * n + j];
        out.values()[i] = acc;
    }
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out]() mutable {
            if (!out.has_grad()) return;
            const std::size_t m = a.rows(), n = a.cols();
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[i];
        });
    }
    return out;
}

inline Tensor concat_cols(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_cols");
        if (p.rows() != m)
            throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()));
        total += p.cols();
    }
    Tensor out = Tensor::zeros({m, total});
    bool any_grad = false;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        const std::size_t n = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out.values()[i * total + off + j] = p.values()[i * n + j];
        off += n;
        any_grad = any_grad || p.needs_grad();
    }
    if (any_grad) {
        out.mark_graph_output();
        std::vector<Tensor> held(parts.begin(), parts.end());
        tape.record([held, out, m, total]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            std::size_t off = 0;
            for (Tensor& p : held) {
                const std::size_t n = p.cols();
                if (p.needs_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            gp[i * n + j] += go[i * total + off + j];
                }
                off += n;
            }
        });
    }
    return out;
}

inline Tensor concat_cols(Tape& tape, std::initializer_list<Tensor> parts) {
    std::vector<Tensor> v(parts);
    return concat_cols(tape, std::span<const Tensor>(v));
}

inline Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t n = parts[0].cols();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_rank2(p, "concat_rows");
        if (p.cols() != n)
            throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
        total += p.rows();
    }
    Tensor out = Tensor::zeros({total, n});
    bool any_grad = false;
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values().begin(), p.values().end(), out.values().begin() + off * n);
        off += p.rows();
        any_grad = any_grad || p.needs_grad();
    }
    if (any_grad) {
        out.mark_graph_output();
        std::vector<Tensor> held(parts.begin(), parts.end());
        tape.record([held, out, n]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            std::size_t off = 0;
            for (Tensor& p : held) {
                const std::size_t cnt = p.rows() * n;
                if (p.needs_grad()) {
                    auto& gp = p.grad();
                    for (std::size_t i = 0; i < cnt; ++i) gp[i] += go[off * n + i];
                }
                off += p.rows();
            }
        });
    }
    return out;
}

inline Tensor gather_rows(Tape& tape, const Tensor& a, std::vector<std::size_t> idx) {
    require_rank2(a, "gather_rows");
    const std::size_t n = a.cols();
    for (std::size_t i : idx)
        if (i >= a.rows())
            throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                             shape_str(a.shape()));
    Tensor out = Tensor::zeros({idx.size(), n});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(a.values().begin() + idx[r] * n, a.values().begin() + (idx[r] + 1) * n,
                  out.values().begin() + r * n);
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out, idx = std::move(idx), n]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += go[r * n + j];
        });
    }
    return out;
}

// Inverted dropout: survivors rescaled by 1/(1-rate) so eval is the identity.
inline Tensor dropout(Tape& tape, const Tensor& a, double rate, Mode mode, rng::Engine& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout rate must lie in [0,1), got " + std::to_string(rate));
    if (mode == Mode::eval || rate == 0.0) return a;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(a.numel());
    for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] * mask[i];
    if (a.needs_grad()) {
        out.mark_graph_output();
        tape.record([a, out, mask = std::move(mask)]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& ga = a.grad();
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * mask[i];
        });
    }
    return out;
}

// Valid (no padding) 1-D cross-correlation, stride 1.
// x: [in_ch x len], w: [out_ch x (in_ch*k)], bias: [out_ch]
inline Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias,
                     std::size_t kernel) {
    require_rank2(x, "conv1d");
    require_rank2(w, "conv1d");
    const std::size_t in_ch = x.rows(), len = x.cols();
    if (kernel == 0 || w.cols() != in_ch * kernel)
        throw ShapeError("conv1d: weight " + shape_str(w.shape()) + " does not match " +
                         std::to_string(in_ch) + " channels with kernel " + std::to_string(kernel));
    if (len < kernel)
        throw ShapeError("conv1d: input length " + std::to_string(len) +
                         " shorter than kernel " + std::to_string(kernel));
    const std::size_t out_ch = w.rows();
    if (bias.rank() != 1 || bias.numel() != out_ch)
        throw ShapeError("conv1d: bias " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(out_ch) + " output channels");
    const std::size_t out_len = len - kernel + 1;
    Tensor out = Tensor::zeros({out_ch, out_len});
    for (std::size_t o = 0; o < out_ch; ++o) {
        const double* wrow = w.values().data() + o * in_ch * kernel;
        double* orow = out.values().data() + o * out_len;
        for (std::size_t t = 0; t < out_len; ++t) orow[t] = bias.values()[o];
        for (std::size_t c = 0; c < in_ch; ++c) {
            const double* xrow = x.values().data() + c * len;
            for (std::size_t u = 0; u < kernel; ++u) {
                const double wv = wrow[c * kernel + u];
                if (wv == 0.0) continue;
                for (std::size_t t = 0; t < out_len; ++t) orow[t] += wv * xrow[t + u];
            }
        }
    }
    if (x.needs_grad() || w.needs_grad() || bias.needs_grad()) {
        out.mark_graph_output();
        tape.record([x, w, bias, out, kernel]() mutable {
            if (!out.has_grad()) return;
            const std::size_t in_ch = x.rows(), len = x.cols();
            const std::size_t out_ch = w.rows(), out_len = len - kernel + 1;
            const auto& go = out.grad();
            for (std::size_t o = 0; o < out_ch; ++o) {
                const double* grow = go.data() + o * out_len;
                if (bias.needs_grad()) {
                    double acc = 0.0;
                    for (std::size_t t = 0; t < out_len; ++t) acc += grow[t];
                    bias.grad()[o] += acc;
                }
                for (std::size_t c = 0; c < in_ch; ++c) {
                    const double* xrow = x.values().data() + c * len;
                    const double* wrow = w.values().data() + o * in_ch * kernel;
                    for (std::size_t u = 0; u < kernel; ++u) {
                        if (w.needs_grad()) {
                            double acc = 0.0;
                            for (std::size_t t = 0; t < out_len; ++t) acc += grow[t] * xrow[t + u];
                            w.grad()[o * in_ch * kernel + c * kernel + u] += acc;
                        }
                        if (x.needs_grad()) {
                            const double wv = wrow[c * kernel + u];
                            if (wv == 0.0) continue;
                            double* gx = x.grad().data() + c * len;
                            for (std::size_t t = 0; t < out_len; ++t) gx[t + u] += wv * grow[t];
                        }
                    }
                }
            }
        });
    }
    return out;
}

// [ch x len] -> [1 x ch]; gradient routes to the first position attaining the max
inline Tensor global_max_pool(Tape& tape, const Tensor& x) {
    require_rank2(x, "global_max_pool");
    const std::size_t ch = x.rows(), len = x.cols();
    Tensor out = Tensor::zeros({1, ch});
    std::vector<std::size_t> argmax(ch, 0);
    for (std::size_t c = 0; c < ch; ++c) {
        const double* row = x.values().data() + c * len;
        std::size_t best = 0;
        for (std::size_t t = 1; t < len; ++t)
            if (row[t] > row[best]) best = t;
        argmax[c] = best;
        out.values()[c] = row[best];
    }
    if (x.needs_grad()) {
        out.mark_graph_output();
        tape.record([x, out, argmax = std::move(argmax), len]() mutable {
            if (!out.has_grad()) return;
            const auto& go = out.grad();
            auto& gx = x.grad();
            for (std::size_t c = 0; c < argmax.size(); ++c) gx[c * len + argmax[c]] += go[c];
        });
    }
    return out;
}

enum class Activation { relu, gelu, sigmoid, softmax_rows };

inline Tensor activation(Tape& tape, const Tensor& x, Activation kind) {
    switch (kind) {
        case Activation::relu: return relu(tape, x);
        case Activation::gelu: return gelu(tape, x);
        case Activation::sigmoid: return sigmoid(tape, x);
        case Activation::softmax_rows: return softmax_rows(tape, x);
    }
    throw ContractError("activation: unknown kind");
}

// Batch normalization over the row (batch) dimension of a [b x f] tensor.
// Train mode normalizes with biased batch statistics and updates running
// statistics with momentum (unbiased variance, matching the usual convention);
// eval mode applies the running statistics.
struct BatchNorm {
    Tensor gamma;
    Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNorm(std::size_t features)
        : gamma(Tensor::full({features}, 1.0, true)),
          beta(Tensor::zeros({features}, true)),
          running_mean(features, 0.0),
          running_var(features, 1.0) {}

    std::size_t features() const { return gamma.numel(); }

    Tensor forward(Tape& tape, const Tensor& x, Mode mode) {
        require_rank2(x, "batchnorm");
        const std::size_t b = x.rows(), f = x.cols();
        if (f != features())
            throw ShapeError("batchnorm: input " + shape_str(x.shape()) + " does not match " +
                             std::to_string(features()) + " features");
        if (mode == Mode::train && b < 2)
            throw ContractError("batchnorm: train mode requires batch size >= 2 (variance undefined)");

        std::vector<double> mean(f, 0.0), var(f, 0.0);
        if (mode == Mode::train) {
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < f; ++j) mean[j] += x.values()[i * f + j];
            for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t j = 0; j < f; ++j) {
                    const double d = x.values()[i * f + j] - mean[j];
                    var[j] += d * d;
                }
            for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(b);
            const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
            for (std::size_t j = 0; j < f; ++j) {
                running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j];
                running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j] * unbias;
            }
        } else {
            mean = running_mean;
            var = running_var;
        }

        std::vector<double> inv_std(f);
        for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

        std::vector<double> xhat(b * f);
        Tensor out = Tensor::zeros({b, f});
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < f; ++j) {
                const double h = (x.values()[i * f + j] - mean[j]) * inv_std[j];
                xhat[i * f + j] = h;
                out.values()[i * f + j] = gamma.values()[j] * h + beta.values()[j];
            }

        if (x.needs_grad() || gamma.needs_grad() || beta.needs_grad()) {
            out.mark_graph_output();
            Tensor g = gamma, be = beta, xin = x;
            tape.record([xin, g, be, out, xhat = std::move(xhat), inv_std = std::move(inv_std),
                         b, f, mode]() mutable {
                if (!out.has_grad()) return;
                const auto& go = out.grad();
                if (g.needs_grad()) {
                    auto& gg = g.grad();
                    for (std::size_t i = 0; i < b; ++i)
                        for (std::size_t j = 0; j < f; ++j)
                            gg[j] += go[i * f + j] * xhat[i * f + j];
                }
                if (be.needs_grad()) {
                    auto& gb = be.grad();
                    for (std::size_t i = 0; i < b; ++i)
                        for (std::size_t j = 0; j < f; ++j) gb[j] += go[i * f + j];
                }
                if (!xin.needs_grad()) return;
                auto& gx = xin.grad();
                if (mode == Mode::eval) {
                    // running statistics are constants in eval mode
                    for (std::size_t i = 0; i < b; ++i)
                        for (std::size_t j = 0; j < f; ++j)
                            gx[i * f + j] += go[i * f + j] * g.values()[j] * inv_std[j];
                    return;
                }
                // batch statistics participate in the gradient in train mode
                std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < f; ++j) {
                        sum_g[j] += go[i * f + j];
                        sum_gx[j] += go[i * f + j] * xhat[i * f + j];
                    }
                const double inv_b = 1.0 / static_cast<double>(b);
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < f; ++j) {
                        const double term = go[i * f + j] - inv_b * sum_g[j] -
                                            inv_b * xhat[i * f + j] * sum_gx[j];
                        gx[i * f + j] += g.values()[j] * inv_std[j] * term;
                    }
            });
        }
        return out;
    }
};

} // namespace ragseco::ad::ops
