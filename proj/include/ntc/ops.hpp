#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ntc/tensor.hpp"

namespace ntc {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<MatRM<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const MatRM<T>>;

namespace detail {

template <typename T>
inline void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---- dense algebra ----

template <typename T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
    if (a.shape().size() != 2 || b.shape().size() != 2)
        throw ShapeError("matmul: expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));

    std::vector<T> out(m * n);
    MatMap<T>(out.data(), m, n).noalias() =
        ConstMatMap<T>(a.data().data(), m, k) * ConstMatMap<T>(b.data().data(), k, n);

    auto backprop = [a, b, m, k, n](typename Tensor<T>::Impl& self) mutable {
        ConstMatMap<T> dC(self.grad.data(), m, n);
        if (a.node()->tracked) {
            MatMap<T> dA(a.node()->ensure_grad().data(), m, k);
            dA.noalias() += dC * ConstMatMap<T>(b.data().data(), k, n).transpose();
        }
        if (b.node()->tracked) {
            MatMap<T> dB(b.node()->ensure_grad().data(), k, n);
            dB.noalias() += ConstMatMap<T>(a.data().data(), m, k).transpose() * dC;
        }
    };
    return Tensor<T>::op_result({m, n}, std::move(out), {a, b}, std::move(backprop));
}

// x (..., U) + b (U), broadcast over all leading dimensions.
template <typename T>
Tensor<T> add_bias(Tensor<T> x, Tensor<T> b) {
    if (x.shape().empty() || b.shape().size() != 1 || x.shape().back() != b.shape()[0])
        throw ShapeError("add_bias: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t u = b.shape()[0];
    const std::size_t rows = x.size() / u;

    std::vector<T> out(x.data());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < u; ++j) out[r * u + j] += b.data()[j];

    auto backprop = [x, b, rows, u](typename Tensor<T>::Impl& self) mutable {
        if (x.node()->tracked) {
            auto& dx = x.node()->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
        }
        if (b.node()->tracked) {
            auto& db = b.node()->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < u; ++j) db[j] += self.grad[r * u + j];
        }
    };
    return Tensor<T>::op_result(x.shape(), std::move(out), {x, b}, std::move(backprop));
}

template <typename T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    detail::check_same_shape("add", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto backprop = [a, b](typename Tensor<T>::Impl& self) mutable {
        for (Tensor<T>* p : {&a, &b}) {
            if (!p->node()->tracked) continue;
            auto& g = p->node()->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        }
    };
    return Tensor<T>::op_result(a.shape(), std::move(out), {a, b}, std::move(backprop));
}

template <typename T>
Tensor<T> elementwise_mul(Tensor<T> a, Tensor<T> b) {
    detail::check_same_shape("elementwise_mul", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto backprop = [a, b](typename Tensor<T>::Impl& self) mutable {
        if (a.node()->tracked) {
            auto& da = a.node()->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] * b.data()[i];
        }
        if (b.node()->tracked) {
            auto& db = b.node()->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += self.grad[i] * a.data()[i];
        }
    };
    return Tensor<T>::op_result(a.shape(), std::move(out), {a, b}, std::move(backprop));
}

// ---- activations ----

template <typename T>
Tensor<T> relu(Tensor<T> x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    auto backprop = [x](typename Tensor<T>::Impl& self) mutable {
        if (!x.node()->tracked) return;
        auto& dx = x.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (x.data()[i] > T(0)) dx[i] += self.grad[i];
    };
    return Tensor<T>::op_result(x.shape(), std::move(out), {x}, std::move(backprop));
}

template <typename T>
Tensor<T> sigmoid(Tensor<T> x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
    auto backprop = [x](typename Tensor<T>::Impl& self) mutable {
        if (!x.node()->tracked) return;
        auto& dx = x.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T y = self.data[i];
            dx[i] += self.grad[i] * y * (T(1) - y);
        }
    };
    return Tensor<T>::op_result(x.shape(), std::move(out), {x}, std::move(backprop));
}

template <typename T>
Tensor<T> tanh_act(Tensor<T> x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
    auto backprop = [x](typename Tensor<T>::Impl& self) mutable {
        if (!x.node()->tracked) return;
        auto& dx = x.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T y = self.data[i];
            dx[i] += self.grad[i] * (T(1) - y * y);
        }
    };
    return Tensor<T>::op_result(x.shape(), std::move(out), {x}, std::move(backprop));
}

// ---- shape ops ----

template <typename T>
Tensor<T> reshape(Tensor<T> x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(new_shape));
    auto backprop = [x](typename Tensor<T>::Impl& self) mutable {
        if (!x.node()->tracked) return;
        auto& dx = x.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
    };
    return Tensor<T>::op_result(std::move(new_shape), std::vector<T>(x.data()), {x},
                                std::move(backprop));
}

template <typename T>
Tensor<T> concat(std::vector<Tensor<T>> parts, std::size_t axis) {
    if (parts.empty()) throw ArgumentError("concat: empty input list");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw ShapeError("concat: axis out of range");
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != first.size())
            throw ShapeError("concat: rank mismatch " + shape_str(p.shape()));
        for (std::size_t d = 0; d < first.size(); ++d)
            if (d != axis && p.shape()[d] != first[d])
                throw ShapeError("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                 shape_str(first));
        axis_total += p.shape()[axis];
    }
    Shape out_shape = first;
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    std::vector<T> out(shape_numel(out_shape));
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t block = p.shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(p.data().data() + o * block, block,
                        out.data() + o * axis_total * inner + off);
        off += block;
    }

    auto backprop = [parts, outer, inner, axis_total](typename Tensor<T>::Impl& self) mutable {
        std::size_t off = 0;
        for (auto& p : parts) {
            const std::size_t block = p.size() / outer;
            if (p.node()->tracked) {
                auto& dp = p.node()->ensure_grad();
                for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < block; ++i)
                        dp[o * block + i] += self.grad[o * axis_total * inner + off + i];
            }
            off += block;
        }
    };
    return Tensor<T>::op_result(std::move(out_shape), std::move(out), parts, std::move(backprop));
}

// ---- convolution ----

enum class Padding { Valid, Same };

// Cross-correlation of x (N,Cin,H,W) with kernels w (Cout,Cin,kh,kw), stride 1.
// Same padding distributes the deficit with the extra row/column at the
// bottom/right (TF convention), so a 2x2 kernel pads only bottom and right.
template <typename T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> b, Padding padding) {
    if (x.shape().size() != 4 || w.shape().size() != 4)
        throw ShapeError("conv2d: expects input (N,Cin,H,W) and kernel (Cout,Cin,kh,kw), got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const std::size_t n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    const std::size_t cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (n == 0) throw ArgumentError("conv2d: empty batch");
    if (w.shape()[1] != cin)
        throw ShapeError("conv2d: channel mismatch " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    if (b.shape() != Shape{cout})
        throw ShapeError("conv2d: bias shape " + shape_str(b.shape()) + " does not match " +
                         std::to_string(cout) + " filters");

    std::size_t pad_top = 0, pad_left = 0, ho, wo;
    if (kh > h || kw > wd)
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " larger than input " +
                         shape_str(x.shape()));
    if (padding == Padding::Same) {
        pad_top = (kh - 1) / 2;
        pad_left = (kw - 1) / 2;
        ho = h;
        wo = wd;
    } else {
        ho = h - kh + 1;
        wo = wd - kw + 1;
    }

    // im2col: one row per output position, one column per kernel tap.
    const std::size_t cols = cin * kh * kw;
    const std::size_t rows = n * ho * wo;
    std::vector<T> col(rows * cols, T(0));
    const T* xd = x.data().data();
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T* row = col.data() + ((img * ho + oy) * wo + ox) * cols;
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t ky = 0; ky < kh; ++ky) {
                        const std::ptrdiff_t iy =
                            std::ptrdiff_t(oy + ky) - std::ptrdiff_t(pad_top);
                        if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::ptrdiff_t ix =
                                std::ptrdiff_t(ox + kx) - std::ptrdiff_t(pad_left);
                            if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
                            row[(c * kh + ky) * kw + kx] =
                                xd[((img * cin + c) * h + iy) * wd + ix];
                        }
                    }
            }

    // out_mat (rows, cout) = col (rows, cols) * w_mat^T, then layout to NCHW.
    std::vector<T> out_mat(rows * cout);
    MatMap<T>(out_mat.data(), rows, cout).noalias() =
        ConstMatMap<T>(col.data(), rows, cols) *
        ConstMatMap<T>(w.data().data(), cout, cols).transpose();

    std::vector<T> out(n * cout * ho * wo);
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t p = 0; p < ho * wo; ++p) {
            const T* src = out_mat.data() + (img * ho * wo + p) * cout;
            for (std::size_t c = 0; c < cout; ++c)
                out[((img * cout + c) * ho * wo) + p] = src[c] + b.data()[c];
        }

    auto backprop = [x, w, b, col = std::move(col), n, cin, h, wd, cout, kh, kw, ho, wo, pad_top,
                     pad_left, rows, cols](typename Tensor<T>::Impl& self) mutable {
        // Re-pack dOut from NCHW into (rows, cout).
        std::vector<T> dout_mat(rows * cout);
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t p = 0; p < ho * wo; ++p)
                for (std::size_t c = 0; c < cout; ++c)
                    dout_mat[(img * ho * wo + p) * cout + c] =
                        self.grad[((img * cout + c) * ho * wo) + p];

        if (b.node()->tracked) {
            auto& db = b.node()->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cout; ++c) db[c] += dout_mat[r * cout + c];
        }
        if (w.node()->tracked) {
            MatMap<T> dW(w.node()->ensure_grad().data(), cout, cols);
            dW.noalias() += ConstMatMap<T>(dout_mat.data(), rows, cout).transpose() *
                            ConstMatMap<T>(col.data(), rows, cols);
        }
        if (x.node()->tracked) {
            std::vector<T> dcol(rows * cols);
            MatMap<T>(dcol.data(), rows, cols).noalias() =
                ConstMatMap<T>(dout_mat.data(), rows, cout) *
                ConstMatMap<T>(w.data().data(), cout, cols);
            auto& dx = x.node()->ensure_grad();
            for (std::size_t img = 0; img < n; ++img)
                for (std::size_t oy = 0; oy < ho; ++oy)
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const T* row = dcol.data() + ((img * ho + oy) * wo + ox) * cols;
                        for (std::size_t c = 0; c < cin; ++c)
                            for (std::size_t ky = 0; ky < kh; ++ky) {
                                const std::ptrdiff_t iy =
                                    std::ptrdiff_t(oy + ky) - std::ptrdiff_t(pad_top);
                                if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
                                for (std::size_t kx = 0; kx < kw; ++kx) {
                                    const std::ptrdiff_t ix =
                                        std::ptrdiff_t(ox + kx) - std::ptrdiff_t(pad_left);
                                    if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
                                    dx[((img * cin + c) * h + iy) * wd + ix] +=
                                        row[(c * kh + ky) * kw + kx];
                                }
                            }
                    }
        }
    };
    return Tensor<T>::op_result({n, cout, ho, wo}, std::move(out), {x, w, b},
                                std::move(backprop));
}

// Window max over (kh,kw), valid padding. Gradient routes to the first
// maximal element in row-major window scan.
template <typename T>
Tensor<T> maxpool2d(Tensor<T> x, std::size_t kh, std::size_t kw, std::size_t stride) {
    if (x.shape().size() != 4)
        throw ShapeError("maxpool2d: expects (N,C,H,W), got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    if (n == 0) throw ArgumentError("maxpool2d: empty batch");
    if (kh > h || kw > wd)
        throw ShapeError("maxpool2d: window " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " larger than input " + shape_str(x.shape()));
    const std::size_t ho = (h - kh) / stride + 1;
    const std::size_t wo = (wd - kw) / stride + 1;

    std::vector<T> out(n * c * ho * wo);
    std::vector<std::size_t> argmax(out.size());
    const T* xd = x.data().data();
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (img * c + ch) * h * wd;
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_idx = 0;
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx) {
                            const std::size_t idx =
                                base + (oy * stride + ky) * wd + (ox * stride + kx);
                            if (xd[idx] > best) {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    const std::size_t o = ((img * c + ch) * ho + oy) * wo + ox;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
        }

    auto backprop = [x, argmax = std::move(argmax)](typename Tensor<T>::Impl& self) mutable {
        if (!x.node()->tracked) return;
        auto& dx = x.node()->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dx[argmax[i]] += self.grad[i];
    };
    return Tensor<T>::op_result({n, c, ho, wo}, std::move(out), {x}, std::move(backprop));
}

// ---- batch normalization ----

template <typename T>
struct BatchNormStats {
    std::vector<T> running_mean;
    std::vector<T> running_var;

    explicit BatchNormStats(std::size_t channels = 0)
        : running_mean(channels, T(0)), running_var(channels, T(1)) {}
};

// Per-channel normalization over (N,H,W). Training mode uses batch statistics
// and updates the running ones; inference mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm2d(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, BatchNormStats<T>& stats,
                      bool training, T eps = T(1e-5), T momentum = T(0.1)) {
    if (x.shape().size() != 4)
        throw ShapeError("batchnorm2d: expects (N,C,H,W), got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    if (n == 0) throw ArgumentError("batchnorm2d: empty batch");
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || stats.running_mean.size() != c)
        throw ShapeError("batchnorm2d: parameter size does not match " + std::to_string(c) +
                         " channels");
    const std::size_t spatial = h * wd;
    const std::size_t m = n * spatial;

    std::vector<T> mean(c), var(c);
    if (training) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            T s = 0;
            for (std::size_t img = 0; img < n; ++img) {
                const T* p = x.data().data() + (img * c + ch) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) s += p[i];
            }
            mean[ch] = s / T(m);
            T v = 0;
            for (std::size_t img = 0; img < n; ++img) {
                const T* p = x.data().data() + (img * c + ch) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    const T d = p[i] - mean[ch];
                    v += d * d;
                }
            }
            var[ch] = v / T(m);
            const T unbiased = m > 1 ? v / T(m - 1) : v;
            stats.running_mean[ch] =
                (T(1) - momentum) * stats.running_mean[ch] + momentum * mean[ch];
            stats.running_var[ch] = (T(1) - momentum) * stats.running_var[ch] + momentum * unbiased;
        }
    } else {
        mean = stats.running_mean;
        var = stats.running_var;
    }

    std::vector<T> invstd(c), xhat(x.size()), out(x.size());
    for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = T(1) / std::sqrt(var[ch] + eps);
    for (std::size_t img = 0; img < n; ++img)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t base = (img * c + ch) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                const T xh = (x.data()[base + i] - mean[ch]) * invstd[ch];
                xhat[base + i] = xh;
                out[base + i] = xh * gamma.data()[ch] + beta.data()[ch];
            }
        }

    auto backprop = [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), n, c,
                     spatial, m, training](typename Tensor<T>::Impl& self) mutable {
        std::vector<T> sum_dy(c, T(0)), sum_dy_xhat(c, T(0));
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t base = (img * c + ch) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) {
                    sum_dy[ch] += self.grad[base + i];
                    sum_dy_xhat[ch] += self.grad[base + i] * xhat[base + i];
                }
            }
        if (gamma.node()->tracked) {
            auto& dg = gamma.node()->ensure_grad();
            for (std::size_t ch = 0; ch < c; ++ch) dg[ch] += sum_dy_xhat[ch];
        }
        if (beta.node()->tracked) {
            auto& db = beta.node()->ensure_grad();
            for (std::size_t ch = 0; ch < c; ++ch) db[ch] += sum_dy[ch];
        }
        if (x.node()->tracked) {
            auto& dx = x.node()->ensure_grad();
            for (std::size_t img = 0; img < n; ++img)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t base = (img * c + ch) * spatial;
                    const T g = gamma.data()[ch] * invstd[ch];
                    for (std::size_t i = 0; i < spatial; ++i) {
                        const T dy = self.grad[base + i];
                        if (training) {
                            dx[base + i] += g * (dy - sum_dy[ch] / T(m) -
                                                 xhat[base + i] * sum_dy_xhat[ch] / T(m));
                        } else {
                            dx[base + i] += g * dy;
                        }
                    }
                }
        }
    };
    return Tensor<T>::op_result(x.shape(), std::move(out), {x, gamma, beta},
                                std::move(backprop));
}

// ---- softmax / loss ----

namespace detail {

template <typename T>
void softmax_rows(const T* logits, T* probs, std::size_t n, std::size_t c) {
    for (std::size_t r = 0; r < n; ++r) {
        const T* in = logits + r * c;
        T* out = probs + r * c;
        T mx = in[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        T sum = 0;
        for (std::size_t j = 0; j < c; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        for (std::size_t j = 0; j < c; ++j) out[j] /= sum;
    }
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(Tensor<T> logits) {
    if (logits.shape().size() != 2)
        throw ShapeError("softmax: expects (N,C), got " + shape_str(logits.shape()));
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (n == 0) throw ArgumentError("softmax: empty batch");
    std::vector<T> out(logits.size());
    detail::softmax_rows(logits.data().data(), out.data(), n, c);

    auto backprop = [logits, n, c](typename Tensor<T>::Impl& self) mutable {
        if (!logits.node()->tracked) return;
        auto& dx = logits.node()->ensure_grad();
        for (std::size_t r = 0; r < n; ++r) {
            const T* y = self.data.data() + r * c;
            const T* dy = self.grad.data() + r * c;
            T dot = 0;
            for (std::size_t j = 0; j < c; ++j) dot += dy[j] * y[j];
            for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += y[j] * (dy[j] - dot);
        }
    };
    return Tensor<T>::op_result(logits.shape(), std::move(out), {logits}, std::move(backprop));
}

// Row-wise softmax followed by mean negative log-likelihood, fused in
// log-sum-exp form so large logits cannot overflow.
template <typename T>
Tensor<T> softmax_cross_entropy(Tensor<T> logits, const std::vector<std::size_t>& labels) {
    if (logits.shape().size() != 2)
        throw ShapeError("softmax_cross_entropy: expects (N,C), got " + shape_str(logits.shape()));
    const std::size_t n = logits.shape()[0], c = logits.shape()[1];
    if (n == 0) throw ArgumentError("softmax_cross_entropy: empty batch");
    if (labels.size() != n)
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(n));
    for (std::size_t r = 0; r < n; ++r)
        if (labels[r] >= c)
            throw DataError("softmax_cross_entropy: label " + std::to_string(labels[r]) +
                            " out of range for " + std::to_string(c) + " classes");

    std::vector<T> probs(logits.size());
    T loss = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const T* in = logits.data().data() + r * c;
        T mx = in[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        T sum = 0;
        for (std::size_t j = 0; j < c; ++j) {
            probs[r * c + j] = std::exp(in[j] - mx);
            sum += probs[r * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) probs[r * c + j] /= sum;
        loss += std::log(sum) + mx - in[labels[r]];
    }
    loss /= T(n);

    auto backprop = [logits, probs = std::move(probs), labels, n,
                     c](typename Tensor<T>::Impl& self) mutable {
        if (!logits.node()->tracked) return;
        const T scale = self.grad[0] / T(n);
        auto& dx = logits.node()->ensure_grad();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < c; ++j)
                dx[r * c + j] += scale * (probs[r * c + j] - (j == labels[r] ? T(1) : T(0)));
    };
    return Tensor<T>::op_result({1}, {loss}, {logits}, std::move(backprop));
}

}  // namespace ntc
