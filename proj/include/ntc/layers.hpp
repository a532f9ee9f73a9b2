#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ntc/ops.hpp"

namespace ntc {

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
class ParamRng {
  public:
    explicit ParamRng(std::uint64_t seed) : eng_(seed) {}

    T uniform(T lo, T hi) {
        const double u = double(eng_() >> 11) * (1.0 / 9007199254740992.0);
        return lo + (hi - lo) * T(u);
    }

    void glorot_fill(std::vector<T>& w, std::size_t fan_in, std::size_t fan_out) {
        const T limit = std::sqrt(T(6) / T(fan_in + fan_out));
        for (auto& v : w) v = uniform(-limit, limit);
    }

  private:
    std::mt19937_64 eng_;
};

// ---- dense ----

template <typename T>
struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    Tensor<T> weight;  // (in, out)
    Tensor<T> bias;    // (out)

    Dense() = default;
    Dense(std::size_t in_, std::size_t out_, ParamRng<T>& rng) : in(in_), out(out_) {
        std::vector<T> w(in * out);
        rng.glorot_fill(w, in, out);
        weight = Tensor<T>::from_data({in, out}, std::move(w), true);
        bias = Tensor<T>::zeros({out}, true);
    }

    Tensor<T> forward(Tensor<T> x) { return add_bias(matmul(std::move(x), weight), bias); }

    std::size_t param_count() const { return in * out + out; }
    std::string formula() const {
        return std::to_string(in) + "x" + std::to_string(out) + "+" + std::to_string(out);
    }
};

// Shared-weight application of a dense layer to every step of (N, T, S);
// identical to folding the step axis into the batch.
template <typename T>
Tensor<T> time_distributed(Dense<T>& inner, Tensor<T> x) {
    if (x.shape().size() != 3)
        throw ShapeError("time_distributed: expects (N,T,S), got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0], t = x.shape()[1], s = x.shape()[2];
    if (s != inner.in)
        throw ShapeError("time_distributed: inner layer expects " + std::to_string(inner.in) +
                         " features, input has " + std::to_string(s));
    Tensor<T> y = inner.forward(reshape(std::move(x), {n * t, s}));
    return reshape(std::move(y), {n, t, inner.out});
}

// ---- conv block: conv2d(same) -> ReLU -> maxpool 2x2 stride 1 -> batchnorm ----

template <typename T>
struct ConvBlock {
    std::size_t in_channels = 0;
    std::size_t units = 0;
    std::size_t kh = 0;
    std::size_t kw = 0;
    Tensor<T> weight;  // (units, in_channels, kh, kw)
    Tensor<T> bias;    // (units)
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormStats<T> stats;

    ConvBlock() = default;
    ConvBlock(std::size_t in_ch, std::size_t units_, std::size_t kh_, std::size_t kw_,
              ParamRng<T>& rng)
        : in_channels(in_ch), units(units_), kh(kh_), kw(kw_), stats(units_) {
        if (units_ < 1) throw ArgumentError("conv_block: units must be >= 1");
        std::vector<T> w(units * in_channels * kh * kw);
        rng.glorot_fill(w, in_channels * kh * kw, units * kh * kw);
        weight = Tensor<T>::from_data({units, in_channels, kh, kw}, std::move(w), true);
        bias = Tensor<T>::zeros({units}, true);
        gamma = Tensor<T>::from_data({units}, std::vector<T>(units, T(1)), true);
        beta = Tensor<T>::zeros({units}, true);
    }

    Tensor<T> forward(Tensor<T> x, bool training) {
        Tensor<T> y = relu(conv2d(std::move(x), weight, bias, Padding::Same));
        y = maxpool2d(std::move(y), 2, 2, 1);
        return batchnorm2d(std::move(y), gamma, beta, stats, training);
    }

    std::size_t conv_param_count() const { return (kh * kw * in_channels + 1) * units; }
    std::size_t bn_param_count() const { return 2 * units; }
    std::size_t param_count() const { return conv_param_count() + bn_param_count(); }

    std::string conv_formula() const {
        return "(" + std::to_string(kh) + "x" + std::to_string(kw) + "x" +
               std::to_string(in_channels) + "+1)x" + std::to_string(units);
    }
    std::string bn_formula() const { return "2x" + std::to_string(units); }
};

// ---- LSTM ----

// Gate order in the fused weight matrices: input, forget, candidate, output.
// Sigmoid gates, tanh candidate; the recurrent output activation is ReLU
// (h = o * relu(c)). Hidden and cell states start at zero; the forget-gate
// bias starts at 1.
template <typename T>
struct Lstm {
    std::size_t input_size = 0;
    std::size_t units = 0;
    bool return_sequences = true;
    Tensor<T> wx;    // (S, 4U)
    Tensor<T> wh;    // (U, 4U)
    Tensor<T> bias;  // (4U)

    Lstm() = default;
    Lstm(std::size_t input_size_, std::size_t units_, bool return_sequences_, ParamRng<T>& rng)
        : input_size(input_size_), units(units_), return_sequences(return_sequences_) {
        std::vector<T> wxd(input_size * 4 * units), whd(units * 4 * units);
        rng.glorot_fill(wxd, input_size, 4 * units);
        rng.glorot_fill(whd, units, 4 * units);
        wx = Tensor<T>::from_data({input_size, 4 * units}, std::move(wxd), true);
        wh = Tensor<T>::from_data({units, 4 * units}, std::move(whd), true);
        std::vector<T> b(4 * units, T(0));
        for (std::size_t j = units; j < 2 * units; ++j) b[j] = T(1);  // forget gate
        bias = Tensor<T>::from_data({4 * units}, std::move(b), true);
    }

    std::size_t param_count() const {
        return 4 * ((input_size + 1) * units + units * units);
    }
    std::string formula() const {
        return "4x[(" + std::to_string(input_size) + "+1)x" + std::to_string(units) + "+" +
               std::to_string(units) + "^2]";
    }

    // Fused forward over the whole sequence with hand-written BPTT. Input
    // (N, T, S); output (N, T, U) with return_sequences, else (N, U).
    Tensor<T> forward(Tensor<T> x) {
        if (x.shape().size() != 3)
            throw ShapeError("lstm: expects (N,T,S), got " + shape_str(x.shape()));
        const std::size_t n = x.shape()[0], steps = x.shape()[1], s = x.shape()[2];
        if (s != input_size)
            throw ShapeError("lstm: input feature size " + std::to_string(s) +
                             " does not match layer input size " + std::to_string(input_size));
        if (steps < 1) throw ArgumentError("lstm: empty sequence");
        const std::size_t u = units;

        // Time-major copies keep each step contiguous for the gemms.
        std::vector<T> xt(steps * n * s);
        for (std::size_t img = 0; img < n; ++img)
            for (std::size_t t = 0; t < steps; ++t)
                std::copy_n(x.data().data() + (img * steps + t) * s, s,
                            xt.data() + (t * n + img) * s);

        std::vector<T> gi(steps * n * u), gf(steps * n * u), gc(steps * n * u),
            go(steps * n * u), cell(steps * n * u), hidden(steps * n * u);
        std::vector<T> pre(n * 4 * u);

        for (std::size_t t = 0; t < steps; ++t) {
            MatMap<T> pre_m(pre.data(), n, 4 * u);
            pre_m.noalias() = ConstMatMap<T>(xt.data() + t * n * s, n, s) *
                              ConstMatMap<T>(wx.data().data(), s, 4 * u);
            if (t > 0)
                pre_m.noalias() += ConstMatMap<T>(hidden.data() + (t - 1) * n * u, n, u) *
                                   ConstMatMap<T>(wh.data().data(), u, 4 * u);
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < 4 * u; ++j) pre[r * 4 * u + j] += bias.data()[j];

            const std::size_t off = t * n * u;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < u; ++j) {
                    const T* p = pre.data() + r * 4 * u;
                    const std::size_t idx = off + r * u + j;
                    gi[idx] = T(1) / (T(1) + std::exp(-p[j]));
                    gf[idx] = T(1) / (T(1) + std::exp(-p[u + j]));
                    gc[idx] = std::tanh(p[2 * u + j]);
                    go[idx] = T(1) / (T(1) + std::exp(-p[3 * u + j]));
                    const T c_prev = t > 0 ? cell[idx - n * u] : T(0);
                    cell[idx] = gf[idx] * c_prev + gi[idx] * gc[idx];
                    const T rc = cell[idx] > T(0) ? cell[idx] : T(0);
                    hidden[idx] = go[idx] * rc;
                }
        }

        Shape out_shape = return_sequences ? Shape{n, steps, u} : Shape{n, u};
        std::vector<T> out(shape_numel(out_shape));
        if (return_sequences) {
            for (std::size_t img = 0; img < n; ++img)
                for (std::size_t t = 0; t < steps; ++t)
                    std::copy_n(hidden.data() + (t * n + img) * u, u,
                                out.data() + (img * steps + t) * u);
        } else {
            std::copy_n(hidden.data() + (steps - 1) * n * u, n * u, out.data());
        }

        auto backprop = [x, wx = wx, wh = wh, bias = bias, xt = std::move(xt),
                         gi = std::move(gi), gf = std::move(gf), gc = std::move(gc),
                         go = std::move(go), cell = std::move(cell), hidden = std::move(hidden),
                         n, steps, s, u,
                         return_sequences = return_sequences](typename Tensor<T>::Impl& self) mutable {
            std::vector<T> dh(n * u, T(0)), dc(n * u, T(0)), dpre(n * 4 * u);
            std::vector<T> dwx(s * 4 * u, T(0)), dwh(u * 4 * u, T(0)), db(4 * u, T(0));
            std::vector<T> dxt;
            if (x.node()->tracked) dxt.assign(steps * n * s, T(0));

            for (std::size_t ti = steps; ti-- > 0;) {
                const std::size_t off = ti * n * u;
                // Incoming gradient for this step's hidden state.
                if (return_sequences) {
                    for (std::size_t img = 0; img < n; ++img)
                        for (std::size_t j = 0; j < u; ++j)
                            dh[img * u + j] += self.grad[(img * steps + ti) * u + j];
                } else if (ti == steps - 1) {
                    for (std::size_t i = 0; i < n * u; ++i) dh[i] += self.grad[i];
                }

                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t j = 0; j < u; ++j) {
                        const std::size_t idx = off + r * u + j;
                        const T c = cell[idx];
                        const T rc = c > T(0) ? c : T(0);
                        const T dh_rj = dh[r * u + j];
                        const T do_ = dh_rj * rc;
                        T dcell = dc[r * u + j] + (c > T(0) ? dh_rj * go[idx] : T(0));
                        const T c_prev = ti > 0 ? cell[idx - n * u] : T(0);
                        const T di = dcell * gc[idx];
                        const T df = dcell * c_prev;
                        const T dg = dcell * gi[idx];
                        dc[r * u + j] = dcell * gf[idx];
                        T* p = dpre.data() + r * 4 * u;
                        p[j] = di * gi[idx] * (T(1) - gi[idx]);
                        p[u + j] = df * gf[idx] * (T(1) - gf[idx]);
                        p[2 * u + j] = dg * (T(1) - gc[idx] * gc[idx]);
                        p[3 * u + j] = do_ * go[idx] * (T(1) - go[idx]);
                    }

                MatMap<T>(dwx.data(), s, 4 * u).noalias() +=
                    ConstMatMap<T>(xt.data() + ti * n * s, n, s).transpose() *
                    ConstMatMap<T>(dpre.data(), n, 4 * u);
                if (ti > 0)
                    MatMap<T>(dwh.data(), u, 4 * u).noalias() +=
                        ConstMatMap<T>(hidden.data() + (ti - 1) * n * u, n, u).transpose() *
                        ConstMatMap<T>(dpre.data(), n, 4 * u);
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t j = 0; j < 4 * u; ++j) db[j] += dpre[r * 4 * u + j];

                if (!dxt.empty())
                    MatMap<T>(dxt.data() + ti * n * s, n, s).noalias() =
                        ConstMatMap<T>(dpre.data(), n, 4 * u) *
                        ConstMatMap<T>(wx.data().data(), s, 4 * u).transpose();

                // dh for the previous step comes only through the recurrence.
                if (ti > 0) {
                    MatMap<T>(dh.data(), n, u).noalias() =
                        ConstMatMap<T>(dpre.data(), n, 4 * u) *
                        ConstMatMap<T>(wh.data().data(), u, 4 * u).transpose();
                }
            }

            if (wx.node()->tracked) {
                auto& g = wx.node()->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += dwx[i];
            }
            if (wh.node()->tracked) {
                auto& g = wh.node()->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += dwh[i];
            }
            if (bias.node()->tracked) {
                auto& g = bias.node()->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += db[i];
            }
            if (x.node()->tracked) {
                auto& g = x.node()->ensure_grad();
                for (std::size_t img = 0; img < n; ++img)
                    for (std::size_t t = 0; t < steps; ++t)
                        for (std::size_t f = 0; f < s; ++f)
                            g[(img * steps + t) * s + f] += dxt[(t * n + img) * s + f];
            }
        };
        return Tensor<T>::op_result(std::move(out_shape), std::move(out), {x, wx, wh, bias},
                                    std::move(backprop));
    }
};

}  // namespace ntc
