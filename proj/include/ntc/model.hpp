#pragma once

#include <string>
#include <vector>

#include "ntc/layers.hpp"

namespace ntc {

enum class Variant { ConvLstmTdMlp, ConvLstmMlp };

inline std::string variant_name(Variant v) {
    return v == Variant::ConvLstmTdMlp ? "conv-lstm-td-mlp" : "conv-lstm-mlp";
}

inline Variant parse_variant(const std::string& name) {
    if (name == "conv-lstm-td-mlp") return Variant::ConvLstmTdMlp;
    if (name == "conv-lstm-mlp") return Variant::ConvLstmMlp;
    throw ArgumentError("unknown model variant: " + name);
}

struct ModelSpec {
    Variant variant = Variant::ConvLstmTdMlp;
    std::size_t input_channels = 1;
    std::size_t k = 8;
    std::size_t w = 6;
    std::size_t class_count = 141;
};

struct AuditRow {
    std::string layer;
    std::string formula;
    std::size_t count = 0;
};

struct ParamAudit {
    std::vector<AuditRow> rows;
    std::size_t total = 0;
};

// Both architectures share the front end: four conv blocks (64 filters, 2x2,
// same padding, 2x2 stride-1 pool, batchnorm), flatten, and the flattened
// feature map traversed as a length-T sequence of scalars by an LSTM with 100
// units. The TD variant keeps the full hidden sequence and applies three
// shared-weight dense-64 steps before the softmax head over T*64 features;
// the baseline takes only the final hidden state through dense-64 stacks.
template <typename T>
class Model {
  public:
    static constexpr std::size_t kConvLayers = 4;
    static constexpr std::size_t kConvUnits = 64;
    static constexpr std::size_t kLstmUnits = 100;
    static constexpr std::size_t kMlpUnits = 64;
    static constexpr std::size_t kMlpDepth = 3;

    Model() = default;

    Model(ModelSpec spec, std::uint64_t seed) : spec_(spec) {
        if (spec_.class_count < 2)
            throw ArgumentError("model: need at least 2 classes, got " +
                                std::to_string(spec_.class_count));
        if (spec_.k <= kConvLayers || spec_.w <= kConvLayers)
            throw ShapeError("model: input " + std::to_string(spec_.k) + "x" +
                             std::to_string(spec_.w) + " too small for " +
                             std::to_string(kConvLayers) + " pooling stages");
        ParamRng<T> rng(seed);
        std::size_t cin = spec_.input_channels;
        for (std::size_t i = 0; i < kConvLayers; ++i) {
            blocks_.emplace_back(cin, kConvUnits, 2, 2, rng);
            cin = kConvUnits;
        }
        // Each block's stride-1 valid pool trims one row and one column.
        out_h_ = spec_.k - kConvLayers;
        out_w_ = spec_.w - kConvLayers;
        seq_len_ = kConvUnits * out_h_ * out_w_;

        const bool td = spec_.variant == Variant::ConvLstmTdMlp;
        lstm_ = Lstm<T>(1, kLstmUnits, td, rng);
        std::size_t s = kLstmUnits;
        for (std::size_t i = 0; i < kMlpDepth; ++i) {
            mlp_.emplace_back(s, kMlpUnits, rng);
            s = kMlpUnits;
        }
        head_ = Dense<T>(td ? seq_len_ * kMlpUnits : kMlpUnits, spec_.class_count, rng);
    }

    const ModelSpec& spec() const { return spec_; }
    std::size_t sequence_length() const { return seq_len_; }

    // Logits (N, C). When `trace` is given, the shapes of every intermediate
    // activation are appended in forward order.
    Tensor<T> forward(Tensor<T> x, bool training, std::vector<Shape>* trace = nullptr) {
        if (x.shape().size() != 4 || x.shape()[1] != spec_.input_channels ||
            x.shape()[2] != spec_.k || x.shape()[3] != spec_.w)
            throw ShapeError("model: expected input (N," + std::to_string(spec_.input_channels) +
                             "," + std::to_string(spec_.k) + "," + std::to_string(spec_.w) +
                             "), got " + shape_str(x.shape()));
        const std::size_t n = x.shape()[0];
        auto record = [trace](const Tensor<T>& t) {
            if (trace) trace->push_back(t.shape());
        };

        Tensor<T> y = std::move(x);
        for (auto& block : blocks_) {
            y = block.forward(std::move(y), training);
            record(y);
        }
        y = reshape(std::move(y), {n, seq_len_});
        record(y);
        y = reshape(std::move(y), {n, seq_len_, 1});
        record(y);
        y = lstm_.forward(std::move(y));
        record(y);

        if (spec_.variant == Variant::ConvLstmTdMlp) {
            for (auto& dense : mlp_) {
                y = relu(time_distributed(dense, std::move(y)));
                record(y);
            }
            y = reshape(std::move(y), {n, seq_len_ * kMlpUnits});
            record(y);
        } else {
            for (auto& dense : mlp_) {
                y = relu(dense.forward(std::move(y)));
                record(y);
            }
        }
        y = head_.forward(std::move(y));
        record(y);
        return y;
    }

    std::vector<NamedParam<T>> named_params() {
        std::vector<NamedParam<T>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "conv" + std::to_string(i);
            out.push_back({p + ".weight", blocks_[i].weight});
            out.push_back({p + ".bias", blocks_[i].bias});
            out.push_back({p + ".gamma", blocks_[i].gamma});
            out.push_back({p + ".beta", blocks_[i].beta});
        }
        out.push_back({"lstm.wx", lstm_.wx});
        out.push_back({"lstm.wh", lstm_.wh});
        out.push_back({"lstm.bias", lstm_.bias});
        for (std::size_t i = 0; i < mlp_.size(); ++i) {
            const std::string p = "mlp" + std::to_string(i);
            out.push_back({p + ".weight", mlp_[i].weight});
            out.push_back({p + ".bias", mlp_[i].bias});
        }
        out.push_back({"head.weight", head_.weight});
        out.push_back({"head.bias", head_.bias});
        return out;
    }

    std::vector<Tensor<T>> params() {
        std::vector<Tensor<T>> out;
        for (auto& np : named_params()) out.push_back(np.tensor);
        return out;
    }

    // Non-trainable batchnorm running statistics, by name.
    std::vector<std::pair<std::string, std::vector<T>*>> named_buffers() {
        std::vector<std::pair<std::string, std::vector<T>*>> out;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string p = "conv" + std::to_string(i);
            out.push_back({p + ".running_mean", &blocks_[i].stats.running_mean});
            out.push_back({p + ".running_var", &blocks_[i].stats.running_var});
        }
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.zero_grad();
    }

    // Per-layer ledger. Each row's count comes from the closed-form formula
    // and is cross-checked against enumeration of the layer's trainable
    // elements; disagreement is a hard audit error.
    ParamAudit audit() {
        ParamAudit out;
        auto push = [&out](std::string layer, std::string formula, std::size_t formula_count,
                           std::size_t enumerated) {
            if (formula_count != enumerated)
                throw AuditError("audit: layer " + layer + " formula gives " +
                                 std::to_string(formula_count) + " but enumeration gives " +
                                 std::to_string(enumerated));
            out.rows.push_back({std::move(layer), std::move(formula), formula_count});
            out.total += formula_count;
        };

        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const auto& b = blocks_[i];
            push("CNN_2D_" + std::to_string(i), b.conv_formula(), b.conv_param_count(),
                 b.weight.size() + b.bias.size());
            push("MP_2D_" + std::to_string(i), "-", 0, 0);
            push("BN_" + std::to_string(i), b.bn_formula(), b.bn_param_count(),
                 b.gamma.size() + b.beta.size());
        }
        push("Flatten", "-", 0, 0);
        push("LSTM", lstm_.formula(), lstm_.param_count(),
             lstm_.wx.size() + lstm_.wh.size() + lstm_.bias.size());

        const bool td = spec_.variant == Variant::ConvLstmTdMlp;
        for (std::size_t i = 0; i < mlp_.size(); ++i) {
            const std::string name = "MLP_" + std::to_string(i);
            push(td ? "TD(" + name + ")" : name, mlp_[i].formula(), mlp_[i].param_count(),
                 mlp_[i].weight.size() + mlp_[i].bias.size());
        }
        if (td) push("Flatten", "-", 0, 0);
        const std::size_t c = spec_.class_count;
        const std::string head_formula =
            td ? std::to_string(seq_len_) + "x" + std::to_string(kMlpUnits) + "x" +
                     std::to_string(c) + "+" + std::to_string(c)
               : head_.formula();
        const std::size_t head_count =
            td ? seq_len_ * kMlpUnits * c + c : head_.param_count();
        push("MLP_" + std::to_string(mlp_.size()), head_formula, head_count,
             head_.weight.size() + head_.bias.size());
        return out;
    }

    std::vector<ConvBlock<T>>& conv_blocks() { return blocks_; }

  private:
    ModelSpec spec_;
    std::vector<ConvBlock<T>> blocks_;
    Lstm<T> lstm_;
    std::vector<Dense<T>> mlp_;
    Dense<T> head_;
    std::size_t out_h_ = 0;
    std::size_t out_w_ = 0;
    std::size_t seq_len_ = 0;
};

}  // namespace ntc
