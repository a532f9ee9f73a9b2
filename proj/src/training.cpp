#include "ntc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

namespace ntc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Tensor32 batch_tensor(const LabeledData& data, const std::vector<std::size_t>& order,
                      std::size_t begin, std::size_t end, std::vector<std::size_t>& labels) {
    const std::size_t frame = data.video.k * data.video.w;
    std::vector<float> buf((end - begin) * frame);
    labels.clear();
    for (std::size_t i = begin; i < end; ++i) {
        const std::size_t idx = order[i];
        std::copy_n(data.video.frames.data() + idx * frame, frame,
                    buf.data() + (i - begin) * frame);
        labels.push_back(data.labels[idx]);
    }
    return Tensor32::from_data({end - begin, 1, data.video.k, data.video.w}, std::move(buf));
}

std::size_t argmax_row(const float* row, std::size_t c) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (row[j] > row[best]) best = j;  // tie keeps the lowest class index
    return best;
}

struct LossAcc {
    double loss = 0;
    double accuracy = 0;
};

// Inference-mode loss and accuracy over a whole set, batched.
LossAcc eval_loss(Model<float>& model, const LabeledData& data, std::size_t batch_size) {
    NoGradGuard no_grad;
    const std::size_t c = model.spec().class_count;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double loss_sum = 0;
    std::size_t correct = 0;
    std::vector<std::size_t> labels;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, data.size());
        Tensor32 logits = model.forward(batch_tensor(data, order, begin, end, labels), false);
        loss_sum += double(softmax_cross_entropy(logits, labels).item()) * double(end - begin);
        for (std::size_t r = 0; r < labels.size(); ++r)
            if (argmax_row(logits.data().data() + r * c, c) == labels[r]) ++correct;
    }
    return {loss_sum / double(data.size()), double(correct) / double(data.size())};
}

struct Snapshot {
    std::vector<std::vector<float>> params;
    std::vector<std::vector<float>> buffers;
};

Snapshot take_snapshot(Model<float>& model) {
    Snapshot s;
    for (auto& p : model.params()) s.params.push_back(p.data());
    for (auto& [name, buf] : model.named_buffers()) s.buffers.push_back(*buf);
    return s;
}

void restore_snapshot(Model<float>& model, const Snapshot& s) {
    auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].data() = s.params[i];
    auto buffers = model.named_buffers();
    for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = s.buffers[i];
}

}  // namespace

LabeledData to_labeled(const std::vector<FlowRecord>& records, std::size_t k, std::size_t w) {
    LabeledData data;
    data.video = pack_video(records, k, w);
    data.labels.reserve(records.size());
    for (const auto& rec : records) data.labels.push_back(std::size_t(rec.label_id));
    return data;
}

TrainResult train(Model<float>& model, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& cfg) {
    if (train_set.size() == 0 || val_set.size() == 0)
        throw ArgumentError("train: empty training or validation split");
    if (cfg.batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");

    auto params = model.params();
    AdamState<float> opt;
    EarlyStopping stopper(cfg.patience);
    std::mt19937_64 shuffle_rng(cfg.seed);

    const std::size_t c = model.spec().class_count;
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    Snapshot best = take_snapshot(model);
    double total_seconds = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto epoch_start = Clock::now();
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng() % (i + 1)]);

        double loss_sum = 0;
        std::size_t correct = 0, batch_no = 0;
        std::vector<std::size_t> labels;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            Tensor32 logits =
                model.forward(batch_tensor(train_set, order, begin, end, labels), true);
            Tensor32 loss = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(loss.item()))
                throw DivergenceError("training loss is not finite at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batch_no));
            loss_sum += double(loss.item()) * double(end - begin);
            for (std::size_t r = 0; r < labels.size(); ++r)
                if (argmax_row(logits.data().data() + r * c, c) == labels[r]) ++correct;
            loss.backward();
            adam_step(params, opt, float(cfg.lr), float(cfg.beta1), float(cfg.beta2),
                      float(cfg.eps));
            model.zero_grads();
        }

        const LossAcc val = eval_loss(model, val_set, cfg.batch_size);
        const double secs = seconds_since(epoch_start);
        total_seconds += secs;
        result.history.push_back({epoch, loss_sum / double(train_set.size()),
                                  double(correct) / double(train_set.size()), val.loss,
                                  val.accuracy, secs});

        const auto decision = stopper.observe(val.loss);
        if (decision.improved) best = take_snapshot(model);
        if (decision.stop) break;
    }

    restore_snapshot(model, best);
    result.best_epoch = stopper.best_epoch();
    result.best_val_loss = stopper.best_loss();
    result.seconds_per_epoch =
        result.history.empty() ? 0 : total_seconds / double(result.history.size());
    return result;
}

EvalReport evaluate(Model<float>& model, const LabeledData& test_set, Averaging averaging) {
    if (test_set.size() == 0) throw ArgumentError("evaluate: empty test set");
    const std::size_t c = model.spec().class_count;
    for (std::size_t label : test_set.labels)
        if (label >= c)
            throw DataError("evaluate: label id " + std::to_string(label) +
                            " out of range for " + std::to_string(c) + " classes");

    NoGradGuard no_grad;
    std::vector<std::vector<std::size_t>> confusion(c, std::vector<std::size_t>(c, 0));
    std::vector<std::size_t> order(test_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    constexpr std::size_t kBatch = 256;
    std::vector<std::size_t> labels;
    for (std::size_t begin = 0; begin < test_set.size(); begin += kBatch) {
        const std::size_t end = std::min(begin + kBatch, test_set.size());
        Tensor32 logits = model.forward(batch_tensor(test_set, order, begin, end, labels), false);
        for (std::size_t r = 0; r < labels.size(); ++r)
            ++confusion[labels[r]][argmax_row(logits.data().data() + r * c, c)];
    }
    return metrics_from_confusion(confusion, averaging);
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.min = values[0];
    s.max = values[0];
    for (double v : values) {
        s.mean += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean /= double(values.size());
    return s;
}

VariantSummary run_variant(Variant variant, const LabeledData& train_set,
                           const LabeledData& val_set, const LabeledData& test_set,
                           const ModelSpec& base_spec, const TrainConfig& cfg,
                           std::size_t repeats) {
    VariantSummary summary;
    summary.variant = variant_name(variant);
    std::vector<double> acc, prec, rec, f1;
    double secs = 0, epochs = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
        ModelSpec spec = base_spec;
        spec.variant = variant;
        TrainConfig run_cfg = cfg;
        run_cfg.seed = cfg.seed + r;  // distinct init and shuffle per repeat
        Model<float> model(spec, run_cfg.seed);
        TrainResult tr = train(model, train_set, val_set, run_cfg);
        EvalReport report = evaluate(model, test_set, Averaging::Macro);
        report.epochs_run = tr.history.size();
        report.seconds_per_epoch = tr.seconds_per_epoch;
        acc.push_back(report.accuracy);
        prec.push_back(report.precision);
        rec.push_back(report.recall);
        f1.push_back(report.f1);
        secs += tr.seconds_per_epoch;
        epochs += double(tr.history.size());
        summary.runs.push_back(std::move(report));
    }
    summary.accuracy = summarize(acc);
    summary.precision = summarize(prec);
    summary.recall = summarize(rec);
    summary.f1 = summarize(f1);
    summary.mean_seconds_per_epoch = secs / double(repeats);
    summary.mean_epochs = epochs / double(repeats);
    return summary;
}

}  // namespace

CompareReport compare_td(const LabeledData& train_set, const LabeledData& val_set,
                         const LabeledData& test_set, const ModelSpec& base_spec,
                         const TrainConfig& cfg, std::size_t repeats,
                         const std::string& out_dir) {
    if (repeats < 1) throw ArgumentError("compare_td: repeats must be >= 1");

    CompareReport report;
    report.repeats = repeats;
    report.variants.push_back(run_variant(Variant::ConvLstmTdMlp, train_set, val_set, test_set,
                                          base_spec, cfg, repeats));
    report.variants.push_back(run_variant(Variant::ConvLstmMlp, train_set, val_set, test_set,
                                          base_spec, cfg, repeats));

    if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);

        std::ofstream jf(fs::path(out_dir) / "compare.json");
        jf << compare_to_json(report).dump(2) << '\n';

        std::ofstream csv(fs::path(out_dir) / "plot_data.csv");
        csv << "metric,variant,mean,err_low,err_high\n";
        for (const auto& v : report.variants) {
            auto line = [&](const char* metric, const MetricSummary& m) {
                csv << metric << ',' << v.variant << ',' << m.mean << ',' << (m.mean - m.min)
                    << ',' << (m.max - m.mean) << '\n';
            };
            line("accuracy", v.accuracy);
            line("precision", v.precision);
            line("recall", v.recall);
            line("f1", v.f1);
        }

        std::ofstream txt(fs::path(out_dir) / "compare.txt");
        txt << "variant                metric     mean      min      max\n";
        for (const auto& v : report.variants) {
            auto line = [&](const char* metric, const MetricSummary& m) {
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%-22s %-9s %.4f   %.4f   %.4f\n",
                              v.variant.c_str(), metric, m.mean, m.min, m.max);
                txt << buf;
            };
            line("accuracy", v.accuracy);
            line("precision", v.precision);
            line("recall", v.recall);
            line("f1", v.f1);
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%-22s %.1f s/epoch over %.1f epochs (mean)\n\n",
                          v.variant.c_str(), v.mean_seconds_per_epoch, v.mean_epochs);
            txt << buf;
        }
    }
    return report;
}

nlohmann::json compare_to_json(const CompareReport& report) {
    nlohmann::json j;
    j["repeats"] = report.repeats;
    nlohmann::json variants = nlohmann::json::array();
    for (const auto& v : report.variants) {
        auto metric = [](const MetricSummary& m) {
            return nlohmann::json{{"mean", m.mean}, {"min", m.min}, {"max", m.max}};
        };
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& r : v.runs)
            runs.push_back({{"accuracy", r.accuracy},
                            {"precision", r.precision},
                            {"recall", r.recall},
                            {"f1", r.f1},
                            {"epochs_run", r.epochs_run},
                            {"seconds_per_epoch", r.seconds_per_epoch}});
        variants.push_back({{"variant", v.variant},
                            {"accuracy", metric(v.accuracy)},
                            {"precision", metric(v.precision)},
                            {"recall", metric(v.recall)},
                            {"f1", metric(v.f1)},
                            {"mean_seconds_per_epoch", v.mean_seconds_per_epoch},
                            {"mean_epochs", v.mean_epochs},
                            {"runs", std::move(runs)}});
    }
    j["variants"] = std::move(variants);
    return j;
}

}  // namespace ntc
