#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ntc/adam.hpp"
#include "ntc/metrics.hpp"
#include "ntc/model.hpp"
#include "ntc/representation.hpp"

namespace ntc {

struct TrainConfig {
    std::size_t batch_size = 256;
    std::size_t max_epochs = 200;
    std::size_t patience = 3;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
};

struct LabeledData {
    FlowVideo video;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

LabeledData to_labeled(const std::vector<FlowRecord>& records, std::size_t k, std::size_t w);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double train_accuracy = 0;
    double val_loss = 0;
    double val_accuracy = 0;
    double seconds = 0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;  // 1-based epoch whose weights the model carries
    double best_val_loss = 0;
    double seconds_per_epoch = 0;
};

// Validation-loss early stopping: stop after `patience` consecutive epochs
// without improvement, remembering the best epoch for weight restoration.
class EarlyStopping {
  public:
    explicit EarlyStopping(std::size_t patience) : patience_(patience) {
        if (patience < 1) throw ArgumentError("early stopping patience must be >= 1");
    }

    struct Decision {
        bool improved = false;
        bool stop = false;
    };

    Decision observe(double val_loss) {
        ++epoch_;
        if (val_loss < best_loss_) {
            best_loss_ = val_loss;
            best_epoch_ = epoch_;
            bad_streak_ = 0;
            return {true, false};
        }
        ++bad_streak_;
        return {false, bad_streak_ >= patience_};
    }

    std::size_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

  private:
    std::size_t patience_;
    std::size_t epoch_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t bad_streak_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

// Mini-batch Adam on cross-entropy with early stopping; the returned model
// carries the best-validation-epoch weights.
TrainResult train(Model<float>& model, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& cfg);

EvalReport evaluate(Model<float>& model, const LabeledData& test_set, Averaging averaging);

// ---- TD-vs-vanilla comparison harness ----

struct MetricSummary {
    double mean = 0;
    double min = 0;
    double max = 0;
};

struct VariantSummary {
    std::string variant;
    MetricSummary accuracy, precision, recall, f1;
    double mean_seconds_per_epoch = 0;
    double mean_epochs = 0;
    std::vector<EvalReport> runs;
};

struct CompareReport {
    std::size_t repeats = 0;
    std::vector<VariantSummary> variants;  // TD first, then baseline
};

// Trains both variants `repeats` times on the same splits with derived seeds.
// When out_dir is non-empty, writes compare.json (machine-readable table),
// compare.txt (human table) and plot_data.csv (per-metric mean/error bars).
CompareReport compare_td(const LabeledData& train_set, const LabeledData& val_set,
                         const LabeledData& test_set, const ModelSpec& base_spec,
                         const TrainConfig& cfg, std::size_t repeats,
                         const std::string& out_dir = "");

nlohmann::json compare_to_json(const CompareReport& report);

}  // namespace ntc
