#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace ntc {

enum class Averaging { Macro, Weighted };

inline std::string averaging_name(Averaging a) {
    return a == Averaging::Macro ? "macro" : "weighted";
}

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t support = 0;
};

struct EvalReport {
    std::vector<std::vector<std::size_t>> confusion;  // rows = true, cols = predicted
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    Averaging averaging = Averaging::Macro;
    std::vector<ClassMetrics> per_class;
    std::size_t epochs_run = 0;
    double seconds_per_epoch = 0;

    std::size_t total() const;
};

// One-vs-rest per-class metrics plus the requested aggregate. Classes with a
// zero denominator score 0 for the affected metric; per-class F1 is 0 when
// precision and recall are both 0.
EvalReport metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion,
                                  Averaging averaging);

nlohmann::json report_to_json(const EvalReport& report,
                              const std::vector<std::string>& class_names = {});

}  // namespace ntc
