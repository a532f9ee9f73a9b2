#include "ntc/metrics.hpp"

#include "ntc/errors.hpp"

namespace ntc {

std::size_t EvalReport::total() const {
    std::size_t n = 0;
    for (const auto& row : confusion)
        for (std::size_t v : row) n += v;
    return n;
}

EvalReport metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion,
                                  Averaging averaging) {
    const std::size_t c = confusion.size();
    if (c == 0) throw ArgumentError("metrics: empty confusion matrix");
    for (const auto& row : confusion)
        if (row.size() != c) throw ShapeError("metrics: confusion matrix is not square");

    EvalReport report;
    report.confusion = confusion;
    report.averaging = averaging;
    report.per_class.resize(c);

    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < c; ++i) {
        correct += confusion[i][i];
        for (std::size_t j = 0; j < c; ++j) total += confusion[i][j];
    }
    if (total == 0) throw ArgumentError("metrics: confusion matrix has no samples");
    report.accuracy = double(correct) / double(total);

    for (std::size_t i = 0; i < c; ++i) {
        const std::size_t tp = confusion[i][i];
        std::size_t fp = 0, fn = 0;
        for (std::size_t r = 0; r < c; ++r)
            if (r != i) {
                fp += confusion[r][i];
                fn += confusion[i][r];
            }
        ClassMetrics& m = report.per_class[i];
        m.support = tp + fn;
        m.precision = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
        m.recall = (tp + fn) ? double(tp) / double(tp + fn) : 0.0;
        m.f1 = (m.precision + m.recall > 0)
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
    }

    double p = 0, r = 0, f = 0;
    if (averaging == Averaging::Macro) {
        for (const auto& m : report.per_class) {
            p += m.precision;
            r += m.recall;
            f += m.f1;
        }
        p /= double(c);
        r /= double(c);
        f /= double(c);
    } else {
        for (const auto& m : report.per_class) {
            const double w = double(m.support) / double(total);
            p += w * m.precision;
            r += w * m.recall;
            f += w * m.f1;
        }
    }
    report.precision = p;
    report.recall = r;
    report.f1 = f;
    return report;
}

nlohmann::json report_to_json(const EvalReport& report,
                              const std::vector<std::string>& class_names) {
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    j["precision"] = report.precision;
    j["recall"] = report.recall;
    j["f1"] = report.f1;
    j["averaging"] = averaging_name(report.averaging);
    j["samples"] = report.total();
    j["epochs_run"] = report.epochs_run;
    j["seconds_per_epoch"] = report.seconds_per_epoch;
    j["confusion"] = report.confusion;
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t i = 0; i < report.per_class.size(); ++i) {
        const auto& m = report.per_class[i];
        nlohmann::json row = {{"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"support", m.support}};
        if (i < class_names.size()) row["class"] = class_names[i];
        per.push_back(std::move(row));
    }
    j["per_class"] = std::move(per);
    return j;
}

}  // namespace ntc
