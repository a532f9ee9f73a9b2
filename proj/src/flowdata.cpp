#include "ntc/flowdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <unordered_map>

namespace ntc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

float parse_float(const std::string& cell, std::size_t row, const std::string& column) {
    float value = 0.0f;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("cannot parse \"" + cell + "\" as a number at row " +
                         std::to_string(row) + " / column \"" + column + "\"");
    if (!std::isfinite(value))
        throw ParseError("non-finite value at row " + std::to_string(row) + " / column \"" +
                         column + "\"");
    return value;
}

std::string format_float(float v) {
    char buf[48];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& feature_columns) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open data file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file (no header): " + path);
    const std::vector<std::string> header = split_line(line);

    std::unordered_map<std::string, std::size_t> col_index;
    for (std::size_t i = 0; i < header.size(); ++i) col_index[header[i]] = i;

    auto find_col = [&](const std::string& name) {
        auto it = col_index.find(name);
        if (it == col_index.end())
            throw SchemaError("column \"" + name + "\" not found in " + path);
        return it->second;
    };

    const std::size_t label_idx = find_col(label_column);
    std::vector<std::size_t> feature_idx;
    std::vector<std::string> feature_names;
    if (feature_columns.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (i != label_idx) {
                feature_idx.push_back(i);
                feature_names.push_back(header[i]);
            }
    } else {
        for (const auto& name : feature_columns) {
            feature_idx.push_back(find_col(name));
            feature_names.push_back(name);
        }
    }

    Dataset ds;
    std::unordered_map<std::string, int> label_ids;
    std::size_t row = 1;  // header is row 1
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(header.size()));
        FlowRecord rec;
        rec.features.reserve(feature_idx.size());
        for (std::size_t f = 0; f < feature_idx.size(); ++f)
            rec.features.push_back(parse_float(cells[feature_idx[f]], row, feature_names[f]));
        const std::string& label = cells[label_idx];
        auto it = label_ids.find(label);
        if (it == label_ids.end()) {
            it = label_ids.emplace(label, int(ds.meta.class_names.size())).first;
            ds.meta.class_names.push_back(label);
        }
        rec.label_id = it->second;
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw ParseError("no data rows in " + path);

    ds.meta = compute_meta(ds.records, std::move(ds.meta.class_names), std::move(feature_names));
    return ds;
}

void write_csv(const std::string& path, const std::vector<FlowRecord>& records,
               const DatasetMeta& meta) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write data file: " + path);
    out << "label";
    for (const auto& name : meta.feature_names) out << ',' << name;
    out << '\n';
    for (const auto& rec : records) {
        out << meta.class_names.at(std::size_t(rec.label_id));
        for (float v : rec.features) out << ',' << format_float(v);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

DatasetMeta compute_meta(const std::vector<FlowRecord>& records,
                         std::vector<std::string> class_names,
                         std::vector<std::string> feature_names) {
    DatasetMeta meta;
    meta.class_names = std::move(class_names);
    meta.feature_names = std::move(feature_names);
    const std::size_t f = meta.feature_names.size();
    meta.per_feature_min.assign(f, std::numeric_limits<float>::max());
    meta.per_feature_max.assign(f, std::numeric_limits<float>::lowest());
    meta.counts_per_class.assign(meta.class_names.size(), 0);
    for (const auto& rec : records) {
        if (rec.features.size() != f)
            throw ShapeError("record has " + std::to_string(rec.features.size()) +
                             " features, expected " + std::to_string(f));
        if (rec.label_id < 0 || std::size_t(rec.label_id) >= meta.class_names.size())
            throw DataError("label id " + std::to_string(rec.label_id) + " out of range");
        ++meta.counts_per_class[std::size_t(rec.label_id)];
        for (std::size_t i = 0; i < f; ++i) {
            meta.per_feature_min[i] = std::min(meta.per_feature_min[i], rec.features[i]);
            meta.per_feature_max[i] = std::max(meta.per_feature_max[i], rec.features[i]);
        }
    }
    if (records.empty()) {
        meta.per_feature_min.assign(f, 0.0f);
        meta.per_feature_max.assign(f, 0.0f);
    }
    return meta;
}

std::vector<FlowRecord> normalize(const std::vector<FlowRecord>& records,
                                  const DatasetMeta& meta) {
    std::vector<FlowRecord> out;
    out.reserve(records.size());
    const std::size_t f = meta.feature_count();
    for (const auto& rec : records) {
        if (rec.features.size() != f)
            throw ShapeError("normalize: record has " + std::to_string(rec.features.size()) +
                             " features, meta describes " + std::to_string(f));
        FlowRecord n;
        n.label_id = rec.label_id;
        n.features.resize(f);
        for (std::size_t i = 0; i < f; ++i) {
            const float lo = meta.per_feature_min[i];
            const float hi = meta.per_feature_max[i];
            float v = hi > lo ? (rec.features[i] - lo) / (hi - lo) : 0.0f;
            n.features[i] = std::clamp(v, 0.0f, 1.0f);
        }
        out.push_back(std::move(n));
    }
    return out;
}

std::tuple<std::size_t, std::size_t, std::size_t> split_sizes(std::size_t n,
                                                             const SplitSpec& spec) {
    const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (spec.train_fraction <= 0 || spec.val_fraction <= 0 || spec.test_fraction <= 0 ||
        std::abs(sum - 1.0) > 1e-9)
        throw ArgumentError("split fractions must be positive and sum to 1");
    const std::size_t n_train = std::size_t(std::floor(double(n) * spec.train_fraction));
    const std::size_t n_val = std::size_t(std::floor(double(n) * spec.val_fraction));
    return {n_train, n_val, n - n_train - n_val};
}

SplitResult split(const std::vector<FlowRecord>& records, const SplitSpec& spec) {
    if (records.size() < 3)
        throw ArgumentError("split: need at least 3 records, got " +
                            std::to_string(records.size()));
    const auto [n_train, n_val, n_test] = split_sizes(records.size(), spec);

    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng() % (i + 1)]);

    SplitResult out;
    out.train.reserve(n_train);
    out.val.reserve(n_val);
    out.test.reserve(n_test);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const FlowRecord& rec = records[order[i]];
        if (i < n_train)
            out.train.push_back(rec);
        else if (i < n_train + n_val)
            out.val.push_back(rec);
        else
            out.test.push_back(rec);
    }
    return out;
}

Dataset make_synthetic(std::size_t classes, std::size_t per_class, std::size_t feature_count,
                       std::uint64_t seed) {
    if (classes < 2)
        throw ArgumentError("make_synthetic: need at least 2 classes, got " +
                            std::to_string(classes));
    if (per_class < 1) throw ArgumentError("make_synthetic: per_class must be >= 1");

    std::mt19937_64 rng(seed);
    auto uniform01 = [&rng]() { return double(rng() >> 11) * (1.0 / 9007199254740992.0); };
    auto gauss = [&]() {
        // Box-Muller; own implementation keeps the stream reproducible.
        double u1 = uniform01();
        while (u1 <= 1e-12) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };

    Dataset ds;
    for (std::size_t f = 0; f < feature_count; ++f)
        ds.meta.feature_names.push_back("f" + std::to_string(f));

    std::vector<std::vector<double>> means(classes, std::vector<double>(feature_count));
    for (std::size_t c = 0; c < classes; ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "class_%03zu", c);
        ds.meta.class_names.emplace_back(name);
        for (std::size_t f = 0; f < feature_count; ++f) means[c][f] = uniform01() * 10.0;
    }

    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t s = 0; s < per_class; ++s) {
            FlowRecord rec;
            rec.label_id = int(c);
            rec.features.resize(feature_count);
            for (std::size_t f = 0; f < feature_count; ++f)
                rec.features[f] = float(means[c][f] + 0.3 * gauss());
            ds.records.push_back(std::move(rec));
        }

    ds.meta = compute_meta(ds.records, std::move(ds.meta.class_names),
                           std::move(ds.meta.feature_names));
    return ds;
}

}  // namespace ntc
