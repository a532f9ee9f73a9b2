#pragma once

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "ntc/errors.hpp"

namespace ntc {

// One flow's statistical feature vector plus its dense class id.
struct FlowRecord {
    std::vector<float> features;
    int label_id = 0;
};

struct DatasetMeta {
    std::vector<std::string> class_names;
    std::vector<std::string> feature_names;
    std::vector<float> per_feature_min;
    std::vector<float> per_feature_max;
    std::vector<std::size_t> counts_per_class;

    std::size_t class_count() const { return class_names.size(); }
    std::size_t feature_count() const { return feature_names.size(); }
};

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct Dataset {
    std::vector<FlowRecord> records;
    DatasetMeta meta;
};

struct SplitResult {
    std::vector<FlowRecord> train;
    std::vector<FlowRecord> val;
    std::vector<FlowRecord> test;
};

// Loads a comma-separated file with a header row. Labels are mapped to dense
// ids in first-appearance order. Empty feature_columns selects every column
// except the label column, in header order.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& feature_columns = {});

void write_csv(const std::string& path, const std::vector<FlowRecord>& records,
               const DatasetMeta& meta);

// Min/max and class counts recomputed over the given records (normally the
// training split), keeping the existing name mappings.
DatasetMeta compute_meta(const std::vector<FlowRecord>& records,
                         std::vector<std::string> class_names,
                         std::vector<std::string> feature_names);

// Per-feature (x - min) / (max - min) into [0,1]; constant features map to 0
// and out-of-range values clamp.
std::vector<FlowRecord> normalize(const std::vector<FlowRecord>& records, const DatasetMeta& meta);

// Partition sizes: floor for train and val, remainder to test.
std::tuple<std::size_t, std::size_t, std::size_t> split_sizes(std::size_t n, const SplitSpec& spec);

SplitResult split(const std::vector<FlowRecord>& records, const SplitSpec& spec);

// Separable synthetic dataset: one random mean vector per class plus noise.
Dataset make_synthetic(std::size_t classes, std::size_t per_class, std::size_t feature_count,
                       std::uint64_t seed);

}  // namespace ntc
