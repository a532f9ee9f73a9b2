#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include "json.hpp"
#include "ntc/checkpoint.hpp"
#include "ntc/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunConfig {
    std::string data;
    std::string label_column = "label";
    std::vector<std::string> feature_columns;
    std::string variant = "conv-lstm-td-mlp";
    std::string out = "run";
    ntc::SplitSpec split;
    ntc::TrainConfig train;
    std::size_t repeats = 5;
};

// Config file values fill in first; command-line overrides win.
void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ntc::IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ntc::ParseError(std::string("config file: ") + e.what());
    }
    auto reject_unknown = [](const json& obj, const char* where,
                             std::initializer_list<const char*> known) {
        for (const auto& [key, value] : obj.items()) {
            bool ok = false;
            for (const char* k : known) ok = ok || key == k;
            if (!ok)
                throw ntc::SchemaError(std::string("config file: unknown key \"") + key +
                                       "\" in " + where);
        }
    };
    reject_unknown(j, "top level",
                   {"data", "label_column", "feature_columns", "variant", "out", "split",
                    "train", "repeats"});
    if (j.contains("split"))
        reject_unknown(j["split"], "\"split\"",
                       {"train_fraction", "val_fraction", "test_fraction", "seed"});
    if (j.contains("train"))
        reject_unknown(j["train"], "\"train\"",
                       {"batch_size", "max_epochs", "patience", "lr", "beta1", "beta2", "eps",
                        "seed"});
    cfg.data = j.value("data", cfg.data);
    cfg.label_column = j.value("label_column", cfg.label_column);
    cfg.feature_columns = j.value("feature_columns", cfg.feature_columns);
    cfg.variant = j.value("variant", cfg.variant);
    cfg.out = j.value("out", cfg.out);
    if (j.contains("split")) {
        const json& s = j["split"];
        cfg.split.train_fraction = s.value("train_fraction", cfg.split.train_fraction);
        cfg.split.val_fraction = s.value("val_fraction", cfg.split.val_fraction);
        cfg.split.test_fraction = s.value("test_fraction", cfg.split.test_fraction);
        cfg.split.seed = s.value("seed", cfg.split.seed);
    }
    if (j.contains("train")) {
        const json& t = j["train"];
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.max_epochs = t.value("max_epochs", cfg.train.max_epochs);
        cfg.train.patience = t.value("patience", cfg.train.patience);
        cfg.train.lr = t.value("lr", cfg.train.lr);
        cfg.train.beta1 = t.value("beta1", cfg.train.beta1);
        cfg.train.beta2 = t.value("beta2", cfg.train.beta2);
        cfg.train.eps = t.value("eps", cfg.train.eps);
        cfg.train.seed = t.value("seed", cfg.train.seed);
    }
    cfg.repeats = j.value("repeats", cfg.repeats);
}

json resolved_config(const RunConfig& cfg) {
    return json{{"data", cfg.data},
                {"label_column", cfg.label_column},
                {"feature_columns", cfg.feature_columns},
                {"variant", cfg.variant},
                {"out", cfg.out},
                {"split",
                 {{"train_fraction", cfg.split.train_fraction},
                  {"val_fraction", cfg.split.val_fraction},
                  {"test_fraction", cfg.split.test_fraction},
                  {"seed", cfg.split.seed}}},
                {"train",
                 {{"batch_size", cfg.train.batch_size},
                  {"max_epochs", cfg.train.max_epochs},
                  {"patience", cfg.train.patience},
                  {"lr", cfg.train.lr},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"eps", cfg.train.eps},
                  {"seed", cfg.train.seed}}},
                {"repeats", cfg.repeats}};
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ntc::IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json norm_to_json(const ntc::DatasetMeta& meta) {
    return json{{"class_names", meta.class_names},
                {"feature_names", meta.feature_names},
                {"per_feature_min", meta.per_feature_min},
                {"per_feature_max", meta.per_feature_max}};
}

ntc::DatasetMeta norm_from_json(const json& j) {
    ntc::DatasetMeta meta;
    meta.class_names = j.at("class_names").get<std::vector<std::string>>();
    meta.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    meta.per_feature_min = j.at("per_feature_min").get<std::vector<float>>();
    meta.per_feature_max = j.at("per_feature_max").get<std::vector<float>>();
    meta.counts_per_class.assign(meta.class_names.size(), 0);
    return meta;
}

json history_to_json(const ntc::TrainResult& result) {
    json epochs = json::array();
    for (const auto& e : result.history)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"val_loss", e.val_loss},
                          {"val_accuracy", e.val_accuracy},
                          {"seconds", e.seconds}});
    return json{{"epochs", std::move(epochs)},
                {"best_epoch", result.best_epoch},
                {"best_val_loss", result.best_val_loss},
                {"seconds_per_epoch", result.seconds_per_epoch}};
}

struct Prepared {
    ntc::LabeledData train, val, test;
    ntc::DatasetMeta train_meta;  // normalization statistics, training split only
    std::size_t k = 0, w = 0;
};

Prepared prepare(const RunConfig& cfg) {
    ntc::Dataset ds = ntc::load_csv(cfg.data, cfg.label_column, cfg.feature_columns);
    ntc::SplitResult splits = ntc::split(ds.records, cfg.split);
    ntc::DatasetMeta train_meta =
        ntc::compute_meta(splits.train, ds.meta.class_names, ds.meta.feature_names);

    const auto factors = ntc::choose_factors(train_meta.feature_count());
    Prepared p;
    p.k = factors.k;
    p.w = factors.w;
    if (factors.degenerate)
        std::cerr << "warning: feature count " << train_meta.feature_count()
                  << " is prime; images degenerate to a " << factors.k << "x1 strip\n";
    p.train = ntc::to_labeled(ntc::normalize(splits.train, train_meta), p.k, p.w);
    p.val = ntc::to_labeled(ntc::normalize(splits.val, train_meta), p.k, p.w);
    p.test = ntc::to_labeled(ntc::normalize(splits.test, train_meta), p.k, p.w);
    p.train_meta = std::move(train_meta);
    return p;
}

int cmd_train(const RunConfig& cfg) {
    Prepared p = prepare(cfg);

    ntc::ModelSpec spec;
    spec.variant = ntc::parse_variant(cfg.variant);
    spec.class_count = p.train_meta.class_count();
    spec.k = p.k;
    spec.w = p.w;

    ntc::Model<float> model(spec, cfg.train.seed);
    ntc::TrainResult result = ntc::train(model, p.train, p.val, cfg.train);

    ntc::EvalReport macro = ntc::evaluate(model, p.test, ntc::Averaging::Macro);
    ntc::EvalReport weighted = ntc::evaluate(model, p.test, ntc::Averaging::Weighted);
    macro.epochs_run = weighted.epochs_run = result.history.size();
    macro.seconds_per_epoch = weighted.seconds_per_epoch = result.seconds_per_epoch;

    fs::create_directories(cfg.out);
    const fs::path out(cfg.out);
    const std::string ckpt_dir = (out / "checkpoint").string();
    json metrics = {{"test_accuracy", macro.accuracy},
                    {"test_macro_f1", macro.f1},
                    {"epochs_run", result.history.size()}};
    ntc::save_checkpoint(model, ckpt_dir, metrics);
    write_json(fs::path(ckpt_dir) / "norm.json", norm_to_json(p.train_meta));
    write_json(out / "history.json", history_to_json(result));
    json report = {{"macro", ntc::report_to_json(macro, p.train_meta.class_names)},
                   {"weighted", ntc::report_to_json(weighted, p.train_meta.class_names)}};
    write_json(out / "report.json", report);
    write_json(out / "config.json", resolved_config(cfg));

    std::printf("trained %s: %zu epochs, test accuracy %.4f, macro F1 %.4f\n",
                cfg.variant.c_str(), result.history.size(), macro.accuracy, macro.f1);
    return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const RunConfig& cfg) {
    ntc::Model<float> model = ntc::load_checkpoint(checkpoint_dir);

    ntc::Dataset ds = ntc::load_csv(cfg.data, cfg.label_column, cfg.feature_columns);
    ntc::DatasetMeta meta = ds.meta;
    std::vector<ntc::FlowRecord> records = ds.records;

    const fs::path norm_path = fs::path(checkpoint_dir) / "norm.json";
    if (fs::exists(norm_path)) {
        std::ifstream in(norm_path);
        json j;
        in >> j;
        ntc::DatasetMeta train_meta = norm_from_json(j);
        if (train_meta.feature_count() != meta.feature_count())
            throw ntc::ShapeError("checkpoint was trained on " +
                                  std::to_string(train_meta.feature_count()) +
                                  " features, data file has " +
                                  std::to_string(meta.feature_count()));
        // Remap labels onto the training-time class ids.
        std::unordered_map<std::string, int> ids;
        for (std::size_t i = 0; i < train_meta.class_names.size(); ++i)
            ids[train_meta.class_names[i]] = int(i);
        for (auto& rec : records) {
            auto it = ids.find(meta.class_names.at(std::size_t(rec.label_id)));
            if (it == ids.end())
                throw ntc::DataError("label \"" +
                                     meta.class_names.at(std::size_t(rec.label_id)) +
                                     "\" was not seen during training");
            rec.label_id = it->second;
        }
        records = ntc::normalize(records, train_meta);
        meta = std::move(train_meta);
    } else {
        records = ntc::normalize(records, meta);
    }

    if (meta.feature_count() != model.spec().k * model.spec().w)
        throw ntc::ShapeError("checkpoint expects " +
                              std::to_string(model.spec().k * model.spec().w) +
                              " features, data file has " + std::to_string(meta.feature_count()));

    ntc::LabeledData data = ntc::to_labeled(records, model.spec().k, model.spec().w);
    ntc::EvalReport macro = ntc::evaluate(model, data, ntc::Averaging::Macro);
    ntc::EvalReport weighted = ntc::evaluate(model, data, ntc::Averaging::Weighted);

    fs::create_directories(cfg.out);
    json report = {{"macro", ntc::report_to_json(macro, meta.class_names)},
                   {"weighted", ntc::report_to_json(weighted, meta.class_names)}};
    write_json(fs::path(cfg.out) / "report.json", report);
    std::printf("accuracy %.4f, macro precision %.4f, recall %.4f, F1 %.4f\n", macro.accuracy,
                macro.precision, macro.recall, macro.f1);
    return 0;
}

int cmd_count_params(const std::string& variant, std::size_t classes, bool check) {
    ntc::ModelSpec spec;
    spec.variant = ntc::parse_variant(variant);
    spec.class_count = classes;
    ntc::Model<float> model(spec, 0);
    const ntc::ParamAudit audit = model.audit();

    std::printf("%-12s %-24s %12s\n", "Network", "Calculation", "Trainable");
    for (const auto& row : audit.rows)
        std::printf("%-12s %-24s %12zu\n", row.layer.c_str(), row.formula.c_str(), row.count);
    std::printf("%-12s %-24s %12zu\n", "Total", "", audit.total);

    if (check) {
        const std::size_t expected =
            spec.variant == ntc::Variant::ConvLstmTdMlp ? 4726189u : 114925u;
        if (classes != 141 || audit.total != expected) {
            std::fprintf(stderr, "check failed: total %zu, expected %zu at 141 classes\n",
                         audit.total, expected);
            return 1;
        }
        std::printf("check ok: total %zu\n", audit.total);
    }
    return 0;
}

int cmd_preview(const RunConfig& cfg, std::size_t row) {
    ntc::Dataset ds = ntc::load_csv(cfg.data, cfg.label_column, cfg.feature_columns);
    if (row >= ds.records.size())
        throw ntc::ArgumentError("row " + std::to_string(row) + " out of range; file has " +
                                 std::to_string(ds.records.size()) + " records");
    const auto factors = ntc::choose_factors(ds.meta.feature_count());
    const std::vector<ntc::FlowRecord> normalized = ntc::normalize(ds.records, ds.meta);

    fs::create_directories(cfg.out);
    char name[64];
    std::snprintf(name, sizeof(name), "flow_%06zu.png", row);
    const fs::path path = fs::path(cfg.out) / name;
    ntc::export_png(ntc::reshape_flow(normalized[row].features, factors.k, factors.w),
                    path.string());
    std::printf("wrote %s (%zux%zu)\n", path.string().c_str(), factors.w, factors.k);
    return 0;
}

int cmd_synth(std::size_t classes, std::size_t per_class, std::size_t features,
              std::uint64_t seed, const std::string& out) {
    ntc::Dataset ds = ntc::make_synthetic(classes, per_class, features, seed);
    ntc::write_csv(out, ds.records, ds.meta);
    std::printf("wrote %s: %zu records, %zu classes, %zu features\n", out.c_str(),
                ds.records.size(), ds.meta.class_count(), ds.meta.feature_count());
    return 0;
}

int cmd_compare(const RunConfig& cfg) {
    Prepared p = prepare(cfg);
    ntc::ModelSpec spec;
    spec.class_count = p.train_meta.class_count();
    spec.k = p.k;
    spec.w = p.w;

    fs::create_directories(cfg.out);
    write_json(fs::path(cfg.out) / "config.json", resolved_config(cfg));
    ntc::CompareReport report =
        ntc::compare_td(p.train, p.val, p.test, spec, cfg.train, cfg.repeats, cfg.out);
    for (const auto& v : report.variants)
        std::printf("%-22s accuracy %.4f (%.4f..%.4f), %.1f s/epoch\n", v.variant.c_str(),
                    v.accuracy.mean, v.accuracy.min, v.accuracy.max, v.mean_seconds_per_epoch);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"network traffic classifier: flow images + Conv-LSTM-TD(MLP)"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    std::string checkpoint_dir;
    std::size_t row = 0;
    std::size_t classes = 141, per_class = 5, features = 48;
    std::uint64_t synth_seed = 7;
    std::string synth_out = "synth.csv";
    bool check = false;

    auto add_data_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--data", cfg.data, "flow statistics CSV");
        cmd->add_option("--label-column", cfg.label_column, "label column name");
        cmd->add_option("--feature-columns", cfg.feature_columns,
                        "feature column names (default: all except label)");
        cmd->add_option("--out", cfg.out, "output directory");
    };
    auto add_train_opts = [&](CLI::App* cmd) {
        cmd->add_option("--variant", cfg.variant, "conv-lstm-td-mlp | conv-lstm-mlp");
        cmd->add_option("--batch-size", cfg.train.batch_size);
        cmd->add_option("--max-epochs", cfg.train.max_epochs);
        cmd->add_option("--patience", cfg.train.patience);
        cmd->add_option("--lr", cfg.train.lr);
        cmd->add_option("--seed", cfg.train.seed);
        cmd->add_option("--split-seed", cfg.split.seed);
        cmd->add_option("--train-fraction", cfg.split.train_fraction);
        cmd->add_option("--val-fraction", cfg.split.val_fraction);
        cmd->add_option("--test-fraction", cfg.split.test_fraction);
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write run artifacts");
    add_data_opts(train);
    add_train_opts(train);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a data file");
    add_data_opts(eval);
    eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();

    CLI::App* count = app.add_subcommand("count-params", "print the trainable-parameter ledger");
    count->add_option("--variant", cfg.variant, "conv-lstm-td-mlp | conv-lstm-mlp");
    count->add_option("--classes", classes, "class count (default 141)");
    count->add_flag("--check", check, "fail unless totals match the reference ledger");

    CLI::App* preview = app.add_subcommand("preview", "export one flow as a grayscale PNG");
    add_data_opts(preview);
    preview->add_option("--row", row, "0-based record index");

    CLI::App* synth = app.add_subcommand("synth", "write a synthetic flow dataset");
    synth->add_option("--classes", classes, "number of classes");
    synth->add_option("--per-class", per_class, "records per class");
    synth->add_option("--features", features, "features per record");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output CSV path");

    CLI::App* compare = app.add_subcommand("compare", "train both variants repeatedly");
    add_data_opts(compare);
    add_train_opts(compare);
    compare->add_option("--repeats", cfg.repeats, "training runs per variant");

    // Parse twice so the config file loads before flag overrides are applied.
    try {
        app.parse(argc, argv);
        if (!config_path.empty()) {
            RunConfig base;
            apply_config_file(base, config_path);
            std::swap(cfg, base);
            app.clear();
            app.parse(argc, argv);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(checkpoint_dir, cfg);
        if (count->parsed()) return cmd_count_params(cfg.variant, classes, check);
        if (preview->parsed()) return cmd_preview(cfg, row);
        if (synth->parsed()) return cmd_synth(classes, per_class, features, synth_seed, synth_out);
        if (compare->parsed()) return cmd_compare(cfg);
    } catch (const ntc::ArgumentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ntc::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ntc::SchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ntc::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ntc::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
