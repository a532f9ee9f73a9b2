#include "ntc/checkpoint.hpp"

#include <filesystem>
#include <fstream>

namespace ntc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

struct Entry {
    std::string name;
    Shape shape;
    std::vector<float>* data;
    bool trainable;
};

std::vector<Entry> entries(Model<float>& model) {
    std::vector<Entry> out;
    for (auto& np : model.named_params())
        out.push_back({np.name, np.tensor.shape(), &np.tensor.data(), true});
    for (auto& [name, buf] : model.named_buffers())
        out.push_back({name, {buf->size()}, buf, false});
    return out;
}

}  // namespace

void save_checkpoint(Model<float>& model, const std::string& dir, const json& metrics) {
    fs::create_directories(dir);

    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["variant"] = variant_name(model.spec().variant);
    manifest["class_count"] = model.spec().class_count;
    manifest["input_channels"] = model.spec().input_channels;
    manifest["k"] = model.spec().k;
    manifest["w"] = model.spec().w;
    manifest["metrics"] = metrics;

    std::ofstream blob(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!blob) throw IoError("cannot write " + dir + "/weights.bin");

    std::size_t offset = 0;
    json tensors = json::array();
    for (const auto& e : entries(model)) {
        tensors.push_back({{"name", e.name},
                           {"shape", e.shape},
                           {"offset", offset},
                           {"trainable", e.trainable}});
        blob.write(reinterpret_cast<const char*>(e.data->data()),
                   std::streamsize(e.data->size() * sizeof(float)));
        offset += e.data->size();
    }
    manifest["tensors"] = std::move(tensors);
    manifest["total_elements"] = offset;
    blob.close();
    if (!blob) throw IoError("write failed: " + dir + "/weights.bin");

    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot write " + dir + "/manifest.json");
    mf << manifest.dump(2) << '\n';
}

Model<float> load_checkpoint(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("cannot open " + dir + "/manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw IntegrityError("corrupt manifest in " + dir + ": " + e.what());
    }

    const int version = manifest.value("format_version", -1);
    if (version != kFormatVersion)
        throw VersionError("unsupported checkpoint format version " + std::to_string(version) +
                           " in " + dir);

    ModelSpec spec;
    spec.variant = parse_variant(manifest.at("variant").get<std::string>());
    spec.class_count = manifest.at("class_count").get<std::size_t>();
    spec.input_channels = manifest.at("input_channels").get<std::size_t>();
    spec.k = manifest.at("k").get<std::size_t>();
    spec.w = manifest.at("w").get<std::size_t>();

    std::ifstream blob(fs::path(dir) / "weights.bin", std::ios::binary);
    if (!blob) throw IoError("cannot open " + dir + "/weights.bin");
    blob.seekg(0, std::ios::end);
    const std::size_t blob_elems = std::size_t(blob.tellg()) / sizeof(float);
    blob.seekg(0);

    const std::size_t expected = manifest.at("total_elements").get<std::size_t>();
    if (blob_elems != expected)
        throw IntegrityError("weights blob holds " + std::to_string(blob_elems) +
                             " values, manifest expects " + std::to_string(expected));

    Model<float> model(spec, 0);
    auto targets = entries(model);
    const json& tensors = manifest.at("tensors");
    if (tensors.size() != targets.size())
        throw IntegrityError("manifest lists " + std::to_string(tensors.size()) +
                             " tensors, model has " + std::to_string(targets.size()));

    for (std::size_t i = 0; i < targets.size(); ++i) {
        const json& t = tensors[i];
        Entry& e = targets[i];
        if (t.at("name").get<std::string>() != e.name)
            throw IntegrityError("manifest tensor \"" + t.at("name").get<std::string>() +
                                 "\" does not match model tensor \"" + e.name + "\"");
        const Shape shape = t.at("shape").get<Shape>();
        if (shape != e.shape)
            throw IntegrityError("tensor " + e.name + " has shape " + shape_str(shape) +
                                 " in manifest, model expects " + shape_str(e.shape));
        blob.seekg(std::streamoff(t.at("offset").get<std::size_t>() * sizeof(float)));
        blob.read(reinterpret_cast<char*>(e.data->data()),
                  std::streamsize(e.data->size() * sizeof(float)));
        if (!blob) throw IntegrityError("truncated weights blob while reading " + e.name);
    }
    return model;
}

}  // namespace ntc
