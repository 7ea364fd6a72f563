#include "sluekit/checkpoint.hpp"

#include "sluekit/config.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace sluekit {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'K', 'C'};
constexpr uint32_t kVersion = 1;

std::vector<unsigned char> tensor_blob(const Mat& m) {
    std::vector<unsigned char> out(sizeof(float) * static_cast<size_t>(m.size()));
    size_t at = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const float f = static_cast<float>(m(i, j));
            std::memcpy(out.data() + at, &f, sizeof(float));
            at += sizeof(float);
        }
    }
    return out;
}

uint64_t fnv1a64(uint64_t h, const unsigned char* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

nlohmann::ordered_json meta_to_json(const CheckpointMeta& m) {
    return {{"stage", m.stage},
            {"epoch", m.epoch},
            {"metric_name", m.metric_name},
            {"metric_value", m.metric_value},
            {"digest", m.digest},
            {"rng_state", m.rng_state}};
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta m;
    m.stage = j.value("stage", "");
    m.epoch = j.value("epoch", 0);
    m.metric_name = j.value("metric_name", "");
    m.metric_value = j.value("metric_value", 0.0);
    m.digest = j.value("digest", "");
    m.rng_state = j.value("rng_state", "");
    return m;
}

}  // namespace

std::string param_digest(const ParamRegistry& params, const std::string& prefix) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : params.items()) {
        if (name.rfind(prefix, 0) != 0) continue;
        const auto blob = tensor_blob(t.value());
        h = fnv1a64(h, blob.data(), blob.size());
    }
    return hex64(h);
}

void save_checkpoint(const std::string& path, const SpeechLlm& model, const CheckpointMeta& meta) {
    nlohmann::ordered_json header;
    header["format_version"] = kVersion;
    header["model"] = model_config_to_json(model.config());
    header["meta"] = meta_to_json(meta);
    header["train_only_prefixes"] = {"classifier_ner.", "classifier_sa."};

    std::vector<std::vector<unsigned char>> blobs;
    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (const auto& [name, t] : model.params().items()) {
        auto blob = tensor_blob(t.value());
        manifest.push_back({{"name", name},
                            {"rows", t.rows()},
                            {"cols", t.cols()},
                            {"offset", offset}});
        offset += blob.size();
        blobs.push_back(std::move(blob));
    }
    header["tensors"] = manifest;

    const std::string header_str = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u64(os, header_str.size());
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& blob : blobs) {
        os.write(reinterpret_cast<const char*>(blob.data()),
                 static_cast<std::streamsize>(blob.size()));
    }
    if (!os) throw std::runtime_error("checkpoint: short write to " + path);
}

namespace {

CheckpointMeta load_into_registry(const std::string& path, SpeechLlm* existing,
                                  std::unique_ptr<SpeechLlm>* created) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const uint32_t version = read_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported format version " +
                                 std::to_string(version) + " in " + path);
    }
    const uint64_t header_len = read_u64(is);
    std::string header_str(header_len, '\0');
    is.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!is) throw std::runtime_error("checkpoint: truncated header in " + path);
    const auto header = nlohmann::json::parse(header_str);

    const ModelConfig cfg = model_config_from_json(header.at("model"));
    SpeechLlm* model = existing;
    if (!model) {
        created->reset(new SpeechLlm(cfg, 0));
        model = created->get();
    }

    const std::streampos blob_base = is.tellg();
    for (const auto& entry : header.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto rows = entry.at("rows").get<Eigen::Index>();
        const auto cols = entry.at("cols").get<Eigen::Index>();
        const auto offset = entry.at("offset").get<uint64_t>();
        if (!model->params().has(name)) {
            throw std::runtime_error("checkpoint: model has no parameter " + name);
        }
        const Tensor& t = model->params().at(name);
        if (t.rows() != rows || t.cols() != cols) {
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        }
        is.seekg(blob_base + static_cast<std::streamoff>(offset));
        std::vector<float> buf(static_cast<size_t>(rows * cols));
        is.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
        Mat& m = const_cast<Tensor&>(t).value();
        size_t at = 0;
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(buf[at++]);
        }
    }
    return meta_from_json(header.at("meta"));
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) {
    LoadedCheckpoint out;
    out.meta = load_into_registry(path, nullptr, &out.model);
    return out;
}

CheckpointMeta load_checkpoint_into(const std::string& path, SpeechLlm& model) {
    std::unique_ptr<SpeechLlm> unused;
    return load_into_registry(path, &model, &unused);
}

}  // namespace sluekit
