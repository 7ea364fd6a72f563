#include "sluekit/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace sluekit {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, size_t line, const std::string& what) {
    throw std::runtime_error("manifest " + path + " line " + std::to_string(line) + ": " + what);
}

const std::set<std::string> kKnownKeys = {"id",        "transcript",   "tagged",
                                          "sentiment", "feature_seed", "feature_path"};

}  // namespace

std::vector<Utterance> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open " + path);

    std::vector<Utterance> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(path, line_no, std::string("invalid JSON: ") + e.what());
        }
        if (!j.is_object()) fail(path, line_no, "expected a JSON object");
        for (const auto& [key, _] : j.items()) {
            if (!kKnownKeys.count(key)) fail(path, line_no, "unknown key \"" + key + "\"");
        }

        Utterance u;
        if (!j.contains("id") || !j["id"].is_string()) fail(path, line_no, "missing string \"id\"");
        u.id = j["id"].get<std::string>();
        if (!j.contains("transcript") || !j["transcript"].is_string()) {
            fail(path, line_no, "missing string \"transcript\"");
        }
        u.transcript = j["transcript"].get<std::string>();
        if (u.transcript.empty()) fail(path, line_no, "empty transcript");

        if (j.contains("tagged")) {
            if (!j["tagged"].is_string()) fail(path, line_no, "\"tagged\" must be a string");
            try {
                u.tagged = decode_tagged(j["tagged"].get<std::string>(), DecodeMode::Strict);
            } catch (const CodecError& e) {
                fail(path, line_no, e.what());
            }
        }
        if (j.contains("sentiment")) {
            if (!j["sentiment"].is_string()) fail(path, line_no, "\"sentiment\" must be a string");
            try {
                u.sentiment = sentiment_from_name(j["sentiment"].get<std::string>());
            } catch (const std::invalid_argument& e) {
                fail(path, line_no, e.what());
            }
        }
        if (j.contains("feature_seed")) {
            if (!j["feature_seed"].is_number_unsigned() && !j["feature_seed"].is_number_integer()) {
                fail(path, line_no, "\"feature_seed\" must be an integer");
            }
            u.feature_seed = j["feature_seed"].get<uint64_t>();
        }
        if (j.contains("feature_path")) {
            if (!j["feature_path"].is_string()) fail(path, line_no, "\"feature_path\" must be a string");
            u.feature_path = j["feature_path"].get<std::string>();
        }
        out.push_back(std::move(u));
    }
    return out;
}

void write_manifest(const std::vector<Utterance>& utts, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("manifest: cannot write " + path);
    for (const auto& u : utts) {
        nlohmann::ordered_json j;
        j["id"] = u.id;
        j["transcript"] = u.transcript;
        if (u.tagged) j["tagged"] = encode_tagged(*u.tagged);
        if (u.sentiment) j["sentiment"] = sentiment_name(*u.sentiment);
        if (u.feature_seed) j["feature_seed"] = *u.feature_seed;
        if (u.feature_path) j["feature_path"] = *u.feature_path;
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("manifest: short write to " + path);
}

MelFeature utterance_feature(const Utterance& utt, const PseudoMelConfig& cfg,
                             const std::string& base_dir) {
    if (utt.feature_path) {
        std::filesystem::path p(*utt.feature_path);
        if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
        return read_feature_file(p.string());
    }
    const uint64_t seed = utt.feature_seed ? *utt.feature_seed : mix_seed(0, utt.id);
    return text_to_pseudo_mel(utt.transcript, seed, cfg);
}

}  // namespace sluekit
