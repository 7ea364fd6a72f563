#include "sluekit/mel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace sluekit {

Eigen::RowVectorXd char_base_vector(char c, const PseudoMelConfig& cfg) {
    Rng rng(mix_seed(cfg.char_seed, static_cast<uint64_t>(static_cast<unsigned char>(c))));
    Eigen::RowVectorXd v(cfg.bands);
    for (int i = 0; i < cfg.bands; ++i) v(i) = rng.uniform(-1.0, 1.0);
    return v;
}

MelFeature text_to_pseudo_mel(const std::string& transcript, uint64_t seed,
                              const PseudoMelConfig& cfg) {
    if (transcript.empty()) throw std::invalid_argument("mel: empty transcript");
    const Eigen::Index t_full = static_cast<Eigen::Index>(transcript.size()) * cfg.upsample;
    const Eigen::Index t = std::min<Eigen::Index>(t_full, cfg.max_frames);

    Rng jitter(mix_seed(seed, "jitter"));
    MelFeature out;
    out.frames.resize(t, cfg.bands);
    Eigen::Index row = 0;
    for (char c : transcript) {
        const Eigen::RowVectorXd base = char_base_vector(c, cfg);
        for (int k = 0; k < cfg.upsample && row < t; ++k, ++row) {
            for (int j = 0; j < cfg.bands; ++j) {
                out.frames(row, j) = base(j) + cfg.jitter * jitter.uniform(-1.0, 1.0);
            }
        }
        if (row >= t) break;
    }
    return out;
}

MelFeature speed_perturb(const MelFeature& x, double factor) {
    if (factor <= 0.0) throw std::invalid_argument("mel: speed factor must be positive");
    const Eigen::Index t = x.t();
    const Eigen::Index t_new =
        std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(static_cast<double>(t) / factor)));

    MelFeature out;
    out.frames.resize(t_new, x.f());
    for (Eigen::Index j = 0; j < t_new; ++j) {
        const double pos = (t_new == 1) ? 0.0
                                        : static_cast<double>(j) * static_cast<double>(t - 1) /
                                              static_cast<double>(t_new - 1);
        const Eigen::Index i0 = static_cast<Eigen::Index>(std::floor(pos));
        const Eigen::Index i1 = std::min<Eigen::Index>(i0 + 1, t - 1);
        const double w = pos - static_cast<double>(i0);
        if (w == 0.0) {
            out.frames.row(j) = x.frames.row(i0);
        } else {
            out.frames.row(j) = (1.0 - w) * x.frames.row(i0) + w * x.frames.row(i1);
        }
    }
    return out;
}

MelFeature spec_augment(const MelFeature& x, Rng& rng, const SpecAugmentConfig& cfg) {
    if (cfg.num_freq_masks > 0 && cfg.freq_mask_width > x.f()) {
        throw std::invalid_argument("mel: freq mask wider than feature dimension");
    }
    if (cfg.num_time_masks > 0 && cfg.time_mask_width > x.t()) {
        throw std::invalid_argument("mel: time mask wider than frame count");
    }
    MelFeature out = x;
    const double fill = x.frames.mean();
    for (int m = 0; m < cfg.num_freq_masks; ++m) {
        if (cfg.freq_mask_width <= 0) break;
        const auto start = rng.uniform_int(0, x.f() - cfg.freq_mask_width);
        out.frames.middleCols(start, cfg.freq_mask_width).setConstant(fill);
    }
    for (int m = 0; m < cfg.num_time_masks; ++m) {
        if (cfg.time_mask_width <= 0) break;
        const auto start = rng.uniform_int(0, x.t() - cfg.time_mask_width);
        out.frames.middleRows(start, cfg.time_mask_width).setConstant(fill);
    }
    return out;
}

MelFeature pad_or_trim(const MelFeature& x, int max_frames) {
    if (max_frames < 1) throw std::invalid_argument("mel: max_frames must be >= 1");
    MelFeature out;
    out.frames = Mat::Zero(max_frames, x.f());
    const Eigen::Index keep = std::min<Eigen::Index>(x.t(), max_frames);
    out.frames.topRows(keep) = x.frames.topRows(keep);
    return out;
}

void write_feature_file(const std::string& path, const MelFeature& x) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("mel: cannot write " + path);
    const uint32_t t = static_cast<uint32_t>(x.t());
    const uint32_t f = static_cast<uint32_t>(x.f());
    unsigned char header[8] = {
        static_cast<unsigned char>(t & 0xff),         static_cast<unsigned char>((t >> 8) & 0xff),
        static_cast<unsigned char>((t >> 16) & 0xff), static_cast<unsigned char>((t >> 24) & 0xff),
        static_cast<unsigned char>(f & 0xff),         static_cast<unsigned char>((f >> 8) & 0xff),
        static_cast<unsigned char>((f >> 16) & 0xff), static_cast<unsigned char>((f >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(header), 8);
    std::vector<float> row(static_cast<size_t>(f));
    for (uint32_t i = 0; i < t; ++i) {
        for (uint32_t j = 0; j < f; ++j) row[j] = static_cast<float>(x.frames(i, j));
        os.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(sizeof(float) * f));
    }
    if (!os) throw std::runtime_error("mel: short write to " + path);
}

MelFeature read_feature_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("mel: cannot read " + path);
    unsigned char header[8];
    is.read(reinterpret_cast<char*>(header), 8);
    if (!is) throw std::runtime_error("mel: truncated header in " + path);
    const uint32_t t = static_cast<uint32_t>(header[0]) | (static_cast<uint32_t>(header[1]) << 8) |
                       (static_cast<uint32_t>(header[2]) << 16) |
                       (static_cast<uint32_t>(header[3]) << 24);
    const uint32_t f = static_cast<uint32_t>(header[4]) | (static_cast<uint32_t>(header[5]) << 8) |
                       (static_cast<uint32_t>(header[6]) << 16) |
                       (static_cast<uint32_t>(header[7]) << 24);
    if (t == 0 || f == 0) throw std::runtime_error("mel: empty feature in " + path);
    MelFeature out;
    out.frames.resize(t, f);
    std::vector<float> row(static_cast<size_t>(f));
    for (uint32_t i = 0; i < t; ++i) {
        is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(sizeof(float) * f));
        if (!is) throw std::runtime_error("mel: truncated data in " + path);
        for (uint32_t j = 0; j < f; ++j) out.frames(i, j) = static_cast<double>(row[j]);
    }
    return out;
}

}  // namespace sluekit
