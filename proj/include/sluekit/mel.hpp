#pragma once

#include "sluekit/rng.hpp"
#include "sluekit/tensor.hpp"

#include <cstdint>
#include <string>

namespace sluekit {

// T x F feature matrix standing in for a mel-spectrogram.
struct MelFeature {
    Mat frames;

    Eigen::Index t() const { return frames.rows(); }
    Eigen::Index f() const { return frames.cols(); }
};

struct PseudoMelConfig {
    int bands = 40;        // F
    int max_frames = 512;  // T cap; pad_or_trim targets this
    int upsample = 4;      // frames per character
    double jitter = 0.02;  // per-frame noise amplitude
    uint64_t char_seed = 7;  // seeds the per-character base vectors
};

// Deterministic feature synthesis: every character owns a fixed seeded base
// vector, repeated `upsample` times along T with small seeded jitter. Same
// (transcript, seed, cfg) gives a bit-identical matrix.
MelFeature text_to_pseudo_mel(const std::string& transcript, uint64_t seed,
                              const PseudoMelConfig& cfg);

// The base vector a character maps to, before jitter.
Eigen::RowVectorXd char_base_vector(char c, const PseudoMelConfig& cfg);

// Linear time interpolation to T' = round(T / factor); factor 1.0 is an exact
// identity. Throws on factor <= 0.
MelFeature speed_perturb(const MelFeature& x, double factor);

struct SpecAugmentConfig {
    int num_freq_masks = 1;
    int freq_mask_width = 4;  // exact band width per mask
    int num_time_masks = 1;
    int time_mask_width = 6;  // exact frame width per mask
};

// Masks whole frequency bands then whole time bands to the feature mean.
// Placement comes from `rng`; widths are taken from the config as-is and
// must not exceed the corresponding dimension.
MelFeature spec_augment(const MelFeature& x, Rng& rng, const SpecAugmentConfig& cfg);

// Zero-pads or trims along T to exactly max_frames.
MelFeature pad_or_trim(const MelFeature& x, int max_frames);

// Binary feature file: 8-byte header {T: uint32 LE, F: uint32 LE} followed by
// row-major float32 data.
void write_feature_file(const std::string& path, const MelFeature& x);
MelFeature read_feature_file(const std::string& path);

}  // namespace sluekit
