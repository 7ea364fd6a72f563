#pragma once

#include "sluekit/model.hpp"

#include <memory>
#include <string>

namespace sluekit {

struct CheckpointMeta {
    std::string stage;
    int epoch = 0;
    std::string metric_name;
    double metric_value = 0.0;
    std::string digest;     // hex FNV-1a over the float32 tensor blobs
    std::string rng_state;  // training RNG state at save time
};

// Digest over the parameters whose names start with `prefix` (all when
// empty), computed on the float32 bytes that would be serialized, so the
// value is stable across a save/load round trip.
std::string param_digest(const ParamRegistry& params, const std::string& prefix = "");

// Single-file checkpoint: magic + version, a JSON header carrying the model
// config, meta and tensor manifest, then little-endian float32 blobs in
// registry order. Classifier parameters are flagged train_only in the header.
void save_checkpoint(const std::string& path, const SpeechLlm& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    std::unique_ptr<SpeechLlm> model;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Overwrites the parameters of an existing model from a checkpoint whose
// config must match; used for in-place stage chaining.
CheckpointMeta load_checkpoint_into(const std::string& path, SpeechLlm& model);

}  // namespace sluekit
