#pragma once

#include "sluekit/rng.hpp"
#include "sluekit/tensor.hpp"

namespace sluekit {

struct AdapterConfig {
    int pool_len = 32;   // fixed output length of the pooling stage
    int in_dim = 64;     // encoder feature width
    int out_dim = 128;   // LLM embedding width
    double ln_eps = 1e-5;
};

// The trainable bridge: adaptive average pooling over time, layer norm,
// then a linear projection into the decoder embedding space.
struct AdapterParams {
    Tensor ln_gain;  // 1 x in_dim
    Tensor ln_bias;  // 1 x in_dim
    Tensor proj_w;   // in_dim x out_dim
    Tensor proj_b;   // 1 x out_dim

    static AdapterParams init(const AdapterConfig& cfg, uint64_t seed);
};

// x is T x in_dim for any T >= 1; output is pool_len x out_dim.
Tensor adapter_forward(const Tensor& x, const AdapterParams& params, const AdapterConfig& cfg);

}  // namespace sluekit
