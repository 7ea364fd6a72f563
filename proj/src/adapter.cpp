#include "sluekit/adapter.hpp"

#include <cmath>
#include <stdexcept>

namespace sluekit {

AdapterParams AdapterParams::init(const AdapterConfig& cfg, uint64_t seed) {
    if (cfg.pool_len < 1 || cfg.in_dim < 1 || cfg.out_dim < 1) {
        throw std::invalid_argument("adapter: config dimensions must be >= 1");
    }
    AdapterParams p;
    p.ln_gain = Tensor::param(Mat::Ones(1, cfg.in_dim));
    p.ln_bias = Tensor::param(Mat::Zero(1, cfg.in_dim));

    Rng rng(mix_seed(seed, "adapter.proj.w"));
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.in_dim));
    Mat w(cfg.in_dim, cfg.out_dim);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    p.proj_w = Tensor::param(std::move(w));
    p.proj_b = Tensor::param(Mat::Zero(1, cfg.out_dim));
    return p;
}

Tensor adapter_forward(const Tensor& x, const AdapterParams& params, const AdapterConfig& cfg) {
    if (x.cols() != cfg.in_dim) {
        throw std::invalid_argument("adapter: input width " + std::to_string(x.cols()) +
                                    " does not match in_dim " + std::to_string(cfg.in_dim));
    }
    if (!x.value().allFinite()) throw std::invalid_argument("adapter: non-finite input");
    Tensor pooled = adaptive_avg_pool_rows(x, cfg.pool_len);
    Tensor normed = layer_norm_rows(pooled, params.ln_gain, params.ln_bias, cfg.ln_eps);
    return add_rowvec(matmul(normed, params.proj_w), params.proj_b);
}

}  // namespace sluekit
