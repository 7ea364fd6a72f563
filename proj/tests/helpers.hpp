#pragma once

#include "sluekit/nertag.hpp"
#include "sluekit/rng.hpp"
#include "sluekit/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace sluekit::testing {

// Central finite differences against the analytic gradients of `forward`,
// sampling `per_param` random entries from each parameter.
struct GradCheck {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline GradCheck grad_check(const std::vector<Tensor>& params,
                            const std::function<Tensor()>& forward, int per_param, Rng& rng,
                            double h = 1e-5) {
    Tensor loss = forward();
    backward(loss);
    std::vector<Mat> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad());

    GradCheck out;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        for (int s = 0; s < per_param; ++s) {
            const auto i = static_cast<Eigen::Index>(rng.uniform_int(0, p.rows() - 1));
            const auto j = static_cast<Eigen::Index>(rng.uniform_int(0, p.cols() - 1));
            const double orig = p.value()(i, j);
            p.value()(i, j) = orig + h;
            const double up = forward().item();
            p.value()(i, j) = orig - h;
            const double down = forward().item();
            p.value()(i, j) = orig;
            const double fd = (up - down) / (2.0 * h);
            const double an = analytic[pi](i, j);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            out.max_rel_err = std::max(out.max_rel_err, std::abs(fd - an) / denom);
            ++out.checked;
        }
    }
    return out;
}

inline Mat random_mat(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.uniform(-1.0, 1.0);
    }
    return m;
}

// Random valid tagged transcript: word-aligned, non-overlapping spans over a
// small vocabulary, so encode/decode must round-trip exactly.
inline TaggedTranscript random_tagged(Rng& rng) {
    static const std::vector<std::string> words = {"alpha", "bravo", "echo", "delta", "gulf",
                                                   "hotel", "india", "kilo",  "lima", "mike"};
    const int n_words = static_cast<int>(rng.uniform_int(1, 8));
    std::vector<std::string> toks;
    for (int i = 0; i < n_words; ++i) {
        toks.push_back(words[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(words.size()) - 1))]);
    }

    TaggedTranscript t;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) t.plain_text += ' ';
        t.plain_text += toks[i];
    }
    int order = 0;
    size_t i = 0;
    while (i < toks.size()) {
        if (rng.uniform() < 0.4) {
            const size_t span_len = std::min<size_t>(static_cast<size_t>(rng.uniform_int(1, 2)),
                                                     toks.size() - i);
            std::string phrase = toks[i];
            for (size_t k = 1; k < span_len; ++k) phrase += " " + toks[i + k];
            const auto tag = static_cast<EntityTag>(rng.uniform_int(0, kNumEntityTags - 1));
            t.spans.push_back({tag, phrase, order++});
            i += span_len;
        } else {
            ++i;
        }
    }
    return t;
}

}  // namespace sluekit::testing
