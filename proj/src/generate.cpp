#include "sluekit/generate.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace sluekit {

namespace {

struct Hypothesis {
    std::vector<int> tokens;
    double logprob_sum = 0.0;
};

double normalized_score(const Hypothesis& h, double length_penalty) {
    const double len = static_cast<double>(std::max<size_t>(h.tokens.size(), 1));
    return h.logprob_sum / std::pow(len, length_penalty);
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

void DecodeConfig::validate() const {
    if (beam < 1) throw std::invalid_argument("decode: beam must be >= 1");
    if (temperature <= 0.0) throw std::invalid_argument("decode: temperature must be > 0");
    if (repetition_penalty < 1.0) throw std::invalid_argument("decode: repetition_penalty must be >= 1");
    if (length_penalty < 0.0) throw std::invalid_argument("decode: length_penalty must be >= 0");
    if (max_new_tokens < 1) throw std::invalid_argument("decode: max_new_tokens must be >= 1");
}

GenerationResult generate(ScoringModel& model, const DecodeConfig& cfg) {
    cfg.validate();
    const int vocab = model.vocab_size();
    const int eos = model.eos_id();

    std::vector<Hypothesis> live{Hypothesis{}};
    std::vector<Hypothesis> done;

    for (int step = 0; step < cfg.max_new_tokens && !live.empty(); ++step) {
        struct Candidate {
            size_t parent;
            int token;
            double logprob_sum;
        };
        std::vector<Candidate> candidates;
        candidates.reserve(live.size() * static_cast<size_t>(vocab));

        for (size_t pi = 0; pi < live.size(); ++pi) {
            Eigen::RowVectorXd logits = model.next_logits(live[pi].tokens);
            if (logits.size() != vocab) {
                throw std::runtime_error("decode: scoring model returned wrong logit width");
            }
            logits /= cfg.temperature;
            if (cfg.repetition_penalty != 1.0) {
                const std::set<int> seen(live[pi].tokens.begin(), live[pi].tokens.end());
                for (int t : seen) {
                    const double v = logits(t);
                    logits(t) = v > 0.0 ? v / cfg.repetition_penalty : v * cfg.repetition_penalty;
                }
            }
            // log-softmax
            const double m = logits.maxCoeff();
            const double lse = std::log((logits.array() - m).exp().sum()) + m;
            for (int t = 0; t < vocab; ++t) {
                candidates.push_back({pi, t, live[pi].logprob_sum + (logits(t) - lse)});
            }
        }

        std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
            if (a.logprob_sum != b.logprob_sum) return a.logprob_sum > b.logprob_sum;
            std::vector<int> sa = live[a.parent].tokens, sb = live[b.parent].tokens;
            sa.push_back(a.token);
            sb.push_back(b.token);
            return lex_less(sa, sb);
        });

        // Walk the sorted candidates: EOS endings ahead of the surviving beams
        // finish, everything else refills the beam until it is full.
        std::vector<Hypothesis> next_live;
        for (const auto& c : candidates) {
            if (static_cast<int>(next_live.size()) >= cfg.beam) break;
            Hypothesis h = live[c.parent];
            h.tokens.push_back(c.token);
            h.logprob_sum = c.logprob_sum;
            if (c.token == eos) {
                if (static_cast<int>(done.size()) < cfg.beam) done.push_back(std::move(h));
            } else {
                next_live.push_back(std::move(h));
            }
        }
        live = std::move(next_live);
        if (static_cast<int>(done.size()) >= cfg.beam) break;
    }

    // Rank finished hypotheses; leftover live ones only compete when the
    // search ran out of budget before enough EOS endings were found.
    std::vector<std::pair<Hypothesis, bool>> pool;  // (hyp, truncated)
    for (auto& h : done) pool.emplace_back(std::move(h), false);
    if (static_cast<int>(done.size()) < cfg.beam) {
        for (auto& h : live) pool.emplace_back(std::move(h), true);
    }
    if (pool.empty()) throw std::runtime_error("decode: no hypotheses produced");

    std::sort(pool.begin(), pool.end(), [&](const auto& a, const auto& b) {
        const double sa = normalized_score(a.first, cfg.length_penalty);
        const double sb = normalized_score(b.first, cfg.length_penalty);
        if (sa != sb) return sa > sb;
        return lex_less(a.first.tokens, b.first.tokens);
    });

    GenerationResult out;
    out.tokens = pool.front().first.tokens;
    out.truncated = pool.front().second;
    out.score = normalized_score(pool.front().first, cfg.length_penalty);
    return out;
}

}  // namespace sluekit
