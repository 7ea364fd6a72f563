#pragma once

#include <Eigen/Dense>

#include <vector>

namespace sluekit {

struct DecodeConfig {
    int beam = 5;
    double temperature = 1.0;        // logits are divided by this
    double repetition_penalty = 2.0; // 1.0 disables
    double length_penalty = 0.5;     // score = logprob_sum / len^length_penalty
    int max_new_tokens = 64;

    void validate() const;  // throws on out-of-range values
};

// Anything that can score the next token given what was generated so far.
// Implemented by the speech-LLM decoder and by hand-built toy models in tests.
struct ScoringModel {
    virtual ~ScoringModel() = default;
    virtual int vocab_size() const = 0;
    virtual int eos_id() const = 0;
    virtual Eigen::RowVectorXd next_logits(const std::vector<int>& generated) = 0;
};

struct GenerationResult {
    std::vector<int> tokens;  // includes the terminating EOS when present
    bool truncated = false;   // ran into max_new_tokens without EOS
    double score = 0.0;       // logprob_sum / len^length_penalty
};

// Deterministic beam search. Repetition penalty rescales the logits of
// already-generated tokens (positive ones divided, non-positive multiplied);
// finished hypotheses are ranked by length-normalized log-probability with
// ties broken toward the lexicographically smaller token sequence.
GenerationResult generate(ScoringModel& model, const DecodeConfig& cfg);

}  // namespace sluekit
