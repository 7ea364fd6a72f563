#include "sluekit/classifier.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

using namespace sluekit;
using sluekit::testing::grad_check;
using sluekit::testing::random_mat;

TEST_SUITE("classifier") {

TEST_CASE("ner targets mark class presence") {
    TaggedTranscript empty{"nothing here", {}};
    CHECK(ner_targets(empty).ner_presence.sum() == 0.0);

    TaggedTranscript t{"john met john in paris",
                       {{EntityTag::Person, "john", 0},
                        {EntityTag::Person, "john", 1},
                        {EntityTag::Place, "paris", 2}}};
    const auto targets = ner_targets(t);
    CHECK(targets.ner_presence(0, static_cast<int>(EntityTag::Person)) == 1.0);
    CHECK(targets.ner_presence(0, static_cast<int>(EntityTag::Place)) == 1.0);
    CHECK(targets.ner_presence.sum() == 2.0);
}

TEST_CASE("ner targets agree with a set-membership oracle on random transcripts") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = sluekit::testing::random_tagged(rng);
        const auto targets = ner_targets(t);
        std::set<int> tags;
        for (const auto& span : t.spans) tags.insert(static_cast<int>(span.tag));
        for (int k = 0; k < kNumEntityTags; ++k) {
            CHECK(targets.ner_presence(0, k) == (tags.count(k) ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("pos_weights reproduce the published train-row arithmetic") {
    const std::map<EntityTag, long long> counts = {
        {EntityTag::Person, 122526}, {EntityTag::Place, 37283}, {EntityTag::When, 16846},
        {EntityTag::Norp, 13254},    {EntityTag::Org, 2981},    {EntityTag::Quant, 2775},
        {EntityTag::Law, 2104}};
    const Mat w = pos_weights(counts);
    CHECK(w(0, static_cast<int>(EntityTag::Person)) == doctest::Approx(1.614).epsilon(1e-3));
    CHECK(w(0, static_cast<int>(EntityTag::Law)) == doctest::Approx(94.00).epsilon(1e-4));

    std::map<EntityTag, long long> uniform;
    for (EntityTag t : all_entity_tags()) uniform[t] = 10;
    CHECK((pos_weights(uniform).array() - 7.0).abs().maxCoeff() < 1e-12);

    std::map<EntityTag, long long> zero = uniform;
    zero[EntityTag::Law] = 0;
    CHECK_THROWS(pos_weights(zero));
}

TEST_CASE("classifier forward: shape contract and zero-input logits") {
    ClassifierConfig cfg{ClassifierTask::Ner, 16, 24};
    auto params = ClassifierParams::init(cfg, 3);
    Rng rng(3);
    Tensor x = Tensor::constant(random_mat(16, 24, rng));
    Tensor logits = classifier_forward(x, params, cfg);
    CHECK(logits.rows() == 1);
    CHECK(logits.cols() == 7);

    // Zero input with zero biases stays zero through conv+ReLU stacks.
    Tensor zeros = Tensor::constant(Mat::Zero(16, 24));
    Tensor zl = classifier_forward(zeros, params, cfg);
    CHECK(zl.value().cwiseAbs().maxCoeff() == 0.0);

    ClassifierConfig sa_cfg{ClassifierTask::Sa, 16, 24};
    auto sa_params = ClassifierParams::init(sa_cfg, 4);
    CHECK(classifier_forward(x, sa_params, sa_cfg).cols() == 3);
    CHECK_THROWS(classifier_forward(Tensor::constant(Mat::Zero(8, 24)), params, cfg));
}

TEST_CASE("classifier gradient matches finite differences on 100+ parameters") {
    ClassifierConfig cfg{ClassifierTask::Ner, 8, 12};
    auto params = ClassifierParams::init(cfg, 9);
    Rng rng(9);
    Tensor x = Tensor::param(random_mat(8, 12, rng));
    Mat targets = Mat::Zero(1, 7);
    targets(0, 1) = 1.0;
    targets(0, 4) = 1.0;
    Mat weights = Mat::Ones(1, 7) * 1.5;
    auto fwd = [&] {
        Tensor logits = classifier_forward(x, params, cfg);
        return bce_with_logits(logits, targets, weights);
    };
    std::vector<Tensor> tensors = {x, params.head_w, params.head_b};
    for (const auto& conv : params.conv) {
        tensors.push_back(conv.w);
        tensors.push_back(conv.b);
    }
    auto res = grad_check(tensors, fwd, 13, rng);
    CHECK(res.checked >= 100);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("classifier losses: closed forms") {
    // NER at zero logits, zero targets, unit weights: ln 2 mean.
    Tensor zeros = Tensor::param(Mat::Zero(1, 7));
    ClassTargets t;
    t.task = ClassifierTask::Ner;
    t.ner_presence = Mat::Zero(1, 7);
    CHECK(classifier_loss(zeros, t, Mat::Ones(1, 7)).item() == doctest::Approx(std::log(2.0)));

    // SA with a 20-logit margin is effectively zero loss.
    Mat confident = Mat::Zero(1, 3);
    confident(0, 2) = 20.0;
    CHECK(classifier_loss(Tensor::param(confident), sa_targets(Sentiment::Neutral), std::nullopt)
              .item() <= 1e-8);

    // Doubling one class weight doubles exactly that class's contribution.
    Rng rng(21);
    Tensor logits = Tensor::param(random_mat(1, 7, rng, 2.0));
    Mat target = Mat::Zero(1, 7);
    target(0, 3) = 1.0;
    ClassTargets ct;
    ct.task = ClassifierTask::Ner;
    ct.ner_presence = target;
    Mat w1 = Mat::Ones(1, 7);
    Mat w2 = w1;
    w2(0, 3) = 2.0;
    const double base = classifier_loss(logits, ct, w1).item();
    const double boosted = classifier_loss(logits, ct, w2).item();
    const double x3 = logits.value()(0, 3);
    const double contrib3 = (std::max(x3, 0.0) - x3 * 1.0 + std::log1p(std::exp(-std::abs(x3)))) / 7.0;
    CHECK(boosted - base == doctest::Approx(contrib3).epsilon(1e-10));

    // Weighted BCE with unit weights equals unweighted.
    ClassTargets zt;
    zt.task = ClassifierTask::Ner;
    zt.ner_presence = Mat::Zero(1, 7);
    const double weighted = classifier_loss(logits, zt, Mat::Ones(1, 7)).item();
    const double unweighted = bce_with_logits(logits, Mat::Zero(1, 7), Mat::Ones(1, 7)).item();
    CHECK(std::abs(weighted - unweighted) < 1e-12);

    // Weight rules per task.
    CHECK_THROWS(classifier_loss(zeros, t, std::nullopt));
    CHECK_THROWS(classifier_loss(Tensor::param(confident), sa_targets(Sentiment::Neutral),
                                 Mat::Ones(1, 3)));
}

TEST_CASE("mix loss follows the mixing equation exactly") {
    Tensor llm = Tensor::scalar(2.0, true);
    Tensor cls = Tensor::scalar(0.5, true);
    CHECK(mix_loss(llm, cls, {0.0}).item() == doctest::Approx(2.0));
    CHECK(mix_loss(llm, cls, {1.0}).item() == doctest::Approx(0.5));
    CHECK(mix_loss(llm, cls, {0.2}).item() == doctest::Approx(1.7));
    CHECK_THROWS(mix_loss(llm, cls, {1.5}));

    // d(total)/d(llm) = 1-alpha and d(total)/d(cls) = alpha, exactly.
    for (double alpha : {0.0, 0.2, 1.0}) {
        Tensor total = mix_loss(llm, cls, {alpha});
        backward(total);
        CHECK(std::abs(llm.grad()(0, 0) - (1.0 - alpha)) <= 1e-12);
        CHECK(std::abs(cls.grad()(0, 0) - alpha) <= 1e-12);
    }

    // Affine in alpha: d(total)/d(alpha) == cls - llm.
    const double f0 = mix_loss(llm, cls, {0.3}).item();
    const double f1 = mix_loss(llm, cls, {0.3001}).item();
    CHECK((f1 - f0) / 0.0001 == doctest::Approx(0.5 - 2.0).epsilon(1e-6));
}

}  // TEST_SUITE
