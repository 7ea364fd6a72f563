#include "sluekit/tensor.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace sluekit;
using sluekit::testing::grad_check;
using sluekit::testing::random_mat;

TEST_SUITE("tensor") {

TEST_CASE("matmul forward and gradient") {
    Rng rng(1);
    Tensor a = Tensor::param(random_mat(3, 4, rng));
    Tensor b = Tensor::param(random_mat(4, 5, rng));
    auto fwd = [&] { return mean_all(relu(matmul(a, b))); };
    auto res = grad_check({a, b}, fwd, 8, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("matmul_nt equals matmul with transpose") {
    Rng rng(2);
    Mat a = random_mat(3, 4, rng), b = random_mat(5, 4, rng);
    Tensor ta = Tensor::constant(a), tb = Tensor::constant(b);
    CHECK((matmul_nt(ta, tb).value() - a * b.transpose()).norm() == doctest::Approx(0.0));
}

TEST_CASE("softmax rows sums to one and grad checks") {
    Rng rng(3);
    Tensor x = Tensor::param(random_mat(4, 6, rng, 2.0));
    Tensor y = softmax_rows(x);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        CHECK(y.value().row(i).sum() == doctest::Approx(1.0));
    }
    Tensor w = Tensor::constant(random_mat(6, 1, rng));
    auto fwd = [&] { return mean_all(matmul(softmax_rows(x), w)); };
    auto res = grad_check({x}, fwd, 12, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("layer norm rows: unit stats and reference formula") {
    Rng rng(4);
    const int d = 16;
    Mat x = random_mat(5, d, rng, 3.0);
    Tensor gain = Tensor::param(Mat::Ones(1, d));
    Tensor bias = Tensor::param(Mat::Zero(1, d));
    Tensor y = layer_norm_rows(Tensor::constant(x), gain, bias, 1e-5);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        CHECK(std::abs(y.value().row(i).mean()) < 1e-9);
        const double var = (y.value().row(i).array() - y.value().row(i).mean()).square().mean();
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
    // Straightforward two-pass reference.
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
        var /= d;
        for (int j = 0; j < d; ++j) {
            const double ref = (x(i, j) - mu) / std::sqrt(var + 1e-5);
            CHECK(std::abs(y.value()(i, j) - ref) < 1e-10);
        }
    }
}

TEST_CASE("layer norm gradient") {
    Rng rng(5);
    Tensor x = Tensor::param(random_mat(3, 8, rng));
    Tensor gain = Tensor::param(random_mat(1, 8, rng));
    Tensor bias = Tensor::param(random_mat(1, 8, rng));
    Tensor w = Tensor::constant(random_mat(8, 1, rng));
    auto fwd = [&] { return mean_all(matmul(layer_norm_rows(x, gain, bias, 1e-5), w)); };
    auto res = grad_check({x, gain, bias}, fwd, 10, rng);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("adaptive pooling: windows, linearity, gradient") {
    // [1..5] pooled to 2: windows [0,3) and [2,5).
    Mat col(5, 1);
    col << 1, 2, 3, 4, 5;
    Tensor pooled = adaptive_avg_pool_rows(Tensor::constant(col), 2);
    CHECK(pooled.value()(0, 0) == doctest::Approx(2.0));
    CHECK(pooled.value()(1, 0) == doctest::Approx(4.0));

    Rng rng(6);
    Mat a = random_mat(7, 3, rng), b = random_mat(7, 3, rng);
    Mat lhs = adaptive_avg_pool_rows(Tensor::constant(2.0 * a + 3.0 * b), 4).value();
    Mat rhs = 2.0 * adaptive_avg_pool_rows(Tensor::constant(a), 4).value() +
              3.0 * adaptive_avg_pool_rows(Tensor::constant(b), 4).value();
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);

    Tensor x = Tensor::param(random_mat(9, 4, rng));
    Tensor w = Tensor::constant(random_mat(4, 1, rng));
    auto fwd = [&] { return mean_all(matmul(adaptive_avg_pool_rows(x, 3), w)); };
    auto res = grad_check({x}, fwd, 12, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("concat and slice gradients") {
    Rng rng(7);
    Tensor a = Tensor::param(random_mat(2, 3, rng));
    Tensor b = Tensor::param(random_mat(4, 3, rng));
    Tensor c = Tensor::param(random_mat(6, 2, rng));
    auto fwd = [&] {
        Tensor cat = concat_rows({a, b});
        Tensor joined = concat_cols({cat, c});
        return mean_all(relu(slice_cols(joined, 1, 3)));
    };
    auto res = grad_check({a, b, c}, fwd, 6, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("rows_gather gradient accumulates over repeated ids") {
    Rng rng(8);
    Tensor table = Tensor::param(random_mat(5, 3, rng));
    const std::vector<int> ids = {2, 2, 0, 4};
    auto fwd = [&] { return mean_all(rows_gather(table, ids)); };
    Tensor loss = fwd();
    backward(loss);
    CHECK(table.grad()(2, 0) == doctest::Approx(2.0 / 12.0));
    CHECK(table.grad()(1, 0) == doctest::Approx(0.0));
    auto res = grad_check({table}, fwd, 10, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("conv2d gradient") {
    Rng rng(9);
    const int c_in = 2, h = 6, w = 5, c_out = 3;
    Tensor x = Tensor::param(random_mat(c_in * h, w, rng));
    Tensor weight = Tensor::param(random_mat(c_out, c_in * 9, rng));
    Tensor bias = Tensor::param(random_mat(1, c_out, rng));
    auto fwd = [&] {
        Tensor y = conv2d(x, c_in, h, w, weight, bias, c_out, 3, 3, 2, 1);
        return mean_all(relu(y));
    };
    auto res = grad_check({x, weight, bias}, fwd, 10, rng);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("global average pool gradient") {
    Rng rng(10);
    Tensor x = Tensor::param(random_mat(6, 4, rng));  // 3 channels of 2x4
    Tensor w = Tensor::constant(random_mat(3, 1, rng));
    auto fwd = [&] { return mean_all(matmul(global_avg_pool_2d(x, 3, 2, 4), w)); };
    auto res = grad_check({x}, fwd, 10, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("masked cross entropy: closed-form gradient is softmax minus onehot") {
    Rng rng(11);
    Tensor logits = Tensor::param(random_mat(4, 6, rng, 2.0));
    const std::vector<int> next_ids = {-1, 3, -1, 1};
    Tensor loss = masked_cross_entropy(logits, next_ids);
    backward(loss);
    for (Eigen::Index i = 0; i < 4; ++i) {
        Eigen::RowVectorXd r = logits.value().row(i);
        const double m = r.maxCoeff();
        Eigen::RowVectorXd p = (r.array() - m).exp();
        p /= p.sum();
        for (int j = 0; j < 6; ++j) {
            double expect = 0.0;
            if (next_ids[static_cast<size_t>(i)] >= 0) {
                expect = (p(j) - (next_ids[static_cast<size_t>(i)] == j ? 1.0 : 0.0)) / 2.0;
            }
            CHECK(std::abs(logits.grad()(i, j) - expect) < 1e-10);
        }
    }
    CHECK_THROWS(masked_cross_entropy(logits, std::vector<int>(4, -1)));
}

TEST_CASE("bce with logits at zero is ln 2 per class") {
    Tensor logits = Tensor::param(Mat::Zero(1, 7));
    Tensor loss = bce_with_logits(logits, Mat::Zero(1, 7), Mat::Ones(1, 7));
    CHECK(loss.item() == doctest::Approx(std::log(2.0)));
    Rng rng(12);
    Tensor l2 = Tensor::param(random_mat(1, 5, rng, 2.0));
    Mat targets(1, 5);
    targets << 1, 0, 1, 0, 1;
    Mat weights(1, 5);
    weights << 1.0, 2.0, 0.5, 3.0, 1.0;
    auto fwd = [&] { return bce_with_logits(l2, targets, weights); };
    auto res = grad_check({l2}, fwd, 5, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("softmax cross entropy gradient") {
    Rng rng(13);
    Tensor logits = Tensor::param(random_mat(1, 4, rng, 2.0));
    auto fwd = [&] { return softmax_cross_entropy(logits, 2); };
    auto res = grad_check({logits}, fwd, 4, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("repeated backward over one graph is exact") {
    Rng rng(14);
    Tensor x = Tensor::param(random_mat(3, 3, rng));
    Tensor loss = mean_all(relu(matmul(x, x)));
    backward(loss);
    Mat first = x.grad();
    backward(loss);
    CHECK((x.grad() - first).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

}  // TEST_SUITE
