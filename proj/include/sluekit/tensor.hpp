#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace sluekit {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over dense 2-D matrices. A Tensor is a cheap handle
// onto a graph node; ops build the graph, backward() walks it once in
// reverse topological order. Vectors are 1xD rows, scalars are 1x1.
struct TensorNode {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Mat::Zero(value.rows(), value.cols());
        }
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Mat v, bool requires_grad = false);
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor param(Mat v) { return Tensor(std::move(v), true); }
    static Tensor constant(Mat v) { return Tensor(std::move(v), false); }
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Mat& value() const { return node_->value; }
    Mat& value() { return node_->value; }
    const Mat& grad() const { return node_->grad; }
    Mat& grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double item() const;

    void zero_grad() { node_->grad = Mat::Zero(node_->value.rows(), node_->value.cols()); }

    std::shared_ptr<TensorNode> node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// Core ops.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& row);  // row broadcast over rows of a
Tensor add_const(const Tensor& a, const Mat& c);
Tensor scale(const Tensor& a, double s);
Tensor add_scaled(const Tensor& a, double sa, const Tensor& b, double sb);
Tensor relu(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor adaptive_avg_pool_rows(const Tensor& x, int out_len);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int begin, int len);
Tensor slice_rows(const Tensor& a, int begin, int len);
Tensor rows_gather(const Tensor& table, const std::vector<int>& ids);
Tensor mean_all(const Tensor& a);

// 2-D convolution over channel-packed maps. Input is (c_in*h) x w with row
// index c*h + i; weight is c_out x (c_in*kh*kw); bias is 1 x c_out.
Tensor conv2d(const Tensor& x, int c_in, int h, int w, const Tensor& weight, const Tensor& bias,
              int c_out, int kh, int kw, int stride, int pad);
Tensor global_avg_pool_2d(const Tensor& x, int c, int h, int w);

// Losses (scalar outputs).
// next_ids[p] is the token the row-p logits should predict, or -1 when the
// position does not contribute; the loss is the mean over contributing rows.
Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& next_ids);
Tensor bce_with_logits(const Tensor& logits, const Mat& targets, const Mat& weights);
Tensor softmax_cross_entropy(const Tensor& logits, int target);

// Runs one reverse pass from a 1x1 root. Grads of every node reachable from
// the root are reset first, so repeated calls on the same graph are exact.
void backward(const Tensor& root);

// Pool window i over t input rows: [floor(i*t/out), ceil((i+1)*t/out)).
// Shared by the graph op and the plain inference path.
inline void adaptive_pool_window(Eigen::Index t, int out_len, int i, Eigen::Index& lo,
                                 Eigen::Index& hi) {
    lo = static_cast<Eigen::Index>((static_cast<long long>(i) * t) / out_len);
    const long long num = static_cast<long long>(i + 1) * t;
    hi = static_cast<Eigen::Index>(num / out_len + (num % out_len != 0 ? 1 : 0));
}

}  // namespace sluekit
