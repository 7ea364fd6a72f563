#include "sluekit/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sluekit {

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(Mat value, std::vector<NodePtr> parents, std::function<void(TensorNode&)> fn) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    n->backward_fn = std::move(fn);
    n->requires_grad = false;
    for (const auto& p : n->parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    if (!n->requires_grad) n->backward_fn = nullptr;
    return n;
}

Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }

void check(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("tensor: " + msg);
}

}  // namespace

Tensor::Tensor(Mat v, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
    node_->value = std::move(v);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    Mat m(1, 1);
    m(0, 0) = v;
    return Tensor(m, requires_grad);
}

double Tensor::item() const {
    check(rows() == 1 && cols() == 1, "item() on non-scalar");
    return node_->value(0, 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.cols() == b.rows(), "matmul shape mismatch");
    auto an = a.node(), bn = b.node();
    return wrap(make_node(an->value * bn->value, {an, bn}, [an, bn](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad.noalias() += out.grad * bn->value.transpose();
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad.noalias() += an->value.transpose() * out.grad;
        }
    }));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    check(a.cols() == b.cols(), "matmul_nt shape mismatch");
    auto an = a.node(), bn = b.node();
    return wrap(make_node(an->value * bn->value.transpose(), {an, bn}, [an, bn](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad.noalias() += out.grad * bn->value;
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad.noalias() += out.grad.transpose() * an->value;
        }
    }));
}

Tensor add(const Tensor& a, const Tensor& b) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "add shape mismatch");
    auto an = a.node(), bn = b.node();
    return wrap(make_node(an->value + bn->value, {an, bn}, [an, bn](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad += out.grad;
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad += out.grad;
        }
    }));
}

Tensor add_rowvec(const Tensor& a, const Tensor& row) {
    check(row.rows() == 1 && row.cols() == a.cols(), "add_rowvec shape mismatch");
    auto an = a.node(), rn = row.node();
    Mat v = an->value;
    v.rowwise() += Eigen::RowVectorXd(rn->value.row(0));
    return wrap(make_node(std::move(v), {an, rn}, [an, rn](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad += out.grad;
        }
        if (rn->requires_grad) {
            rn->ensure_grad();
            rn->grad.row(0) += out.grad.colwise().sum();
        }
    }));
}

Tensor add_const(const Tensor& a, const Mat& c) {
    check(a.rows() == c.rows() && a.cols() == c.cols(), "add_const shape mismatch");
    auto an = a.node();
    return wrap(make_node(an->value + c, {an}, [an](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad += out.grad;
        }
    }));
}

Tensor scale(const Tensor& a, double s) {
    auto an = a.node();
    return wrap(make_node(an->value * s, {an}, [an, s](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad += out.grad * s;
        }
    }));
}

Tensor add_scaled(const Tensor& a, double sa, const Tensor& b, double sb) {
    check(a.rows() == b.rows() && a.cols() == b.cols(), "add_scaled shape mismatch");
    auto an = a.node(), bn = b.node();
    return wrap(make_node(sa * an->value + sb * bn->value, {an, bn}, [an, bn, sa, sb](TensorNode& out) {
        if (an->requires_grad) {
            an->ensure_grad();
            an->grad += out.grad * sa;
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad += out.grad * sb;
        }
    }));
}

Tensor relu(const Tensor& a) {
    auto an = a.node();
    Mat v = an->value.cwiseMax(0.0);
    return wrap(make_node(std::move(v), {an}, [an](TensorNode& out) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad += (an->value.array() > 0.0).cast<double>().matrix().cwiseProduct(out.grad);
    }));
}

Tensor softmax_rows(const Tensor& a) {
    auto an = a.node();
    Mat y(an->value.rows(), an->value.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        Eigen::RowVectorXd r = an->value.row(i);
        double m = r.maxCoeff();
        Eigen::RowVectorXd e = (r.array() - m).exp();
        y.row(i) = e / e.sum();
    }
    Mat ycopy = y;
    return wrap(make_node(std::move(y), {an}, [an, ycopy](TensorNode& out) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (Eigen::Index i = 0; i < ycopy.rows(); ++i) {
            Eigen::RowVectorXd yi = ycopy.row(i);
            Eigen::RowVectorXd gi = out.grad.row(i);
            double dot = gi.cwiseProduct(yi).sum();
            an->grad.row(i) += (gi.array() - dot).matrix().cwiseProduct(yi);
        }
    }));
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    const auto d = x.cols();
    check(gain.rows() == 1 && gain.cols() == d, "layer_norm gain shape");
    check(bias.rows() == 1 && bias.cols() == d, "layer_norm bias shape");
    auto xn = x.node(), gn = gain.node(), bn = bias.node();

    const Eigen::Index L = xn->value.rows();
    Mat xhat(L, d);
    Eigen::VectorXd inv_std(L);
    for (Eigen::Index i = 0; i < L; ++i) {
        double mu = xn->value.row(i).mean();
        Eigen::RowVectorXd centered = xn->value.row(i).array() - mu;
        double var = centered.squaredNorm() / static_cast<double>(d);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std(i) = is;
        xhat.row(i) = centered * is;
    }
    Mat y = xhat.array().rowwise() * gn->value.row(0).array();
    y.rowwise() += Eigen::RowVectorXd(bn->value.row(0));

    return wrap(make_node(std::move(y), {xn, gn, bn}, [xn, gn, bn, xhat, inv_std, d](TensorNode& out) {
        const Eigen::Index L = xhat.rows();
        if (gn->requires_grad) {
            gn->ensure_grad();
            gn->grad.row(0) += out.grad.cwiseProduct(xhat).colwise().sum();
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            bn->grad.row(0) += out.grad.colwise().sum();
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            const double dd = static_cast<double>(d);
            for (Eigen::Index i = 0; i < L; ++i) {
                Eigen::RowVectorXd dxhat = out.grad.row(i).cwiseProduct(gn->value.row(0));
                double sum_dxhat = dxhat.sum();
                double sum_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).sum();
                xn->grad.row(i) += inv_std(i) / dd *
                                   (dd * dxhat.array() - sum_dxhat - xhat.row(i).array() * sum_dxhat_xhat)
                                       .matrix();
            }
        }
    }));
}

Tensor adaptive_avg_pool_rows(const Tensor& x, int out_len) {
    check(out_len >= 1, "adaptive_avg_pool out_len must be >= 1");
    check(x.rows() >= 1, "adaptive_avg_pool needs at least one row");
    auto xn = x.node();
    const Eigen::Index t = xn->value.rows();
    Mat y(out_len, xn->value.cols());
    for (int i = 0; i < out_len; ++i) {
        Eigen::Index lo, hi;
        adaptive_pool_window(t, out_len, i, lo, hi);
        y.row(i) = xn->value.middleRows(lo, hi - lo).colwise().mean();
    }
    return wrap(make_node(std::move(y), {xn}, [xn, out_len, t](TensorNode& out) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < out_len; ++i) {
            Eigen::Index lo, hi;
            adaptive_pool_window(t, out_len, i, lo, hi);
            const double inv = 1.0 / static_cast<double>(hi - lo);
            for (Eigen::Index r = lo; r < hi; ++r) {
                xn->grad.row(r) += out.grad.row(i) * inv;
            }
        }
    }));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_rows of nothing");
    Eigen::Index total = 0;
    const Eigen::Index c = parts.front().cols();
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        check(p.cols() == c, "concat_rows column mismatch");
        total += p.rows();
        nodes.push_back(p.node());
    }
    Mat v(total, c);
    Eigen::Index at = 0;
    for (const auto& n : nodes) {
        v.middleRows(at, n->value.rows()) = n->value;
        at += n->value.rows();
    }
    return wrap(make_node(std::move(v), nodes, [nodes](TensorNode& out) {
        Eigen::Index at = 0;
        for (const auto& n : nodes) {
            if (n->requires_grad) {
                n->ensure_grad();
                n->grad += out.grad.middleRows(at, n->value.rows());
            }
            at += n->value.rows();
        }
    }));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    check(!parts.empty(), "concat_cols of nothing");
    Eigen::Index total = 0;
    const Eigen::Index r = parts.front().rows();
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        check(p.rows() == r, "concat_cols row mismatch");
        total += p.cols();
        nodes.push_back(p.node());
    }
    Mat v(r, total);
    Eigen::Index at = 0;
    for (const auto& n : nodes) {
        v.middleCols(at, n->value.cols()) = n->value;
        at += n->value.cols();
    }
    return wrap(make_node(std::move(v), nodes, [nodes](TensorNode& out) {
        Eigen::Index at = 0;
        for (const auto& n : nodes) {
            if (n->requires_grad) {
                n->ensure_grad();
                n->grad += out.grad.middleCols(at, n->value.cols());
            }
            at += n->value.cols();
        }
    }));
}

Tensor slice_cols(const Tensor& a, int begin, int len) {
    check(begin >= 0 && len >= 1 && begin + len <= a.cols(), "slice_cols out of range");
    auto an = a.node();
    return wrap(make_node(an->value.middleCols(begin, len), {an}, [an, begin, len](TensorNode& out) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad.middleCols(begin, len) += out.grad;
    }));
}

Tensor slice_rows(const Tensor& a, int begin, int len) {
    check(begin >= 0 && len >= 1 && begin + len <= a.rows(), "slice_rows out of range");
    auto an = a.node();
    return wrap(make_node(an->value.middleRows(begin, len), {an}, [an, begin, len](TensorNode& out) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad.middleRows(begin, len) += out.grad;
    }));
}

Tensor rows_gather(const Tensor& table, const std::vector<int>& ids) {
    auto tn = table.node();
    Mat v(static_cast<Eigen::Index>(ids.size()), tn->value.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        check(ids[i] >= 0 && ids[i] < tn->value.rows(), "rows_gather id out of range");
        v.row(static_cast<Eigen::Index>(i)) = tn->value.row(ids[i]);
    }
    return wrap(make_node(std::move(v), {tn}, [tn, ids](TensorNode& out) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            tn->grad.row(ids[i]) += out.grad.row(static_cast<Eigen::Index>(i));
        }
    }));
}

Tensor mean_all(const Tensor& a) {
    auto an = a.node();
    Mat v(1, 1);
    v(0, 0) = an->value.mean();
    const double inv = 1.0 / static_cast<double>(an->value.size());
    return wrap(make_node(std::move(v), {an}, [an, inv](TensorNode& out) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        an->grad.array() += out.grad(0, 0) * inv;
    }));
}

Tensor conv2d(const Tensor& x, int c_in, int h, int w, const Tensor& weight, const Tensor& bias,
              int c_out, int kh, int kw, int stride, int pad) {
    check(x.rows() == static_cast<Eigen::Index>(c_in) * h && x.cols() == w, "conv2d input shape");
    check(weight.rows() == c_out && weight.cols() == static_cast<Eigen::Index>(c_in) * kh * kw,
          "conv2d weight shape");
    check(bias.rows() == 1 && bias.cols() == c_out, "conv2d bias shape");
    check(stride >= 1, "conv2d stride");
    const int h_out = (h + 2 * pad - kh) / stride + 1;
    const int w_out = (w + 2 * pad - kw) / stride + 1;
    check(h_out >= 1 && w_out >= 1, "conv2d output collapses to zero");

    auto xn = x.node(), wn = weight.node(), bn = bias.node();
    Mat y = Mat::Zero(static_cast<Eigen::Index>(c_out) * h_out, w_out);
    for (int co = 0; co < c_out; ++co) {
        for (int oi = 0; oi < h_out; ++oi) {
            for (int oj = 0; oj < w_out; ++oj) {
                double acc = bn->value(0, co);
                for (int ci = 0; ci < c_in; ++ci) {
                    for (int ki = 0; ki < kh; ++ki) {
                        const int ii = oi * stride + ki - pad;
                        if (ii < 0 || ii >= h) continue;
                        for (int kj = 0; kj < kw; ++kj) {
                            const int jj = oj * stride + kj - pad;
                            if (jj < 0 || jj >= w) continue;
                            acc += xn->value(ci * h + ii, jj) *
                                   wn->value(co, (ci * kh + ki) * kw + kj);
                        }
                    }
                }
                y(co * h_out + oi, oj) = acc;
            }
        }
    }
    return wrap(make_node(std::move(y), {xn, wn, bn},
                          [xn, wn, bn, c_in, h, w, c_out, kh, kw, stride, pad, h_out, w_out](TensorNode& out) {
        if (bn->requires_grad) bn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        for (int co = 0; co < c_out; ++co) {
            for (int oi = 0; oi < h_out; ++oi) {
                for (int oj = 0; oj < w_out; ++oj) {
                    const double g = out.grad(co * h_out + oi, oj);
                    if (g == 0.0) continue;
                    if (bn->requires_grad) bn->grad(0, co) += g;
                    for (int ci = 0; ci < c_in; ++ci) {
                        for (int ki = 0; ki < kh; ++ki) {
                            const int ii = oi * stride + ki - pad;
                            if (ii < 0 || ii >= h) continue;
                            for (int kj = 0; kj < kw; ++kj) {
                                const int jj = oj * stride + kj - pad;
                                if (jj < 0 || jj >= w) continue;
                                if (wn->requires_grad) {
                                    wn->grad(co, (ci * kh + ki) * kw + kj) += g * xn->value(ci * h + ii, jj);
                                }
                                if (xn->requires_grad) {
                                    xn->grad(ci * h + ii, jj) += g * wn->value(co, (ci * kh + ki) * kw + kj);
                                }
                            }
                        }
                    }
                }
            }
        }
    }));
}

Tensor global_avg_pool_2d(const Tensor& x, int c, int h, int w) {
    check(x.rows() == static_cast<Eigen::Index>(c) * h && x.cols() == w, "global_avg_pool_2d shape");
    auto xn = x.node();
    Mat v(1, c);
    for (int ci = 0; ci < c; ++ci) {
        v(0, ci) = xn->value.middleRows(static_cast<Eigen::Index>(ci) * h, h).mean();
    }
    const double inv = 1.0 / (static_cast<double>(h) * w);
    return wrap(make_node(std::move(v), {xn}, [xn, c, h, inv](TensorNode& out) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int ci = 0; ci < c; ++ci) {
            xn->grad.middleRows(static_cast<Eigen::Index>(ci) * h, h).array() += out.grad(0, ci) * inv;
        }
    }));
}

Tensor masked_cross_entropy(const Tensor& logits, const std::vector<int>& next_ids) {
    check(static_cast<Eigen::Index>(next_ids.size()) == logits.rows(), "masked_cross_entropy length");
    auto ln = logits.node();
    int n = 0;
    double total = 0.0;
    Mat probs(ln->value.rows(), ln->value.cols());
    for (Eigen::Index i = 0; i < ln->value.rows(); ++i) {
        if (next_ids[static_cast<size_t>(i)] < 0) continue;
        const int t = next_ids[static_cast<size_t>(i)];
        check(t < ln->value.cols(), "masked_cross_entropy target out of vocab");
        Eigen::RowVectorXd r = ln->value.row(i);
        double m = r.maxCoeff();
        Eigen::RowVectorXd e = (r.array() - m).exp();
        double z = e.sum();
        probs.row(i) = e / z;
        total += std::log(z) + m - r(t);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("masked_cross_entropy: empty loss mask");
    Mat v(1, 1);
    v(0, 0) = total / n;
    return wrap(make_node(std::move(v), {ln}, [ln, next_ids, probs, n](TensorNode& out) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = out.grad(0, 0) / n;
        for (Eigen::Index i = 0; i < ln->value.rows(); ++i) {
            const int t = next_ids[static_cast<size_t>(i)];
            if (t < 0) continue;
            ln->grad.row(i) += g * probs.row(i);
            ln->grad(i, t) -= g;
        }
    }));
}

Tensor bce_with_logits(const Tensor& logits, const Mat& targets, const Mat& weights) {
    check(logits.rows() == 1, "bce_with_logits expects a 1xC row");
    check(targets.rows() == 1 && targets.cols() == logits.cols(), "bce targets shape");
    check(weights.rows() == 1 && weights.cols() == logits.cols(), "bce weights shape");
    auto ln = logits.node();
    if (!ln->value.allFinite()) throw std::invalid_argument("bce_with_logits: non-finite logits");
    const Eigen::Index c = logits.cols();
    double total = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
        const double x = ln->value(0, k);
        const double y = targets(0, k);
        // max(x,0) - x*y + log(1 + exp(-|x|)), the stable logit form
        total += weights(0, k) * (std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x))));
    }
    Mat v(1, 1);
    v(0, 0) = total / static_cast<double>(c);
    return wrap(make_node(std::move(v), {ln}, [ln, targets, weights, c](TensorNode& out) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = out.grad(0, 0) / static_cast<double>(c);
        for (Eigen::Index k = 0; k < c; ++k) {
            const double x = ln->value(0, k);
            const double sig = 1.0 / (1.0 + std::exp(-x));
            ln->grad(0, k) += g * weights(0, k) * (sig - targets(0, k));
        }
    }));
}

Tensor softmax_cross_entropy(const Tensor& logits, int target) {
    check(logits.rows() == 1, "softmax_cross_entropy expects a 1xC row");
    check(target >= 0 && target < logits.cols(), "softmax_cross_entropy target out of range");
    auto ln = logits.node();
    if (!ln->value.allFinite()) throw std::invalid_argument("softmax_cross_entropy: non-finite logits");
    Eigen::RowVectorXd r = ln->value.row(0);
    double m = r.maxCoeff();
    Eigen::RowVectorXd e = (r.array() - m).exp();
    double z = e.sum();
    Eigen::RowVectorXd p = e / z;
    Mat v(1, 1);
    v(0, 0) = std::log(z) + m - r(target);
    return wrap(make_node(std::move(v), {ln}, [ln, p, target](TensorNode& out) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        const double g = out.grad(0, 0);
        ln->grad.row(0) += g * p;
        ln->grad(0, target) -= g;
    }));
}

void backward(const Tensor& root) {
    if (!(root.rows() == 1 && root.cols() == 1)) {
        throw std::invalid_argument("backward: root must be a 1x1 scalar");
    }
    // Iterative DFS for the reverse topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (!seen.count(p) && (p->requires_grad || p->backward_fn)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (TensorNode* n : order) {
        n->grad = Mat::Zero(n->value.rows(), n->value.cols());
    }
    root.node()->grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

}  // namespace sluekit
