#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace splade::ad {

using Mat = Eigen::MatrixXd;

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Operations record a closure that
// scatters the output gradient into the input gradients; backward() replays
// them newest-first. Single-threaded by construction, so gradient
// accumulation order is fixed and runs are reproducible.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Mat value, bool requires_grad = false);
    Var constant(Mat value) { return leaf(std::move(value), false); }

    Var matmul(Var a, Var b);     // A B
    Var matmul_nt(Var a, Var b);  // A Bᵀ
    Var add(Var a, Var b);
    Var add_rowvec(Var a, Var row);  // broadcast a 1 x cols row over every row of a
    Var scale(Var a, double s);
    // Elementwise column weighting by a constant row (no gradient to weights).
    Var scale_columns(Var a, const Eigen::RowVectorXd& weights);
    Var gather_rows(Var table, const std::vector<int>& rows);
    Var slice_rows(Var a, int start, int count);
    Var slice_cols(Var a, int start, int count);
    Var hconcat(const std::vector<Var>& parts);
    Var vconcat(const std::vector<Var>& parts);
    Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-6);
    Var softmax_rows(Var a);
    Var relu(Var a);
    Var gelu(Var a);
    Var log1p(Var a);
    // Column-wise max; ties resolved to the lowest row index, which is also
    // the row the gradient flows to. argmax_out[j] = winning row of column j.
    Var colwise_max(Var a, std::vector<int>* argmax_out = nullptr);
    Var sum(Var a);  // 1x1
    // Mean over rows of -log softmax(row)[positive[row]]; numerically stable.
    Var cross_entropy_mean(Var scores, const std::vector<int>& positive);
    // Sum over columns of the squared column mean: the FLOPS regularizer.
    Var sum_squared_colmeans(Var a);

    void backward(Var loss);

    const Mat& value(Var v) const { return nodes_[checked(v)].value; }
    // Gradient of the last backward() target w.r.t. v (zeros if untouched).
    Mat gradient(Var v) const;
    std::size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        bool grad_live = false;
        std::function<void()> backprop;
    };

    std::size_t checked(Var v) const;
    Var push(Mat value, bool requires_grad, std::function<void()> backprop);
    bool needs_grad(Var v) const { return nodes_[checked(v)].requires_grad; }
    Mat& grad_buf(std::int32_t id);
    bool grad_live(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].grad_live; }
    const Mat& grad_of(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Mat& val(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    std::vector<Node> nodes_;
};

}  // namespace splade::ad
