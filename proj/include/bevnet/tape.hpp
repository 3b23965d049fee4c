#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bevnet/errors.hpp"

namespace bevnet {

using Mat = Eigen::MatrixXd;

// Trainable weight with its gradient accumulator and Adam moment buffers.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;

    Parameter(std::string n, int rows, int cols)
        : name(std::move(n)),
          value(Mat::Zero(rows, cols)),
          grad(Mat::Zero(rows, cols)),
          adam_m(Mat::Zero(rows, cols)),
          adam_v(Mat::Zero(rows, cols)) {}

    void zero_grad() { grad.setZero(); }
};

struct TensorRef {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense double matrices. One tape records one forward
// pass; backward() accumulates into the Parameters bound via leaf().
class Tape {
public:
    TensorRef leaf(Parameter& p);
    TensorRef constant(Mat v);

    const Mat& value(TensorRef t) const { return node(t).value; }
    const Mat& grad(TensorRef t) const { return node(t).grad; }
    std::size_t size() const { return nodes_.size(); }

    TensorRef matmul(TensorRef a, TensorRef b);
    TensorRef matmul_bt(TensorRef a, TensorRef b);  // a * b^T
    TensorRef add(TensorRef a, TensorRef b);
    TensorRef sub(TensorRef a, TensorRef b);
    TensorRef cmul(TensorRef a, TensorRef b);
    TensorRef add_rowvec(TensorRef a, TensorRef bias);  // bias 1 x C, broadcast over rows
    TensorRef scale(TensorRef a, double s);
    TensorRef add_scalar(TensorRef a, double s);
    TensorRef concat_cols(const std::vector<TensorRef>& parts);
    // Row i of the result is row index[i] of a, or zeros when index[i] == -1.
    TensorRef gather_rows(TensorRef a, const std::vector<int>& index);
    // Row r of the result is sum_k weights[r][k] * a.row(index[r][k]).
    TensorRef row_combine(TensorRef a, const std::vector<std::vector<int>>& index,
                          const std::vector<std::vector<double>>& weights, int out_cols_hint = -1);

    TensorRef relu(TensorRef a);
    TensorRef sigmoid(TensorRef a);
    TensorRef softplus(TensorRef a);
    TensorRef exp(TensorRef a);
    TensorRef log(TensorRef a);
    TensorRef abs(TensorRef a);
    TensorRef clamp_min(TensorRef a, double bound);

    TensorRef rows_l2_normalize(TensorRef a, double min_norm = 1e-12);
    TensorRef rows_norm(TensorRef a);  // N x 1 Euclidean row norms
    TensorRef row_softmax(TensorRef a);
    TensorRef row_max(TensorRef a);  // N x 1, gradient to the argmax entry
    TensorRef row_min(TensorRef a);
    TensorRef row_sum(TensorRef a);
    TensorRef div_colvec(TensorRef a, TensorRef c);  // a(i,j) / c(i,0)
    TensorRef mul_colvec(TensorRef a, TensorRef c);
    TensorRef sum_all(TensorRef a);   // 1 x 1
    TensorRef mean_all(TensorRef a);  // 1 x 1

    // Seeds the 1x1 loss node with gradient 1 and runs the reverse sweep.
    void backward(TensorRef loss);

private:
    struct Node {
        Mat value;
        Mat grad;
        std::function<void(Tape&, int)> back;
        Parameter* param = nullptr;
    };

    Node& node(TensorRef t) {
        if (!t.valid() || t.id >= static_cast<int>(nodes_.size()))
            throw TapeError("Tape: invalid tensor reference");
        return nodes_[t.id];
    }
    const Node& node(TensorRef t) const {
        if (!t.valid() || t.id >= static_cast<int>(nodes_.size()))
            throw TapeError("Tape: invalid tensor reference");
        return nodes_[t.id];
    }
    TensorRef push(Mat value, std::function<void(Tape&, int)> back, Parameter* param = nullptr);
    Mat& g(int id) { return nodes_[id].grad; }
    const Mat& v(int id) const { return nodes_[id].value; }

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

}  // namespace bevnet
