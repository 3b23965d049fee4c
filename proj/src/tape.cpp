#include "bevnet/tape.hpp"

#include <cmath>

namespace bevnet {

TensorRef Tape::push(Mat value, std::function<void(Tape&, int)> back, Parameter* param) {
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.back = std::move(back);
    n.param = param;
    nodes_.push_back(std::move(n));
    return TensorRef{static_cast<int>(nodes_.size()) - 1};
}

TensorRef Tape::leaf(Parameter& p) {
    return push(p.value, nullptr, &p);
}

TensorRef Tape::constant(Mat v) {
    return push(std::move(v), nullptr, nullptr);
}

TensorRef Tape::matmul(TensorRef a, TensorRef b) {
    if (v(a.id).cols() != v(b.id).rows()) throw ShapeError("matmul: inner dimensions disagree");
    const int ai = a.id, bi = b.id;
    return push(v(ai) * v(bi), [ai, bi](Tape& t, int out) {
        t.g(ai) += t.g(out) * t.v(bi).transpose();
        t.g(bi) += t.v(ai).transpose() * t.g(out);
    });
}

TensorRef Tape::matmul_bt(TensorRef a, TensorRef b) {
    if (v(a.id).cols() != v(b.id).cols()) throw ShapeError("matmul_bt: inner dimensions disagree");
    const int ai = a.id, bi = b.id;
    return push(v(ai) * v(bi).transpose(), [ai, bi](Tape& t, int out) {
        t.g(ai) += t.g(out) * t.v(bi);
        t.g(bi) += t.g(out).transpose() * t.v(ai);
    });
}

TensorRef Tape::add(TensorRef a, TensorRef b) {
    if (v(a.id).rows() != v(b.id).rows() || v(a.id).cols() != v(b.id).cols())
        throw ShapeError("add: shape mismatch");
    const int ai = a.id, bi = b.id;
    return push(v(ai) + v(bi), [ai, bi](Tape& t, int out) {
        t.g(ai) += t.g(out);
        t.g(bi) += t.g(out);
    });
}

TensorRef Tape::sub(TensorRef a, TensorRef b) {
    if (v(a.id).rows() != v(b.id).rows() || v(a.id).cols() != v(b.id).cols())
        throw ShapeError("sub: shape mismatch");
    const int ai = a.id, bi = b.id;
    return push(v(ai) - v(bi), [ai, bi](Tape& t, int out) {
        t.g(ai) += t.g(out);
        t.g(bi) -= t.g(out);
    });
}

TensorRef Tape::cmul(TensorRef a, TensorRef b) {
    if (v(a.id).rows() != v(b.id).rows() || v(a.id).cols() != v(b.id).cols())
        throw ShapeError("cmul: shape mismatch");
    const int ai = a.id, bi = b.id;
    return push(v(ai).cwiseProduct(v(bi)), [ai, bi](Tape& t, int out) {
        t.g(ai) += t.g(out).cwiseProduct(t.v(bi));
        t.g(bi) += t.g(out).cwiseProduct(t.v(ai));
    });
}

TensorRef Tape::add_rowvec(TensorRef a, TensorRef bias) {
    if (v(bias.id).rows() != 1 || v(bias.id).cols() != v(a.id).cols())
        throw ShapeError("add_rowvec: bias must be 1 x cols(a)");
    const int ai = a.id, bi = bias.id;
    Mat out = v(ai);
    out.rowwise() += v(bi).row(0);
    return push(std::move(out), [ai, bi](Tape& t, int o) {
        t.g(ai) += t.g(o);
        t.g(bi).row(0) += t.g(o).colwise().sum();
    });
}

TensorRef Tape::scale(TensorRef a, double s) {
    const int ai = a.id;
    return push(v(ai) * s, [ai, s](Tape& t, int out) { t.g(ai) += t.g(out) * s; });
}

TensorRef Tape::add_scalar(TensorRef a, double s) {
    const int ai = a.id;
    return push(v(ai).array() + s, [ai](Tape& t, int out) { t.g(ai) += t.g(out); });
}

TensorRef Tape::concat_cols(const std::vector<TensorRef>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const auto rows = v(parts[0].id).rows();
    Eigen::Index cols = 0;
    std::vector<int> ids;
    for (auto p : parts) {
        if (v(p.id).rows() != rows) throw ShapeError("concat_cols: row counts disagree");
        cols += v(p.id).cols();
        ids.push_back(p.id);
    }
    Mat out(rows, cols);
    Eigen::Index off = 0;
    for (auto id : ids) {
        out.middleCols(off, v(id).cols()) = v(id);
        off += v(id).cols();
    }
    return push(std::move(out), [ids](Tape& t, int o) {
        Eigen::Index off = 0;
        for (auto id : ids) {
            const auto w = t.v(id).cols();
            t.g(id) += t.g(o).middleCols(off, w);
            off += w;
        }
    });
}

TensorRef Tape::gather_rows(TensorRef a, const std::vector<int>& index) {
    const int ai = a.id;
    const Mat& in = v(ai);
    Mat out = Mat::Zero(static_cast<Eigen::Index>(index.size()), in.cols());
    for (std::size_t r = 0; r < index.size(); ++r) {
        const int src = index[r];
        if (src >= static_cast<int>(in.rows())) throw ShapeError("gather_rows: index out of range");
        if (src >= 0) out.row(static_cast<Eigen::Index>(r)) = in.row(src);
    }
    return push(std::move(out), [ai, index](Tape& t, int o) {
        for (std::size_t r = 0; r < index.size(); ++r) {
            if (index[r] >= 0) t.g(ai).row(index[r]) += t.g(o).row(static_cast<Eigen::Index>(r));
        }
    });
}

TensorRef Tape::row_combine(TensorRef a, const std::vector<std::vector<int>>& index,
                            const std::vector<std::vector<double>>& weights, int out_cols_hint) {
    if (index.size() != weights.size()) throw ShapeError("row_combine: index/weight size mismatch");
    const int ai = a.id;
    const Mat& in = v(ai);
    const Eigen::Index cols = out_cols_hint >= 0 ? out_cols_hint : in.cols();
    Mat out = Mat::Zero(static_cast<Eigen::Index>(index.size()), cols);
    for (std::size_t r = 0; r < index.size(); ++r) {
        if (index[r].size() != weights[r].size())
            throw ShapeError("row_combine: ragged index/weight row");
        for (std::size_t k = 0; k < index[r].size(); ++k) {
            if (index[r][k] < 0 || index[r][k] >= static_cast<int>(in.rows()))
                throw ShapeError("row_combine: index out of range");
            out.row(static_cast<Eigen::Index>(r)) += weights[r][k] * in.row(index[r][k]);
        }
    }
    return push(std::move(out), [ai, index, weights](Tape& t, int o) {
        for (std::size_t r = 0; r < index.size(); ++r) {
            for (std::size_t k = 0; k < index[r].size(); ++k) {
                t.g(ai).row(index[r][k]) +=
                    weights[r][k] * t.g(o).row(static_cast<Eigen::Index>(r));
            }
        }
    });
}

TensorRef Tape::relu(TensorRef a) {
    const int ai = a.id;
    return push(v(ai).cwiseMax(0.0), [ai](Tape& t, int out) {
        t.g(ai).array() += t.g(out).array() * (t.v(ai).array() > 0.0).cast<double>();
    });
}

TensorRef Tape::sigmoid(TensorRef a) {
    const int ai = a.id;
    Mat out = (1.0 / (1.0 + (-v(ai)).array().exp())).matrix();
    return push(std::move(out), [ai](Tape& t, int o) {
        const auto s = t.v(o).array();
        t.g(ai).array() += t.g(o).array() * s * (1.0 - s);
    });
}

TensorRef Tape::softplus(TensorRef a) {
    const int ai = a.id;
    // log1p(exp(x)) with the large-x branch to avoid overflow.
    Mat out = v(ai).unaryExpr([](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); });
    return push(std::move(out), [ai](Tape& t, int o) {
        t.g(ai).array() += t.g(o).array() * (1.0 / (1.0 + (-t.v(ai)).array().exp()));
    });
}

TensorRef Tape::exp(TensorRef a) {
    const int ai = a.id;
    return push(v(ai).array().exp(), [ai](Tape& t, int o) {
        t.g(ai).array() += t.g(o).array() * t.v(o).array();
    });
}

TensorRef Tape::log(TensorRef a) {
    const int ai = a.id;
    if ((v(ai).array() <= 0.0).any()) throw NumericError("log: non-positive argument");
    return push(v(ai).array().log(), [ai](Tape& t, int o) {
        t.g(ai).array() += t.g(o).array() / t.v(ai).array();
    });
}

TensorRef Tape::abs(TensorRef a) {
    const int ai = a.id;
    return push(v(ai).cwiseAbs(), [ai](Tape& t, int o) {
        t.g(ai).array() += t.g(o).array() * t.v(ai).array().sign();
    });
}

TensorRef Tape::clamp_min(TensorRef a, double bound) {
    const int ai = a.id;
    return push(v(ai).cwiseMax(bound), [ai, bound](Tape& t, int o) {
        t.g(ai).array() += t.g(o).array() * (t.v(ai).array() > bound).cast<double>();
    });
}

TensorRef Tape::rows_l2_normalize(TensorRef a, double min_norm) {
    const int ai = a.id;
    const Mat& in = v(ai);
    Eigen::VectorXd norms = in.rowwise().norm();
    if ((norms.array() <= min_norm).any())
        throw DegenerateError("rows_l2_normalize: near-zero row norm");
    Mat out = in.array().colwise() / norms.array();
    return push(std::move(out), [ai, norms](Tape& t, int o) {
        // d(x/||x||) = (g - y (y.g)) / ||x||
        for (Eigen::Index r = 0; r < t.v(o).rows(); ++r) {
            const auto y = t.v(o).row(r);
            const auto gr = t.g(o).row(r);
            t.g(ai).row(r) += (gr - y * (y.dot(gr))) / norms(r);
        }
    });
}

TensorRef Tape::rows_norm(TensorRef a) {
    const int ai = a.id;
    Mat out = v(ai).rowwise().norm();
    return push(std::move(out), [ai](Tape& t, int o) {
        for (Eigen::Index r = 0; r < t.v(o).rows(); ++r) {
            const double n = t.v(o)(r, 0);
            if (n > 0) t.g(ai).row(r) += t.g(o)(r, 0) / n * t.v(ai).row(r);
        }
    });
}

TensorRef Tape::row_softmax(TensorRef a) {
    const int ai = a.id;
    const Mat& in = v(ai);
    Mat out(in.rows(), in.cols());
    for (Eigen::Index r = 0; r < in.rows(); ++r) {
        const double m = in.row(r).maxCoeff();
        Eigen::ArrayXd e = (in.row(r).array() - m).exp();
        out.row(r) = e / e.sum();
    }
    return push(std::move(out), [ai](Tape& t, int o) {
        for (Eigen::Index r = 0; r < t.v(o).rows(); ++r) {
            const auto s = t.v(o).row(r);
            const auto gr = t.g(o).row(r);
            t.g(ai).row(r) += s.cwiseProduct(gr - Eigen::RowVectorXd::Constant(s.cols(), gr.dot(s)));
        }
    });
}

TensorRef Tape::row_max(TensorRef a) {
    const int ai = a.id;
    const Mat& in = v(ai);
    Mat out(in.rows(), 1);
    std::vector<Eigen::Index> arg(in.rows());
    for (Eigen::Index r = 0; r < in.rows(); ++r) out(r, 0) = in.row(r).maxCoeff(&arg[r]);
    return push(std::move(out), [ai, arg](Tape& t, int o) {
        for (Eigen::Index r = 0; r < t.v(o).rows(); ++r)
            t.g(ai)(r, arg[r]) += t.g(o)(r, 0);
    });
}

TensorRef Tape::row_min(TensorRef a) {
    const int ai = a.id;
    const Mat& in = v(ai);
    Mat out(in.rows(), 1);
    std::vector<Eigen::Index> arg(in.rows());
    for (Eigen::Index r = 0; r < in.rows(); ++r) out(r, 0) = in.row(r).minCoeff(&arg[r]);
    return push(std::move(out), [ai, arg](Tape& t, int o) {
        for (Eigen::Index r = 0; r < t.v(o).rows(); ++r)
            t.g(ai)(r, arg[r]) += t.g(o)(r, 0);
    });
}

TensorRef Tape::row_sum(TensorRef a) {
    const int ai = a.id;
    return push(v(ai).rowwise().sum(), [ai](Tape& t, int o) {
        t.g(ai).colwise() += t.g(o).col(0);
    });
}

TensorRef Tape::div_colvec(TensorRef a, TensorRef c) {
    if (v(c.id).cols() != 1 || v(c.id).rows() != v(a.id).rows())
        throw ShapeError("div_colvec: divisor must be N x 1");
    const int ai = a.id, ci = c.id;
    Mat out = v(ai).array().colwise() / v(ci).col(0).array();
    return push(std::move(out), [ai, ci](Tape& t, int o) {
        const auto cv = t.v(ci).col(0).array();
        t.g(ai) += (t.g(o).array().colwise() / cv).matrix();
        t.g(ci).col(0).array() -=
            (t.g(o).array() * t.v(ai).array()).rowwise().sum() / (cv * cv);
    });
}

TensorRef Tape::mul_colvec(TensorRef a, TensorRef c) {
    if (v(c.id).cols() != 1 || v(c.id).rows() != v(a.id).rows())
        throw ShapeError("mul_colvec: factor must be N x 1");
    const int ai = a.id, ci = c.id;
    Mat out = v(ai).array().colwise() * v(ci).col(0).array();
    return push(std::move(out), [ai, ci](Tape& t, int o) {
        t.g(ai) += (t.g(o).array().colwise() * t.v(ci).col(0).array()).matrix();
        t.g(ci).col(0) += (t.g(o).array() * t.v(ai).array()).rowwise().sum().matrix();
    });
}

TensorRef Tape::sum_all(TensorRef a) {
    const int ai = a.id;
    Mat out(1, 1);
    out(0, 0) = v(ai).sum();
    return push(std::move(out), [ai](Tape& t, int o) {
        t.g(ai).array() += t.g(o)(0, 0);
    });
}

TensorRef Tape::mean_all(TensorRef a) {
    const int ai = a.id;
    if (v(ai).size() == 0) throw EmptyInputError("mean_all: empty tensor");
    Mat out(1, 1);
    out(0, 0) = v(ai).mean();
    const double inv = 1.0 / static_cast<double>(v(ai).size());
    return push(std::move(out), [ai, inv](Tape& t, int o) {
        t.g(ai).array() += t.g(o)(0, 0) * inv;
    });
}

void Tape::backward(TensorRef loss) {
    if (nodes_.empty()) throw TapeError("backward: no forward pass recorded");
    Node& top = node(loss);
    if (top.value.rows() != 1 || top.value.cols() != 1)
        throw TapeError("backward: loss must be a 1x1 tensor");
    top.grad(0, 0) = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back) n.back(*this, i);
        if (n.param) n.param->grad += n.grad;
    }
    backward_done_ = true;
}

}  // namespace bevnet
