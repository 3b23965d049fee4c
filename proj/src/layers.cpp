#include "bevnet/layers.hpp"

#include <cmath>

namespace bevnet {

void SparseMap::check_active_invariant() const {
    for (std::size_t r = 0; r < active.size(); ++r) {
        const auto [i, j] = active[r];
        if (!in_bounds(i, j)) throw ShapeError("SparseMap: active cell out of bounds");
        if (r > 0 && !(active[r - 1] < active[r]))
            throw ShapeError("SparseMap: active set not sorted/unique");
    }
}

namespace {

// im2col over the active set: one gather per kernel offset, concatenated in
// offset order to match the weight row blocks.
TensorRef gather_patches(Tape& tape, const SparseMap& input,
                         const std::vector<std::pair<int, int>>& out_cells, int kernel,
                         int stride) {
    const int half = (kernel - 1) / 2;
    std::vector<TensorRef> parts;
    parts.reserve(static_cast<std::size_t>(kernel) * kernel);
    for (int di = 0; di < kernel; ++di) {
        for (int dj = 0; dj < kernel; ++dj) {
            std::vector<int> idx(out_cells.size());
            for (std::size_t r = 0; r < out_cells.size(); ++r) {
                const int ii = out_cells[r].first * stride + di - half;
                const int jj = out_cells[r].second * stride + dj - half;
                idx[r] = input.in_bounds(ii, jj) ? input.find(ii, jj) : -1;
            }
            parts.push_back(tape.gather_rows(input.feat, idx));
        }
    }
    return tape.concat_cols(parts);
}

void check_conv_shapes(const Tape& tape, const SparseMap& input, const ConvParams& params) {
    if (params.kernel < 1 || params.kernel % 2 == 0)
        throw ShapeError("conv: kernel size must be odd");
    const auto cin = tape.value(input.feat).cols();
    const auto wrows = params.weight->value.rows();
    if (wrows != static_cast<Eigen::Index>(params.kernel) * params.kernel * cin)
        throw ShapeError("conv: weight rows do not match kernel*kernel*Cin");
    if (params.bias->value.cols() != params.weight->value.cols())
        throw ShapeError("conv: bias width does not match Cout");
}

}  // namespace

SparseMap submanifold_conv(Tape& tape, const SparseMap& input, const ConvParams& params) {
    check_conv_shapes(tape, input, params);
    SparseMap out;
    out.rows = input.rows;
    out.cols = input.cols;
    out.active = input.active;
    TensorRef patches = gather_patches(tape, input, out.active, params.kernel, 1);
    TensorRef w = tape.leaf(*params.weight);
    TensorRef b = tape.leaf(*params.bias);
    out.feat = tape.add_rowvec(tape.matmul(patches, w), b);
    return out;
}

SparseMap strided_sparse_conv(Tape& tape, const SparseMap& input, const ConvParams& params) {
    check_conv_shapes(tape, input, params);
    if (input.rows % 2 != 0 || input.cols % 2 != 0)
        throw ShapeError("strided_sparse_conv: input dims must be even");
    SparseMap out;
    out.rows = input.rows / 2;
    out.cols = input.cols / 2;
    out.active.reserve(input.active.size());
    for (const auto& [i, j] : input.active) out.active.emplace_back(i / 2, j / 2);
    std::sort(out.active.begin(), out.active.end());
    out.active.erase(std::unique(out.active.begin(), out.active.end()), out.active.end());
    TensorRef patches = gather_patches(tape, input, out.active, params.kernel, 2);
    TensorRef w = tape.leaf(*params.weight);
    TensorRef b = tape.leaf(*params.bias);
    out.feat = tape.add_rowvec(tape.matmul(patches, w), b);
    return out;
}

SparseMap upsample_concat(Tape& tape, const SparseMap& coarse, const SparseMap& skip) {
    if (coarse.rows * 2 != skip.rows || coarse.cols * 2 != skip.cols)
        throw ShapeError("upsample_concat: coarse dims must be half of skip dims");
    SparseMap out;
    out.rows = skip.rows;
    out.cols = skip.cols;
    out.active = skip.active;
    std::vector<int> parent(out.active.size());
    for (std::size_t r = 0; r < out.active.size(); ++r)
        parent[r] = coarse.find(out.active[r].first / 2, out.active[r].second / 2);
    TensorRef up = tape.gather_rows(coarse.feat, parent);
    out.feat = tape.concat_cols({skip.feat, up});
    return out;
}

SparseMap sparse_avg_pool(Tape& tape, const SparseMap& input, int window) {
    if (window < 1 || window % 2 == 0) throw ShapeError("sparse_avg_pool: window must be odd");
    const int half = (window - 1) / 2;
    std::vector<std::vector<int>> idx(input.active.size());
    std::vector<std::vector<double>> wts(input.active.size());
    for (std::size_t r = 0; r < input.active.size(); ++r) {
        const auto [i, j] = input.active[r];
        for (int di = -half; di <= half; ++di) {
            for (int dj = -half; dj <= half; ++dj) {
                if (!input.in_bounds(i + di, j + dj)) continue;
                const int src = input.find(i + di, j + dj);
                if (src >= 0) idx[r].push_back(src);
            }
        }
        wts[r].assign(idx[r].size(), 1.0 / static_cast<double>(idx[r].size()));
    }
    SparseMap out;
    out.rows = input.rows;
    out.cols = input.cols;
    out.active = input.active;
    out.feat = tape.row_combine(input.feat, idx, wts,
                                static_cast<int>(tape.value(input.feat).cols()));
    return out;
}

SparseMap pointwise(Tape& tape, const SparseMap& input, Pointwise kind) {
    SparseMap out = input;
    switch (kind) {
        case Pointwise::Relu:
            out.feat = tape.relu(input.feat);
            break;
        case Pointwise::Sigmoid:
            out.feat = tape.sigmoid(input.feat);
            break;
        case Pointwise::L2Norm:
            out.feat = tape.rows_l2_normalize(input.feat);
            break;
    }
    return out;
}

SparseMap attention(Tape& tape, const SparseMap& query_map, const SparseMap& key_map,
                    const SparseMap& value_map, const AttentionParams& params) {
    if (key_map.active != value_map.active)
        throw ShapeError("attention: key and value maps must share the active set");
    if (key_map.count() == 0) throw EmptyInputError("attention: empty key set");
    TensorRef q = tape.matmul(query_map.feat, tape.leaf(*params.wq));
    TensorRef k = tape.matmul(key_map.feat, tape.leaf(*params.wk));
    TensorRef v = tape.matmul(value_map.feat, tape.leaf(*params.wv));
    const double scale = 1.0 / std::sqrt(static_cast<double>(params.wq->value.cols()));
    TensorRef scores = tape.scale(tape.matmul_bt(q, k), scale);
    TensorRef weights = tape.row_softmax(scores);
    SparseMap out;
    out.rows = query_map.rows;
    out.cols = query_map.cols;
    out.active = query_map.active;
    out.feat = tape.matmul(weights, v);
    return out;
}

TensorRef mlp3(Tape& tape, TensorRef input, const Mlp3Params& params) {
    TensorRef h1 = tape.relu(
        tape.add_rowvec(tape.matmul(input, tape.leaf(*params.w1)), tape.leaf(*params.b1)));
    TensorRef h2 = tape.relu(
        tape.add_rowvec(tape.matmul(h1, tape.leaf(*params.w2)), tape.leaf(*params.b2)));
    return tape.add_rowvec(tape.matmul(h2, tape.leaf(*params.w3)), tape.leaf(*params.b3));
}

}  // namespace bevnet
