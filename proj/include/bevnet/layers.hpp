#pragma once

#include "bevnet/params.hpp"
#include "bevnet/sparse_map.hpp"

namespace bevnet {

struct ConvParams {
    Parameter* weight = nullptr;  // (k*k*Cin) x Cout, row block order = kernel offset
    Parameter* bias = nullptr;    // 1 x Cout
    int kernel = 3;
};

struct AttentionParams {
    Parameter* wq = nullptr;  // C x C
    Parameter* wk = nullptr;
    Parameter* wv = nullptr;
};

struct Mlp3Params {
    Parameter* w1 = nullptr;
    Parameter* b1 = nullptr;
    Parameter* w2 = nullptr;
    Parameter* b2 = nullptr;
    Parameter* w3 = nullptr;
    Parameter* b3 = nullptr;
};

// Sparse convolution whose output active set equals the input active set;
// inactive neighbors contribute zero.
SparseMap submanifold_conv(Tape& tape, const SparseMap& input, const ConvParams& params);

// Stride-2 convolution; a coarse cell is active iff any fine cell in its 2x2
// footprint is active. Kernel window is centred on the footprint's origin.
SparseMap strided_sparse_conv(Tape& tape, const SparseMap& input, const ConvParams& params);

// Active set of the skip map; features = skip ++ parent-coarse (zeros when the
// parent is inactive).
SparseMap upsample_concat(Tape& tape, const SparseMap& coarse, const SparseMap& skip);

// Mean over active cells in the window x window square centred at each active
// cell (the cell itself included).
SparseMap sparse_avg_pool(Tape& tape, const SparseMap& input, int window);

enum class Pointwise { Relu, Sigmoid, L2Norm };
SparseMap pointwise(Tape& tape, const SparseMap& input, Pointwise kind);

// Single-head scaled dot-product attention over active cells as tokens.
SparseMap attention(Tape& tape, const SparseMap& query_map, const SparseMap& key_map,
                    const SparseMap& value_map, const AttentionParams& params);

// linear -> ReLU -> linear -> ReLU -> linear on a row batch.
TensorRef mlp3(Tape& tape, TensorRef input, const Mlp3Params& params);

}  // namespace bevnet
