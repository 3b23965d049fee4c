#pragma once

#include "bevnet/bev.hpp"
#include "bevnet/layers.hpp"

namespace bevnet {

struct Keypoint {
    Eigen::Vector3d position;  // meters, grid frame
    double score = 0;
    Eigen::VectorXd descriptor;  // unit norm
};

// 1x1 conv plus a constant pad channel, then per-cell L2 normalization; rows
// of the result are unit descriptors one wider than the conv output.
SparseMap describe(Tape& tape, const SparseMap& f1, const ConvParams& conv1x1);

// Softplus of each channel's deviation from its non-empty neighborhood mean
// (window includes the cell itself), computed with the sparse average pool.
SparseMap spatial_saliency(Tape& tape, const SparseMap& d, int window);

// Per-cell channel score: each entry divided by the cell's channel maximum.
// Throws DegenerateError when a cell's maximum is not positive.
SparseMap channel_score(Tape& tape, const SparseMap& d);

// Detection score per active cell: max_k(alpha * beta). N x 1.
TensorRef detection_score(Tape& tape, const SparseMap& alpha, const SparseMap& beta);

struct HeightForward {
    TensorRef raw_weights;   // N x C, sigmoid output
    TensorRef norm_weights;  // renormalized over occupied voxels
    TensorRef heights;       // N x 1 regressed z in meters
};

// Sigmoid(conv3x3(F1)) weights, renormalized over each pillar's occupied
// voxels so the regressed height is a convex combination of voxel centers.
HeightForward regress_heights(Tape& tape, const SparseMap& f1, const BevGrid& grid,
                              const ConvParams& conv3x3);

// tau = (mean gammaP + mean gammaQ) / 2, soft sums over active cells.
double similarity(const Mat& gamma_p, const Mat& gamma_q);

struct KeypointExtractConfig {
    int max_count = 250;
    double overlap_threshold = 0.5;  // <= 0 disables the overlap filter
    int deep_stride = 8;             // fine cells covered per deep cell side
};

std::vector<Keypoint> extract_keypoints(const BevGrid& grid,
                                        const std::vector<std::pair<int, int>>& active,
                                        const Eigen::VectorXd& scores,
                                        const Eigen::VectorXd& heights, const Mat& descriptors,
                                        const SparseMap& deep_map, const Eigen::VectorXd& overlap,
                                        const KeypointExtractConfig& cfg);

}  // namespace bevnet
