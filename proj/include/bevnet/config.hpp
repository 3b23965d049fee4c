#pragma once

#include <cstdint>
#include <string>

#include "bevnet/bev.hpp"
#include "bevnet/losses.hpp"
#include "bevnet/model.hpp"
#include "bevnet/registration.hpp"

namespace bevnet {

// Every tunable of the pipeline, grouped by section. Parsed from plain-text
// key/value files with [section] headers; unknown keys are rejected.
struct RunConfig {
    // [grid]
    double xmin = -20, xmax = 20, ymin = -20, ymax = 20, zmin = -1, zmax = 5;
    int rows = 64, cols = 64, channels = 16;
    int window = 5;

    // [model]
    int c1 = 32, c2 = 64, c3 = 128, c4 = 256;
    int desc_dim = 16;

    // [loss]
    double delta_p = 0.1, delta_n = 1.4, circle_scale = 10.0;
    double w_desc = 1, w_det = 1, w_reg = 1, w_bce = 1, w_sg = 1;
    int max_anchors = 128, max_negatives = 32;
    double pos_radius_cells = 1.5;   // r_p in fine-cell units
    double safe_radius_factor = 2.0;  // r_s = factor * r_p
    int sg_max_anchors = 64, sg_max_negatives = 16;

    // [keypoints]
    int max_keypoints = 250;
    double overlap_threshold = 0.5;

    // [ransac]
    int ransac_iterations = 50000;
    double inlier_radius = 1.25;  // 2 fine cells: covers cell-center quantization
    double early_exit_ratio = 0.9;

    // [train]
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int steps = 500;
    int checkpoint_every = 100;
    std::uint64_t seed = 1;

    // [data]
    double scene_extent = 40;
    double scan_range = 30;
    int train_pairs = 200, eval_pairs = 50;
    double max_pair_distance_frac = 0.6;  // of the scene extent

    // [eval]
    double rte_max = 2.0, rre_max = 5.0;
    int exclusion_window = 10;
    double success_radius = 4.0;

    static RunConfig desk();
    static RunConfig full_scale();

    void validate() const;
    std::string serialize() const;
    static RunConfig parse(const std::string& text);
    static RunConfig load_file(const std::string& path);
    void save_file(const std::string& path) const;

    // Digest over the architecture-defining sections, for checkpoints.
    std::uint64_t digest() const;

    BevConfig bev_config() const;
    ModelConfig model_config() const;
    CircleParams circle_params() const;
    LossWeights loss_weights() const;
    RansacConfig ransac_config() const;
    double fine_cell() const { return (xmax - xmin) / rows; }
    LossRadii loss_radii() const;
    LossRadii deep_loss_radii() const;  // scaled to the deepest resolution
};

}  // namespace bevnet
