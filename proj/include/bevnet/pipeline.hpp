#pragma once

#include "bevnet/config.hpp"
#include "bevnet/dataset.hpp"
#include "bevnet/evaluation.hpp"

namespace bevnet {

struct LossReport {
    double desc = 0, det = 0, reg = 0, bce = 0, sg = 0, total = 0;
};

// The discrete choices of one training step: correspondence samples and
// regression correspondents, resolved at the heights of one forward pass.
// Replaying a step with a fixed plan makes the loss a smooth function of the
// parameters (gradient checks rely on this).
struct TrainPlan {
    std::vector<CorrespondenceSample> samples_pq, samples_qp;
    std::vector<CorrespondenceSample> deep_pq, deep_qp;
    bool has_sg = false;
    std::vector<int> reg_corr_p, reg_corr_q;
    CircleWeights desc_w_pq, desc_w_qp, sg_w_pq, sg_w_qp;
};

// Full forward + multi-task loss for one training pair. Gradients are left in
// the model's parameters; the caller decides when to apply adam_step.
// Throws NoOverlapError when the pair shares no correspondence. When plan_out
// is given, the discrete choices taken are recorded there.
LossReport train_pair_step(BevNetModel& model, const RunConfig& cfg, const ScanPair& pair,
                           std::uint64_t seed, TrainPlan* plan_out = nullptr);

// Same step with the discrete choices frozen to a recorded plan.
LossReport train_pair_step(BevNetModel& model, const RunConfig& cfg, const ScanPair& pair,
                           const TrainPlan& plan);

// Forward pass products needed at inference time, as plain values.
struct PairInference {
    std::vector<Keypoint> keypoints_p;
    std::vector<Keypoint> keypoints_q;
    Eigen::VectorXd gamma_p, gamma_q;  // per deep active cell
    std::vector<std::pair<int, int>> deep_active_p, deep_active_q;
    double tau = 0;
};

PairInference infer_pair(const BevNetModel& model, const RunConfig& cfg, const PointCloud& cloud_p,
                         const PointCloud& cloud_q, bool overlap_filter);

struct RegisterOutput {
    PairInference inference;
    CorrespondenceSet correspondences;
    RegistrationResult result;
};

RegisterOutput register_pair(const BevNetModel& model, const RunConfig& cfg,
                             const PointCloud& cloud_p, const PointCloud& cloud_q,
                             bool overlap_filter, std::uint64_t seed);

// Cached deepest-encoder features of one cloud, for pairwise retrieval.
struct CloudEncoding {
    int rows = 0, cols = 0;
    std::vector<std::pair<int, int>> active;
    Mat features;
};

CloudEncoding encode_cloud(const BevNetModel& model, const RunConfig& cfg,
                           const PointCloud& cloud);

// Similarity tau of two cached encodings via the overlap head.
double overlap_tau(const BevNetModel& model, const CloudEncoding& enc_p,
                   const CloudEncoding& enc_q);

}  // namespace bevnet
