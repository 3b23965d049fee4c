#include "bevnet/pipeline.hpp"

namespace bevnet {

namespace {

// Ground-truth anchor per active pillar: (x,y) at the cell center, z from the
// raw point nearest in plan. Correspondence labels must not depend on the
// model's own height estimates, or a bad regressor erases its training signal.
Eigen::VectorXd nearest_raw_z(const PointCloud& raw, const std::vector<Eigen::Vector2d>& xy) {
    Eigen::VectorXd z(xy.size());
    for (std::size_t i = 0; i < xy.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : raw.points) {
            const double d = (Eigen::Vector2d(p.x(), p.y()) - xy[i]).squaredNorm();
            if (d < best) {
                best = d;
                z(i) = p.z();
            }
        }
    }
    return z;
}

std::vector<Eigen::Vector3d> lifted_points(const std::vector<Eigen::Vector2d>& xy,
                                           const Eigen::VectorXd& z) {
    std::vector<Eigen::Vector3d> out(xy.size());
    for (std::size_t r = 0; r < xy.size(); ++r) out[r] = Eigen::Vector3d(xy[r].x(), xy[r].y(), z(r));
    return out;
}

std::vector<Eigen::Vector2d> cell_centers(const BevGrid& grid,
                                          const std::vector<std::pair<int, int>>& active) {
    std::vector<Eigen::Vector2d> out(active.size());
    for (std::size_t r = 0; r < active.size(); ++r)
        out[r] = Eigen::Vector2d(grid.cell_center_x(active[r].first),
                                 grid.cell_center_y(active[r].second));
    return out;
}

// Deep-cell centers as planar 3D points for the deepest-map circle loss.
std::vector<Eigen::Vector3d> deep_centers(const BevGrid& grid,
                                          const std::vector<std::pair<int, int>>& deep_active,
                                          int stride) {
    const auto& cfg = grid.config();
    const double dx = cfg.cell_dx() * stride, dy = cfg.cell_dy() * stride;
    std::vector<Eigen::Vector3d> out(deep_active.size());
    for (std::size_t r = 0; r < deep_active.size(); ++r) {
        out[r] = Eigen::Vector3d(cfg.extent.xmin + (deep_active[r].first + 0.5) * dx,
                                 cfg.extent.ymin + (deep_active[r].second + 0.5) * dy, 0.0);
    }
    return out;
}

// L2-normalized deep features with a constant pad channel so zero rows stay
// well defined.
TensorRef normalized_deep(Tape& tape, TensorRef feat) {
    const auto n = tape.value(feat).rows();
    TensorRef pad = tape.constant(Mat::Constant(n, 1, 0.05));
    return tape.rows_l2_normalize(tape.concat_cols({feat, pad}));
}

}  // namespace

namespace {

LossReport run_pair_step(BevNetModel& model, const RunConfig& cfg, const ScanPair& pair,
                         std::uint64_t seed, const TrainPlan* reuse, TrainPlan* record) {
    const BevConfig bev = cfg.bev_config();
    const BevGrid grid_p = voxelize(pair.cloud_p, bev);
    const BevGrid grid_q = voxelize(pair.cloud_q, bev);
    const int stride = model.config().deep_stride();

    Tape tape;
    auto fp = model.forward_cloud(tape, grid_p);
    auto fq = model.forward_cloud(tape, grid_q);
    auto ov = model.forward_overlap(tape, fp.e4, fq.e4);

    // correspondence sampling on ground-truth anchored pillars
    const auto xy_p = cell_centers(grid_p, fp.f1.active);
    const auto xy_q = cell_centers(grid_q, fq.f1.active);
    const Eigen::VectorXd gz_p = nearest_raw_z(pair.cloud_p, xy_p);
    const Eigen::VectorXd gz_q = nearest_raw_z(pair.cloud_q, xy_q);
    const auto pts_p = lifted_points(xy_p, gz_p);
    const auto pts_q = lifted_points(xy_q, gz_q);
    std::vector<Eigen::Vector3d> q_in_p(pts_q.size()), p_in_q(pts_p.size());
    for (std::size_t i = 0; i < pts_q.size(); ++i) q_in_p[i] = pair.gt.apply(pts_q[i]);
    const RigidTransform gt_inv = pair.gt.inverse();
    for (std::size_t i = 0; i < pts_p.size(); ++i) p_in_q[i] = gt_inv.apply(pts_p[i]);

    std::vector<CorrespondenceSample> samples_pq, samples_qp;
    if (reuse) {
        samples_pq = reuse->samples_pq;
        samples_qp = reuse->samples_qp;
    } else {
        SamplerConfig sampler;
        sampler.max_anchors = cfg.max_anchors;
        sampler.max_negatives = cfg.max_negatives;
        sampler.radii = cfg.loss_radii();
        sampler.seed = seed;
        samples_pq = sample_correspondences(pts_p, q_in_p, sampler);
        sampler.seed = seed + 1;
        samples_qp = sample_correspondences(pts_q, p_in_q, sampler);
    }

    std::vector<int> reg_corr_p, reg_corr_q;
    if (reuse) {
        reg_corr_p = reuse->reg_corr_p;
        reg_corr_q = reuse->reg_corr_q;
    } else {
        const double r_corr = cfg.loss_radii().r_pos;
        reg_corr_p = regression_correspondents(gz_p, xy_p, gz_q, xy_q, pair.gt, r_corr);
        reg_corr_q = regression_correspondents(gz_q, xy_q, gz_p, xy_p, gt_inv, r_corr);
    }

    const CircleParams circle = cfg.circle_params();
    LossParts parts;
    CircleWeights desc_w_pq, desc_w_qp, sg_w_pq, sg_w_qp;
    parts.desc = tape.scale(
        tape.add(circle_loss(tape, fp.desc.feat, fq.desc.feat, samples_pq, circle,
                             reuse ? &reuse->desc_w_pq : nullptr, &desc_w_pq),
                 circle_loss(tape, fq.desc.feat, fp.desc.feat, samples_qp, circle,
                             reuse ? &reuse->desc_w_qp : nullptr, &desc_w_qp)),
        0.5);
    parts.det =
        detection_loss(tape, fp.desc.feat, fq.desc.feat, samples_pq, fp.score, fq.score);
    parts.reg = tape.scale(
        tape.add(regression_loss_dir(tape, fp.height.heights, xy_p, pair.cloud_p,
                                     fq.height.heights, xy_q, pair.gt, reg_corr_p),
                 regression_loss_dir(tape, fq.height.heights, xy_q, pair.cloud_q,
                                     fp.height.heights, xy_p, gt_inv, reg_corr_q)),
        0.5);

    const OverlapLabels labels =
        make_overlap_labels(grid_p, pair.cloud_p, grid_q, pair.cloud_q, pair.gt, stride);
    if (labels.for_p.size() != fp.e4.count() || labels.for_q.size() != fq.e4.count())
        throw ShapeError("train_pair_step: overlap label/active-set mismatch");
    parts.bce = tape.add(bce_loss(tape, ov.gamma_p, labels.for_p),
                         bce_loss(tape, ov.gamma_q, labels.for_q));

    // deepest-map circle loss on footprint correspondences
    std::vector<CorrespondenceSample> deep_pq, deep_qp;
    bool has_sg = false;
    if (reuse) {
        deep_pq = reuse->deep_pq;
        deep_qp = reuse->deep_qp;
        has_sg = reuse->has_sg;
    } else {
        const auto dc_p = deep_centers(grid_p, fp.e4.active, stride);
        const auto dc_q = deep_centers(grid_q, fq.e4.active, stride);
        std::vector<Eigen::Vector3d> dq_in_p(dc_q.size()), dp_in_q(dc_p.size());
        for (std::size_t i = 0; i < dc_q.size(); ++i) dq_in_p[i] = pair.gt.apply(dc_q[i]);
        for (std::size_t i = 0; i < dc_p.size(); ++i) dp_in_q[i] = gt_inv.apply(dc_p[i]);
        SamplerConfig deep_sampler;
        deep_sampler.max_anchors = cfg.sg_max_anchors;
        deep_sampler.max_negatives = cfg.sg_max_negatives;
        deep_sampler.radii = cfg.deep_loss_radii();
        deep_sampler.seed = seed + 2;
        try {
            deep_pq = sample_correspondences(dc_p, dq_in_p, deep_sampler);
            deep_sampler.seed = seed + 3;
            deep_qp = sample_correspondences(dc_q, dp_in_q, deep_sampler);
            has_sg = true;
        } catch (const NoOverlapError&) {
            // fine-level sampling succeeded, so the pair overlaps; the deep
            // grid can still miss a positive at very low overlap. Drop the term.
        }
    }
    if (has_sg) {
        TensorRef sg_p = normalized_deep(tape, fp.e4.feat);
        TensorRef sg_q = normalized_deep(tape, fq.e4.feat);
        parts.sg = tape.scale(
            tape.add(circle_loss(tape, sg_p, sg_q, deep_pq, circle,
                                 reuse ? &reuse->sg_w_pq : nullptr, &sg_w_pq),
                     circle_loss(tape, sg_q, sg_p, deep_qp, circle,
                                 reuse ? &reuse->sg_w_qp : nullptr, &sg_w_qp)),
            0.5);
    }

    if (record) {
        record->samples_pq = samples_pq;
        record->samples_qp = samples_qp;
        record->deep_pq = deep_pq;
        record->deep_qp = deep_qp;
        record->has_sg = has_sg;
        record->reg_corr_p = reg_corr_p;
        record->reg_corr_q = reg_corr_q;
        record->desc_w_pq = desc_w_pq;
        record->desc_w_qp = desc_w_qp;
        record->sg_w_pq = sg_w_pq;
        record->sg_w_qp = sg_w_qp;
    }

    TensorRef total = total_loss(tape, parts, cfg.loss_weights());
    tape.backward(total);

    LossReport report;
    report.desc = tape.value(parts.desc)(0, 0);
    report.det = tape.value(parts.det)(0, 0);
    report.reg = tape.value(parts.reg)(0, 0);
    report.bce = tape.value(parts.bce)(0, 0);
    report.sg = parts.sg.valid() ? tape.value(parts.sg)(0, 0) : 0.0;
    report.total = tape.value(total)(0, 0);
    return report;
}

}  // namespace

LossReport train_pair_step(BevNetModel& model, const RunConfig& cfg, const ScanPair& pair,
                           std::uint64_t seed, TrainPlan* plan_out) {
    return run_pair_step(model, cfg, pair, seed, nullptr, plan_out);
}

LossReport train_pair_step(BevNetModel& model, const RunConfig& cfg, const ScanPair& pair,
                           const TrainPlan& plan) {
    return run_pair_step(model, cfg, pair, 0, &plan, nullptr);
}

PairInference infer_pair(const BevNetModel& model, const RunConfig& cfg, const PointCloud& cloud_p,
                         const PointCloud& cloud_q, bool overlap_filter) {
    const BevConfig bev = cfg.bev_config();
    const BevGrid grid_p = voxelize(cloud_p, bev);
    const BevGrid grid_q = voxelize(cloud_q, bev);
    if (grid_p.occupied_pillars() == 0 || grid_q.occupied_pillars() == 0)
        throw EmptyInputError("infer_pair: empty occupancy grid");

    Tape tape;
    auto fp = model.forward_cloud(tape, grid_p);
    auto fq = model.forward_cloud(tape, grid_q);
    auto ov = model.forward_overlap(tape, fp.e4, fq.e4);

    PairInference out;
    out.gamma_p = tape.value(ov.gamma_p).col(0);
    out.gamma_q = tape.value(ov.gamma_q).col(0);
    out.deep_active_p = fp.e4.active;
    out.deep_active_q = fq.e4.active;
    out.tau = similarity(tape.value(ov.gamma_p), tape.value(ov.gamma_q));

    KeypointExtractConfig kcfg;
    kcfg.max_count = cfg.max_keypoints;
    kcfg.overlap_threshold = overlap_filter ? cfg.overlap_threshold : 0.0;
    kcfg.deep_stride = model.config().deep_stride();
    out.keypoints_p = extract_keypoints(grid_p, fp.f1.active, tape.value(fp.score).col(0),
                                        tape.value(fp.height.heights).col(0),
                                        tape.value(fp.desc.feat), fp.e4, out.gamma_p, kcfg);
    out.keypoints_q = extract_keypoints(grid_q, fq.f1.active, tape.value(fq.score).col(0),
                                        tape.value(fq.height.heights).col(0),
                                        tape.value(fq.desc.feat), fq.e4, out.gamma_q, kcfg);
    return out;
}

RegisterOutput register_pair(const BevNetModel& model, const RunConfig& cfg,
                             const PointCloud& cloud_p, const PointCloud& cloud_q,
                             bool overlap_filter, std::uint64_t seed) {
    RegisterOutput out;
    out.inference = infer_pair(model, cfg, cloud_p, cloud_q, overlap_filter);
    out.correspondences = match(out.inference.keypoints_p, out.inference.keypoints_q);
    RansacConfig rc = cfg.ransac_config();
    rc.seed = seed;
    if (out.correspondences.size() < 3) {
        out.result.success = false;
        return out;
    }
    out.result =
        ransac_register(out.correspondences, out.inference.keypoints_p, out.inference.keypoints_q, rc);
    return out;
}

CloudEncoding encode_cloud(const BevNetModel& model, const RunConfig& cfg,
                           const PointCloud& cloud) {
    const BevGrid grid = voxelize(cloud, cfg.bev_config());
    Tape tape;
    auto f = model.forward_cloud(tape, grid);
    CloudEncoding enc;
    enc.rows = f.e4.rows;
    enc.cols = f.e4.cols;
    enc.active = f.e4.active;
    enc.features = tape.value(f.e4.feat);
    return enc;
}

double overlap_tau(const BevNetModel& model, const CloudEncoding& enc_p,
                   const CloudEncoding& enc_q) {
    Tape tape;
    SparseMap p, q;
    p.rows = enc_p.rows;
    p.cols = enc_p.cols;
    p.active = enc_p.active;
    p.feat = tape.constant(enc_p.features);
    q.rows = enc_q.rows;
    q.cols = enc_q.cols;
    q.active = enc_q.active;
    q.feat = tape.constant(enc_q.features);
    auto ov = model.forward_overlap(tape, p, q);
    return similarity(tape.value(ov.gamma_p), tape.value(ov.gamma_q));
}

}  // namespace bevnet
