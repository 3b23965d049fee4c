// bevnet: single-binary operator entry points for the BEV registration and
// loop-closure pipeline. Subcommands: gen, train, register, eval, verify.
// Exit codes: 0 success, 1 usage, 2 data error, 3 verification or
// registration failure.
#include <CLI11.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "bevnet/kitti_io.hpp"
#include "bevnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bevnet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitFailure = 3;

// splitmix64 of root and salt; decorrelates the per-step / per-pair streams
// that all flow from the one root seed.
std::uint64_t mix_seed(std::uint64_t root, std::uint64_t salt) {
    std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

SceneParams scene_params(const RunConfig& cfg) {
    SceneParams sp;
    sp.extent_x = sp.extent_y = cfg.scene_extent;
    const double area = (cfg.scene_extent * cfg.scene_extent) / (40.0 * 40.0);
    sp.wall_count = std::max(1, static_cast<int>(std::lround(sp.wall_count * area)));
    sp.pole_count = std::max(1, static_cast<int>(std::lround(sp.pole_count * area)));
    sp.clutter_count = std::max(1, static_cast<int>(std::lround(sp.clutter_count * area)));
    return sp;
}

PairParams pair_params(const RunConfig& cfg) {
    PairParams pp;
    pp.scan.range_limit = cfg.scan_range;
    return pp;
}

std::string format_line(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// gen

int cmd_gen(const RunConfig& cfg, const std::string& out_dir, int loop_frames) {
    const fs::path out(out_dir);
    fs::create_directories(out / "clouds");
    const SceneParams sp = scene_params(cfg);
    const PairParams pp = pair_params(cfg);
    const double max_dist = cfg.max_pair_distance_frac * cfg.scene_extent;

    auto make_split = [&](const std::string& name, int count, std::uint64_t salt) {
        std::vector<ManifestEntry> entries;
        for (int i = 0; i < count; ++i) {
            const std::uint64_t s = mix_seed(cfg.seed, salt + static_cast<std::uint64_t>(i));
            std::mt19937_64 rng(s);
            const double dist = std::uniform_real_distribution<double>(0.0, max_dist)(rng);
            const Scene scene = generate_scene(s, sp);
            const ScanPair pair = make_pair(scene, sp, dist, s + 1, pp);
            ManifestEntry e;
            e.path_p = (out / "clouds" / format_line("%s_%04d_p.bin", name.c_str(), i)).string();
            e.path_q = (out / "clouds" / format_line("%s_%04d_q.bin", name.c_str(), i)).string();
            e.gt = pair.gt;
            e.distance = pair.distance;
            save_kitti_bin(e.path_p, pair.cloud_p);
            save_kitti_bin(e.path_q, pair.cloud_q);
            entries.push_back(e);
        }
        save_manifest((out / (name + ".txt")).string(), entries);
        std::fprintf(stderr, "gen: wrote %zu %s pairs\n", entries.size(), name.c_str());
    };
    make_split("train", cfg.train_pairs, 0x100000);
    make_split("eval", cfg.eval_pairs, 0x200000);

    if (loop_frames > 0) {
        fs::create_directories(out / "loop");
        const LoopCorpus corpus = make_loop_corpus(sp, loop_frames, pp.sensor_height);
        const Scene scene = generate_scene(mix_seed(cfg.seed, 0x300000), corpus.scene_params);
        for (int i = 0; i < loop_frames; ++i) {
            const PointCloud frame = simulate_scan(scene, corpus.poses[i], pp.scan);
            save_kitti_bin((out / "loop" / format_line("frame_%04d.bin", i)).string(), frame);
        }
        save_poses((out / "loop" / "poses.txt").string(), corpus.poses);
        std::fprintf(stderr, "gen: wrote %d loop frames\n", loop_frames);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// train

ScanPair load_pair(const ManifestEntry& e) {
    ScanPair pair;
    pair.cloud_p = load_kitti_bin(e.path_p);
    pair.cloud_q = load_kitti_bin(e.path_q);
    pair.gt = e.gt;
    pair.distance = e.distance;
    return pair;
}

int cmd_train(const RunConfig& cfg, const std::string& manifest_path, const std::string& ckpt_path,
              const std::string& log_path, bool resume) {
    const auto entries = load_manifest(manifest_path);
    if (entries.empty()) throw EmptyInputError("train: empty manifest " + manifest_path);

    BevNetModel model(cfg.model_config());
    int start = 0;
    if (resume && fs::exists(ckpt_path)) {
        model.params().load(ckpt_path, cfg.digest());
        start = model.params().adam_steps();
        std::fprintf(stderr, "train: resuming at step %d\n", start);
    } else {
        model.params().init_uniform(cfg.seed);
    }
    if (start >= cfg.steps) {
        std::fprintf(stderr, "train: checkpoint already at %d >= %d steps\n", start, cfg.steps);
        return 0;
    }

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, start > 0 ? std::ios::app : std::ios::trunc);
        if (!log) throw IoError("train: cannot open log " + log_path);
        if (start == 0) log << "step desc det reg bce sg total\n";
    }

    const AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    const auto t0 = std::chrono::steady_clock::now();
    for (int s = start; s < cfg.steps; ++s) {
        const ScanPair pair = load_pair(entries[static_cast<std::size_t>(s) % entries.size()]);
        LossReport r;
        try {
            r = train_pair_step(model, cfg, pair, mix_seed(cfg.seed, 0x400000 + static_cast<std::uint64_t>(s)));
        } catch (const NumericError& err) {
            std::fprintf(stderr, "train: aborting at step %d: %s\n", s, err.what());
            return kExitFailure;
        } catch (const NoOverlapError&) {
            if (log) log << format_line("%d skipped no-overlap\n", s);
            continue;
        }
        model.params().adam_step(adam);
        if (log)
            log << format_line("%d %.17g %.17g %.17g %.17g %.17g %.17g\n", s, r.desc, r.det, r.reg,
                               r.bce, r.sg, r.total);
        const bool checkpoint_due = (s + 1) % cfg.checkpoint_every == 0 || s + 1 == cfg.steps;
        if (checkpoint_due) model.params().save(ckpt_path, cfg.digest());
        if ((s + 1) % 25 == 0 || s + 1 == cfg.steps)
            std::fprintf(stderr, "train: step %d/%d total=%.4f (%.1fs)\n", s + 1, cfg.steps,
                         r.total, elapsed_s(t0));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// register

int cmd_register(const RunConfig& cfg, const std::string& ckpt_path, const std::string& path_p,
                 const std::string& path_q, bool no_filter, const std::string& gt_path,
                 std::uint64_t seed) {
    BevNetModel model(cfg.model_config());
    model.params().load(ckpt_path, cfg.digest());
    const PointCloud cloud_p = load_kitti_bin(path_p);
    const PointCloud cloud_q = load_kitti_bin(path_q);

    const RegisterOutput out = register_pair(model, cfg, cloud_p, cloud_q, !no_filter, seed);
    std::printf("keypoints_p %zu\nkeypoints_q %zu\ncorrespondences %zu\n",
                out.inference.keypoints_p.size(), out.inference.keypoints_q.size(),
                out.correspondences.size());
    std::printf("tau %.9g\n", out.inference.tau);
    std::printf("success %d\ninliers %zu\ninlier_ratio %.9g\niterations %d\n",
                out.result.success ? 1 : 0, out.result.inliers.size(), out.result.inlier_ratio,
                out.result.iterations);
    const auto m = out.result.transform.matrix34();
    for (int r = 0; r < 3; ++r)
        std::printf("T %.9g %.9g %.9g %.9g\n", m(r, 0), m(r, 1), m(r, 2), m(r, 3));

    if (!gt_path.empty()) {
        const auto poses = load_poses(gt_path);
        if (poses.empty()) throw FormatError("register: no pose in " + gt_path);
        const auto [rte, rre] = pose_errors(out.result.transform, poses.front());
        std::printf("rte %.9g\nrre %.9g\n", rte, rre);
    }
    return out.result.success ? 0 : kExitFailure;
}

// ---------------------------------------------------------------------------
// eval

struct Bucket {
    double lo = 0, hi = 0;
    std::vector<int> pair_indices;
};

std::vector<Bucket> distance_buckets(const std::vector<ManifestEntry>& entries, double max_dist) {
    std::vector<Bucket> buckets(3);
    for (int b = 0; b < 3; ++b) {
        buckets[b].lo = max_dist * b / 3.0;
        buckets[b].hi = max_dist * (b + 1) / 3.0;
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const int b = std::min(2, static_cast<int>(3.0 * entries[i].distance / max_dist));
        buckets[b].pair_indices.push_back(static_cast<int>(i));
    }
    return buckets;
}

std::string mean_or_undef(const std::vector<double>& values) {
    if (values.empty()) return "undef";
    double sum = 0;
    for (const double v : values) sum += v;
    return format_line("%.9g", sum / static_cast<double>(values.size()));
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path, const std::string& protocol,
             const std::string& manifest_path, const std::string& poses_path,
             const std::string& frames_dir, const std::string& out_path, bool no_filter,
             bool oracle) {
    BevNetModel model(cfg.model_config());
    model.params().load(ckpt_path, cfg.digest());
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw IoError("eval: cannot open " + out_path);
    const auto t0 = std::chrono::steady_clock::now();

    if (protocol == "loopclosure") {
        const auto poses = load_poses(poses_path);
        std::vector<CloudEncoding> encodings;
        for (std::size_t i = 0; i < poses.size(); ++i) {
            const auto frame = (fs::path(frames_dir) / format_line("frame_%04zu.bin", i)).string();
            encodings.push_back(encode_cloud(model, cfg, load_kitti_bin(frame)));
            if ((i + 1) % 10 == 0)
                std::fprintf(stderr, "eval: encoded %zu/%zu frames (%.1fs)\n", i + 1, poses.size(),
                             elapsed_s(t0));
        }
        RetrievalProtocol proto{cfg.exclusion_window, cfg.success_radius};
        auto score = [&](int a, int b) { return overlap_tau(model, encodings[a], encodings[b]); };
        const RetrievalResult res = recall_at_1(poses, score, proto);
        out << "protocol loopclosure\n";
        out << format_line("frames %zu queries %d correct %d recall_at_1 %.9g\n", poses.size(),
                           res.queries, res.correct, res.recall_at_1());
        return 0;
    }

    const auto entries = load_manifest(manifest_path);
    if (entries.empty()) throw EmptyInputError("eval: empty manifest " + manifest_path);
    const double max_dist = cfg.max_pair_distance_frac * cfg.scene_extent;
    const auto buckets = distance_buckets(entries, max_dist);
    const int deep_stride = model.config().deep_stride();

    if (protocol == "overlap") {
        std::vector<OverlapMetrics> per_pair(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const ScanPair pair = load_pair(entries[i]);
            const BevGrid grid_p = voxelize(pair.cloud_p, cfg.bev_config());
            const BevGrid grid_q = voxelize(pair.cloud_q, cfg.bev_config());
            const OverlapLabels labels = make_overlap_labels(grid_p, pair.cloud_p, grid_q,
                                                             pair.cloud_q, pair.gt, deep_stride);
            Eigen::VectorXd pred_p, pred_q;
            if (oracle) {
                pred_p = labels.for_p;
                pred_q = labels.for_q;
            } else {
                const PairInference inf = infer_pair(model, cfg, pair.cloud_p, pair.cloud_q, false);
                pred_p = inf.gamma_p;
                pred_q = inf.gamma_q;
            }
            Eigen::VectorXd pred(pred_p.size() + pred_q.size()), lab(pred.size());
            pred << pred_p, pred_q;
            lab << labels.for_p, labels.for_q;
            per_pair[i] = overlap_metrics(pred, lab, cfg.overlap_threshold);
            if ((i + 1) % 10 == 0)
                std::fprintf(stderr, "eval: %zu/%zu pairs (%.1fs)\n", i + 1, entries.size(),
                             elapsed_s(t0));
        }
        out << "protocol overlap\n";
        out << "bucket lo hi pairs iou precision recall\n";
        auto row = [&](const std::string& name, double lo, double hi, const std::vector<int>& idx) {
            std::vector<double> iou, prec, rec;
            for (const int i : idx) {
                if (const auto v = per_pair[i].iou()) iou.push_back(*v);
                if (const auto v = per_pair[i].precision()) prec.push_back(*v);
                if (const auto v = per_pair[i].recall()) rec.push_back(*v);
            }
            out << format_line("%s %.9g %.9g %zu %s %s %s\n", name.c_str(), lo, hi, idx.size(),
                               mean_or_undef(iou).c_str(), mean_or_undef(prec).c_str(),
                               mean_or_undef(rec).c_str());
        };
        for (const auto& b : buckets)
            row("bucket", b.lo, b.hi, b.pair_indices);
        std::vector<int> all(entries.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        row("overall", 0.0, max_dist, all);
        return 0;
    }

    if (protocol == "registration") {
        std::vector<PairOutcome> per_pair(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const ScanPair pair = load_pair(entries[i]);
            PairOutcome& o = per_pair[i];
            if (oracle) {
                o.registered = true;
                std::tie(o.rte, o.rre) = pose_errors(pair.gt, pair.gt);
            } else {
                try {
                    const RegisterOutput r = register_pair(model, cfg, pair.cloud_p, pair.cloud_q,
                                                           !no_filter,
                                                           mix_seed(cfg.seed, 0x500000 + i));
                    o.registered = r.result.success;
                    if (o.registered)
                        std::tie(o.rte, o.rre) = pose_errors(r.result.transform, pair.gt);
                } catch (const EmptyInputError&) {
                    o.registered = false;
                }
            }
            if ((i + 1) % 10 == 0)
                std::fprintf(stderr, "eval: %zu/%zu pairs (%.1fs)\n", i + 1, entries.size(),
                             elapsed_s(t0));
        }
        out << "protocol registration\n";
        out << "bucket lo hi pairs rr mean_rte mean_rre\n";
        auto row = [&](const std::string& name, double lo, double hi, const std::vector<int>& idx) {
            if (idx.empty()) {
                out << format_line("%s %.9g %.9g 0 undef undef undef\n", name.c_str(), lo, hi);
                return;
            }
            std::vector<PairOutcome> outcomes;
            std::vector<double> rte, rre;
            for (const int i : idx) {
                outcomes.push_back(per_pair[i]);
                if (per_pair[i].registered) {
                    rte.push_back(per_pair[i].rte);
                    rre.push_back(per_pair[i].rre);
                }
            }
            out << format_line("%s %.9g %.9g %zu %.9g %s %s\n", name.c_str(), lo, hi, idx.size(),
                               registration_recall(outcomes, cfg.rte_max, cfg.rre_max),
                               mean_or_undef(rte).c_str(), mean_or_undef(rre).c_str());
        };
        for (const auto& b : buckets)
            row("bucket", b.lo, b.hi, b.pair_indices);
        std::vector<int> all(entries.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        row("overall", 0.0, max_dist, all);
        return 0;
    }

    throw ConfigError("eval: unknown protocol " + protocol);
}

// ---------------------------------------------------------------------------
// verify

// Direct (unpooled) saliency: softplus of each channel's deviation from the
// truncated-window mean over active neighbors, written out longhand as an
// independent oracle for the pooled implementation.
Mat saliency_direct(const SparseMap& d, const Mat& values, int window) {
    const int half = window / 2;
    Mat out(values.rows(), values.cols());
    for (int n = 0; n < d.count(); ++n) {
        const auto [ci, cj] = d.active[n];
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(values.cols());
        int hits = 0;
        for (int di = -half; di <= half; ++di)
            for (int dj = -half; dj <= half; ++dj) {
                if (!d.in_bounds(ci + di, cj + dj)) continue;
                const int r = d.find(ci + di, cj + dj);
                if (r < 0) continue;
                mean += values.row(r);
                ++hits;
            }
        mean /= hits;  // the cell itself is always a hit
        for (int c = 0; c < values.cols(); ++c)
            out(n, c) = std::log1p(std::exp(-std::abs(values(n, c) - mean(c)))) +
                        std::max(values(n, c) - mean(c), 0.0);
    }
    return out;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    return q.toRotationMatrix();
}

bool verify_saliency(std::mt19937_64& rng) {
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int rows = std::uniform_int_distribution<int>(4, 32)(rng);
        const int cols = std::uniform_int_distribution<int>(4, 32)(rng);
        const int channels = std::uniform_int_distribution<int>(1, 16)(rng);
        const int window = trial % 2 == 0 ? 3 : 5;
        SparseMap d;
        d.rows = rows;
        d.cols = cols;
        std::uniform_real_distribution<double> coin(0, 1), value(-2, 2);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j)
                if (coin(rng) < 0.35) d.active.emplace_back(i, j);
        if (d.active.empty()) d.active.emplace_back(0, 0);
        Mat values(d.count(), channels);
        for (int i = 0; i < values.rows(); ++i)
            for (int j = 0; j < values.cols(); ++j) values(i, j) = value(rng);
        Tape tape;
        d.feat = tape.constant(values);
        const Mat pooled = tape.value(spatial_saliency(tape, d, window).feat);
        const Mat direct = saliency_direct(d, values, window);
        worst = std::max(worst, (pooled - direct).cwiseAbs().maxCoeff() /
                                    std::max(1e-300, direct.cwiseAbs().maxCoeff()));
    }
    std::printf("%s saliency pooled vs direct, 100 maps (worst rel %.3g)\n",
                worst <= 1e-12 ? "PASS" : "FAIL", worst);
    return worst <= 1e-12;
}

RunConfig gradient_config() {
    RunConfig c = RunConfig::desk();
    c.xmin = c.ymin = -8;
    c.xmax = c.ymax = 8;
    c.zmin = -0.5;
    c.zmax = 4.5;
    c.rows = c.cols = 16;
    c.channels = 2;
    c.window = 3;
    c.c1 = c.c2 = c.c3 = c.c4 = 2;
    c.desc_dim = 2;
    c.max_anchors = 16;
    c.max_negatives = 4;
    c.sg_max_anchors = 4;
    c.sg_max_negatives = 2;
    c.scene_extent = 16;
    c.scan_range = 12;
    return c;
}

bool verify_gradients() {
    const RunConfig cfg = gradient_config();
    SceneParams sp = scene_params(cfg);
    sp.wall_count = 4;
    sp.pole_count = 6;
    sp.clutter_count = 3;
    PairParams pp = pair_params(cfg);
    pp.scan.azimuth_bins = 180;
    pp.scan.elevation_bins = 24;
    pp.center_jitter = 1.0;
    const Scene scene = generate_scene(13, sp);
    const ScanPair pair = make_pair(scene, sp, 2.0, 113, pp);

    BevNetModel model(cfg.model_config());
    model.params().init_uniform(21);
    model.params().zero_grads();
    TrainPlan plan;
    train_pair_step(model, cfg, pair, 17, &plan);
    auto probe_loss = [&] {
        BevNetModel probe(cfg.model_config());
        for (std::size_t i = 0; i < model.params().all().size(); ++i)
            probe.params().all()[i]->value = model.params().all()[i]->value;
        return train_pair_step(probe, cfg, pair, plan).total;
    };
    double worst = 0;
    for (const auto& p : model.params().all()) {
        for (Eigen::Index i = 0; i < p->value.rows(); ++i)
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
                const double saved = p->value(i, j);
                const double step = 1e-5 * std::max(1.0, std::abs(saved));
                p->value(i, j) = saved + step;
                const double up = probe_loss();
                p->value(i, j) = saved - step;
                const double down = probe_loss();
                p->value(i, j) = saved;
                const double numeric = (up - down) / (2 * step);
                const double denom =
                    std::max({std::abs(numeric), std::abs(p->grad(i, j)), 1e-6});
                worst = std::max(worst, std::abs(numeric - p->grad(i, j)) / denom);
            }
    }
    std::printf("%s composed-model finite differences (worst rel %.3g)\n",
                worst < 5e-4 ? "PASS" : "FAIL", worst);
    return worst < 5e-4;
}

bool verify_kabsch(std::mt19937_64& rng) {
    double worst_rot = 0, worst_trans = 0;
    std::uniform_real_distribution<double> coord(-10, 10);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = std::uniform_int_distribution<int>(3, 50)(rng);
        const RigidTransform gt(random_rotation(rng),
                                {coord(rng), coord(rng), coord(rng)});
        std::vector<Eigen::Vector3d> q(n), p(n);
        for (int i = 0; i < n; ++i) {
            q[i] = {coord(rng), coord(rng), coord(rng)};
            p[i] = gt.apply(q[i]);
        }
        RigidTransform est;
        try {
            est = kabsch(p, q);
        } catch (const DegenerateError&) {
            continue;  // a random collinear draw is legitimately rejected
        }
        worst_rot = std::max(worst_rot, (est.rotation() - gt.rotation()).norm());
        worst_trans = std::max(worst_trans, (est.translation() - gt.translation()).norm());
    }
    const bool ok = worst_rot <= 1e-9 && worst_trans <= 1e-9;
    std::printf("%s kabsch 1000 noiseless instances (rot %.3g, trans %.3g)\n",
                ok ? "PASS" : "FAIL", worst_rot, worst_trans);
    return ok;
}

bool verify_ransac(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> coord(-15, 15);
    std::normal_distribution<double> noise(0, 0.05);
    int good = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        const RigidTransform gt(random_rotation(rng), {coord(rng), coord(rng), coord(rng)});
        std::vector<Keypoint> kp, kq;
        CorrespondenceSet cs;
        for (int i = 0; i < 100; ++i) {
            Keypoint b;
            b.position = {coord(rng), coord(rng), coord(rng)};
            Keypoint a;
            if (i < 30)
                a.position = gt.apply(b.position) +
                             Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
            else
                a.position = {coord(rng), coord(rng), coord(rng)};
            kp.push_back(a);
            kq.push_back(b);
            cs.push_back({i, i, 0.0});
        }
        RansacConfig rc;
        rc.max_iterations = 10000;
        rc.inlier_radius = 0.3;
        rc.seed = 1000 + static_cast<std::uint64_t>(trial);
        const RegistrationResult res = ransac_register(cs, kp, kq, rc);
        if (!res.success) continue;
        const auto [rte, rre] = pose_errors(res.transform, gt);
        if (rte < 0.1 && rre < 0.5) ++good;
    }
    std::printf("%s ransac 30%%-inlier recovery (%d/%d trials)\n", good >= trials - 1 ? "PASS" : "FAIL",
                good, trials);
    return good >= trials - 1;
}

bool verify_matching(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const int np = std::uniform_int_distribution<int>(1, 40)(rng);
        const int nq = std::uniform_int_distribution<int>(1, 40)(rng);
        const int dim = 4;
        auto draw = [&](int n) {
            std::vector<Keypoint> kps(n);
            for (auto& k : kps) {
                k.descriptor = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return unit(rng); });
                k.descriptor.normalize();
            }
            return kps;
        };
        const auto kp = draw(np), kq = draw(nq);
        const CorrespondenceSet cs = match(kp, kq);
        // exhaustive mutual-nearest check against the returned set
        std::vector<std::pair<int, int>> oracle;
        for (int i = 0; i < np; ++i) {
            int best_j = 0;
            for (int j = 1; j < nq; ++j)
                if ((kp[i].descriptor - kq[j].descriptor).norm() <
                    (kp[i].descriptor - kq[best_j].descriptor).norm())
                    best_j = j;
            int best_i = 0;
            for (int i2 = 1; i2 < np; ++i2)
                if ((kp[i2].descriptor - kq[best_j].descriptor).norm() <
                    (kp[best_i].descriptor - kq[best_j].descriptor).norm())
                    best_i = i2;
            if (best_i == i) oracle.emplace_back(i, best_j);
        }
        if (oracle.size() != cs.size()) {
            std::printf("FAIL mutual-nn matching vs exhaustive oracle (size %zu vs %zu)\n",
                        cs.size(), oracle.size());
            return false;
        }
        for (std::size_t k = 0; k < cs.size(); ++k)
            if (oracle[k] != std::make_pair(cs[k].index_p, cs[k].index_q)) {
                std::printf("FAIL mutual-nn matching vs exhaustive oracle (pair %zu)\n", k);
                return false;
            }
    }
    std::printf("PASS mutual-nn matching vs exhaustive oracle (20 trials)\n");
    return true;
}

int cmd_verify() {
    std::mt19937_64 rng(20260824);
    bool ok = true;
    ok &= verify_saliency(rng);
    ok &= verify_kabsch(rng);
    ok &= verify_ransac(rng);
    ok &= verify_matching(rng);
    ok &= verify_gradients();
    std::printf("%s\n", ok ? "verify: all suites passed" : "verify: FAILURES above");
    return ok ? 0 : kExitFailure;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg = path.empty() ? RunConfig::desk() : RunConfig::load_file(path);
    if (!overrides.empty()) {
        // overrides are "section.key=value" lines applied on top of the file
        std::string text = cfg.serialize();
        for (const auto& o : overrides) {
            const auto dot = o.find('.');
            const auto eq = o.find('=');
            if (dot == std::string::npos || eq == std::string::npos || eq < dot)
                throw ConfigError("override must look like section.key=value: " + o);
            text += "\n[" + o.substr(0, dot) + "]\n" + o.substr(dot + 1, eq - dot - 1) + " = " +
                    o.substr(eq + 1) + "\n";
        }
        cfg = RunConfig::parse(text);
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BEV keypoint registration and loop-closure pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "config file (desk preset when omitted)");
    app.add_option("--set", overrides, "override as section.key=value, repeatable");

    auto* gen = app.add_subcommand("gen", "generate scenes, scan pairs and manifests");
    std::string out_dir;
    int loop_frames = 0;
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--loop-frames", loop_frames, "also write an out-and-back loop corpus");

    auto* train = app.add_subcommand("train", "train from a pair manifest");
    std::string manifest_path, ckpt_path, log_path;
    bool resume = false;
    train->add_option("--manifest", manifest_path, "pair manifest")->required();
    train->add_option("--checkpoint", ckpt_path, "checkpoint output path")->required();
    train->add_option("--log", log_path, "per-step loss log path");
    train->add_flag("--resume", resume, "continue from the checkpoint if present");

    auto* reg = app.add_subcommand("register", "register two clouds");
    std::string path_p, path_q, gt_path;
    bool no_filter = false;
    std::uint64_t reg_seed = 0;
    reg->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    reg->add_option("-p,--cloud-p", path_p, "target cloud (.bin)")->required();
    reg->add_option("-q,--cloud-q", path_q, "source cloud (.bin)")->required();
    reg->add_flag("--no-overlap-filter", no_filter, "keep keypoints outside the estimated overlap");
    reg->add_option("--gt", gt_path, "pose file with the ground-truth Q->P transform");
    reg->add_option("--seed", reg_seed, "ransac seed");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over a manifest");
    std::string protocol = "registration", poses_path, frames_dir, metrics_path;
    bool oracle = false;
    eval->add_option("--checkpoint", ckpt_path, "trained checkpoint")->required();
    eval->add_option("--protocol", protocol, "overlap | registration | loopclosure")->required();
    eval->add_option("--manifest", manifest_path, "pair manifest (overlap/registration)");
    eval->add_option("--poses", poses_path, "pose file (loopclosure)");
    eval->add_option("--frames", frames_dir, "frame directory (loopclosure)");
    eval->add_option("--out", metrics_path, "metrics output file")->required();
    eval->add_flag("--no-overlap-filter", no_filter, "disable overlap filtering in registration");
    eval->add_flag("--oracle", oracle, "inject ground truth instead of model outputs");

    auto* verify = app.add_subcommand("verify", "run the property suites");
    (void)verify;

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        const RunConfig cfg = load_config(config_path, overrides);
        if (gen->parsed()) return cmd_gen(cfg, out_dir, loop_frames);
        if (train->parsed()) return cmd_train(cfg, manifest_path, ckpt_path, log_path, resume);
        if (reg->parsed())
            return cmd_register(cfg, ckpt_path, path_p, path_q, no_filter, gt_path, reg_seed);
        if (eval->parsed())
            return cmd_eval(cfg, ckpt_path, protocol, manifest_path, poses_path, frames_dir,
                            metrics_path, no_filter, oracle);
        if (verify->parsed()) return cmd_verify();
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const EmptyInputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}
