#include "bevnet/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>

#include "bevnet/params.hpp"

namespace bevnet {

namespace {

struct Field {
    const char* section;
    const char* key;
    std::variant<double*, int*, std::uint64_t*> ptr;
};

std::vector<Field> fields(RunConfig& c) {
    return {
        {"grid", "xmin", &c.xmin},
        {"grid", "xmax", &c.xmax},
        {"grid", "ymin", &c.ymin},
        {"grid", "ymax", &c.ymax},
        {"grid", "zmin", &c.zmin},
        {"grid", "zmax", &c.zmax},
        {"grid", "rows", &c.rows},
        {"grid", "cols", &c.cols},
        {"grid", "channels", &c.channels},
        {"grid", "window", &c.window},
        {"model", "c1", &c.c1},
        {"model", "c2", &c.c2},
        {"model", "c3", &c.c3},
        {"model", "c4", &c.c4},
        {"model", "desc_dim", &c.desc_dim},
        {"loss", "delta_p", &c.delta_p},
        {"loss", "delta_n", &c.delta_n},
        {"loss", "circle_scale", &c.circle_scale},
        {"loss", "w_desc", &c.w_desc},
        {"loss", "w_det", &c.w_det},
        {"loss", "w_reg", &c.w_reg},
        {"loss", "w_bce", &c.w_bce},
        {"loss", "w_sg", &c.w_sg},
        {"loss", "max_anchors", &c.max_anchors},
        {"loss", "max_negatives", &c.max_negatives},
        {"loss", "pos_radius_cells", &c.pos_radius_cells},
        {"loss", "safe_radius_factor", &c.safe_radius_factor},
        {"loss", "sg_max_anchors", &c.sg_max_anchors},
        {"loss", "sg_max_negatives", &c.sg_max_negatives},
        {"keypoints", "max_keypoints", &c.max_keypoints},
        {"keypoints", "overlap_threshold", &c.overlap_threshold},
        {"ransac", "ransac_iterations", &c.ransac_iterations},
        {"ransac", "inlier_radius", &c.inlier_radius},
        {"ransac", "early_exit_ratio", &c.early_exit_ratio},
        {"train", "lr", &c.lr},
        {"train", "beta1", &c.beta1},
        {"train", "beta2", &c.beta2},
        {"train", "adam_eps", &c.adam_eps},
        {"train", "steps", &c.steps},
        {"train", "checkpoint_every", &c.checkpoint_every},
        {"train", "seed", &c.seed},
        {"data", "scene_extent", &c.scene_extent},
        {"data", "scan_range", &c.scan_range},
        {"data", "train_pairs", &c.train_pairs},
        {"data", "eval_pairs", &c.eval_pairs},
        {"data", "max_pair_distance_frac", &c.max_pair_distance_frac},
        {"eval", "rte_max", &c.rte_max},
        {"eval", "rre_max", &c.rre_max},
        {"eval", "exclusion_window", &c.exclusion_window},
        {"eval", "success_radius", &c.success_radius},
    };
}

std::string render(const Field& f) {
    char buf[40];
    if (auto* d = std::get_if<double*>(&f.ptr)) {
        std::snprintf(buf, sizeof(buf), "%.17g", **d);
    } else if (auto* i = std::get_if<int*>(&f.ptr)) {
        std::snprintf(buf, sizeof(buf), "%d", **i);
    } else {
        std::snprintf(buf, sizeof(buf), "%llu",
                      static_cast<unsigned long long>(**std::get_if<std::uint64_t*>(&f.ptr)));
    }
    return buf;
}

void assign(const Field& f, const std::string& value) {
    try {
        if (auto* d = std::get_if<double*>(&f.ptr)) {
            std::size_t used = 0;
            **d = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } else if (auto* i = std::get_if<int*>(&f.ptr)) {
            std::size_t used = 0;
            **i = std::stoi(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } else {
            **std::get_if<std::uint64_t*>(&f.ptr) = std::stoull(value);
        }
    } catch (const std::exception&) {
        throw ConfigError(std::string("config: bad value for ") + f.section + "." + f.key + ": " +
                          value);
    }
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::desk() { return RunConfig{}; }

RunConfig RunConfig::full_scale() {
    RunConfig c;
    c.xmin = -50;
    c.xmax = 50;
    c.ymin = -50;
    c.ymax = 50;
    c.zmin = -3;
    c.zmax = 13;
    c.rows = 256;
    c.cols = 256;
    c.channels = 32;
    c.c1 = 64;
    c.c2 = 128;
    c.c3 = 256;
    c.c4 = 512;
    c.desc_dim = 32;
    c.scene_extent = 100;
    c.scan_range = 80;
    c.exclusion_window = 100;
    c.success_radius = 10;
    return c;
}

void RunConfig::validate() const {
    bev_config().validate();
    circle_params().validate();
    if (c1 < 1 || c2 < 1 || c3 < 1 || c4 < 1 || desc_dim < 2)
        throw ConfigError("config: channel widths must be positive (desc_dim at least 2)");
    if (rows % 8 != 0 || cols % 8 != 0)
        throw ConfigError("config: grid rows/cols must be divisible by 8 (three downsamples)");
    if (pos_radius_cells <= 0 || safe_radius_factor <= 1)
        throw ConfigError("config: require pos_radius_cells > 0 and safe_radius_factor > 1");
    if (max_anchors < 1 || max_negatives < 1 || sg_max_anchors < 1 || sg_max_negatives < 1)
        throw ConfigError("config: sampler counts must be positive");
    if (ransac_iterations < 1 || inlier_radius <= 0)
        throw ConfigError("config: invalid RANSAC settings");
    if (lr <= 0 || steps < 0 || checkpoint_every < 1)
        throw ConfigError("config: invalid training settings");
    if (max_keypoints < 0 || overlap_threshold < 0)
        throw ConfigError("config: invalid keypoint settings");
    if (rte_max <= 0 || rre_max <= 0 || exclusion_window < 0 || success_radius <= 0)
        throw ConfigError("config: invalid evaluation settings");
}

std::string RunConfig::serialize() const {
    auto& self = const_cast<RunConfig&>(*this);
    std::ostringstream out;
    std::string current;
    for (const auto& f : fields(self)) {
        if (f.section != current) {
            if (!current.empty()) out << "\n";
            out << "[" << f.section << "]\n";
            current = f.section;
        }
        out << f.key << " = " << render(f) << "\n";
    }
    return out.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    auto fs = fields(c);
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config: malformed section header at line " +
                                  std::to_string(lineno));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool matched = false;
        for (const auto& f : fs) {
            if (section == f.section && key == f.key) {
                assign(f, value);
                matched = true;
                break;
            }
        }
        if (!matched)
            throw ConfigError("config: unknown key " + section + "." + key + " at line " +
                              std::to_string(lineno));
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("config: cannot open " + path + " for writing");
    out << serialize();
    if (!out) throw IoError("config: write failed on " + path);
}

std::uint64_t RunConfig::digest() const {
    std::ostringstream ss;
    ss << bev_config().rows << "," << bev_config().cols << "," << channels << ";"
       << model_config().signature();
    return fnv1a(ss.str());
}

BevConfig RunConfig::bev_config() const {
    BevConfig b;
    b.extent = {xmin, xmax, ymin, ymax, zmin, zmax};
    b.rows = rows;
    b.cols = cols;
    b.channels = channels;
    b.window = window;
    return b;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.input_channels = channels;
    m.channels = {c1, c2, c3, c4};
    m.desc_dim = desc_dim;
    m.saliency_window = window;
    return m;
}

CircleParams RunConfig::circle_params() const { return {delta_p, delta_n, circle_scale}; }

LossWeights RunConfig::loss_weights() const { return {w_desc, w_det, w_reg, w_bce, w_sg}; }

RansacConfig RunConfig::ransac_config() const {
    RansacConfig r;
    r.max_iterations = ransac_iterations;
    r.inlier_radius = inlier_radius;
    r.early_exit_ratio = early_exit_ratio;
    return r;
}

LossRadii RunConfig::loss_radii() const {
    const double rp = pos_radius_cells * fine_cell();
    return {rp, safe_radius_factor * rp};
}

LossRadii RunConfig::deep_loss_radii() const {
    // half a deep cell: two deep cells are positives iff their footprints
    // correspond, not merely lie in the same neighborhood
    const double rp = 0.5 * fine_cell() * model_config().deep_stride();
    return {rp, safe_radius_factor * rp};
}

}  // namespace bevnet
