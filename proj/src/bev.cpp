#include "bevnet/bev.hpp"

#include <cmath>

namespace bevnet {

void BevConfig::validate() const {
    if (!(extent.xmax > extent.xmin && extent.ymax > extent.ymin && extent.zmax > extent.zmin)) {
        throw ConfigError("BevConfig: extent max must exceed min on every axis");
    }
    if (rows < 1 || cols < 1 || channels < 1) {
        throw ConfigError("BevConfig: resolution must be at least 1 on every axis");
    }
    if (window < 1 || window % 2 == 0) {
        throw ConfigError("BevConfig: neighborhood window must be odd and positive");
    }
}

BevGrid::BevGrid(BevConfig config, std::vector<std::uint8_t> occupancy, std::size_t dropped_points)
    : config_(config), occupancy_(std::move(occupancy)), dropped_points_(dropped_points) {
    config_.validate();
    const std::size_t expected =
        static_cast<std::size_t>(config_.rows) * config_.cols * config_.channels;
    if (occupancy_.size() != expected) throw ShapeError("BevGrid: occupancy size mismatch");
    pillar_mask_.assign(static_cast<std::size_t>(config_.rows) * config_.cols, 0);
    for (int i = 0; i < config_.rows; ++i) {
        for (int j = 0; j < config_.cols; ++j) {
            std::uint8_t any = 0;
            for (int k = 0; k < config_.channels; ++k) any = std::max(any, at(i, j, k));
            pillar_mask_[static_cast<std::size_t>(i) * config_.cols + j] = any;
        }
    }
}

std::size_t BevGrid::occupied_pillars() const {
    std::size_t n = 0;
    for (auto v : pillar_mask_) n += v;
    return n;
}

std::vector<std::pair<int, int>> BevGrid::active_pillars() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < config_.rows; ++i) {
        for (int j = 0; j < config_.cols; ++j) {
            if (pillar(i, j)) out.emplace_back(i, j);
        }
    }
    return out;
}

std::vector<std::pair<int, double>> BevGrid::pillar_heights(int i, int j) const {
    if (i < 0 || i >= config_.rows || j < 0 || j >= config_.cols) {
        throw ShapeError("pillar_heights: index outside grid");
    }
    std::vector<std::pair<int, double>> out;
    for (int k = 0; k < config_.channels; ++k) {
        if (at(i, j, k)) out.emplace_back(k, channel_center_z(k));
    }
    return out;
}

int bin_coordinate(double v, double lo, double hi, int n) {
    if (v < lo || v > hi) return -1;
    if (v == hi) return n - 1;  // upper face clamps to the last cell
    const int idx = static_cast<int>(std::floor((v - lo) / (hi - lo) * n));
    return std::min(std::max(idx, 0), n - 1);
}

BevGrid voxelize(const PointCloud& cloud, const BevConfig& config) {
    config.validate();
    std::vector<std::uint8_t> occ(
        static_cast<std::size_t>(config.rows) * config.cols * config.channels, 0);
    std::size_t dropped = 0;
    for (const auto& p : cloud.points) {
        if (!p.allFinite()) throw NumericError("voxelize: non-finite point coordinate");
        const int i = bin_coordinate(p.x(), config.extent.xmin, config.extent.xmax, config.rows);
        const int j = bin_coordinate(p.y(), config.extent.ymin, config.extent.ymax, config.cols);
        const int k = bin_coordinate(p.z(), config.extent.zmin, config.extent.zmax, config.channels);
        if (i < 0 || j < 0 || k < 0) {
            ++dropped;
            continue;
        }
        occ[(static_cast<std::size_t>(i) * config.cols + j) * config.channels + k] = 1;
    }
    return BevGrid(config, std::move(occ), dropped);
}

}  // namespace bevnet
