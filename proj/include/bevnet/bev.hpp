#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bevnet/geometry.hpp"

namespace bevnet {

struct Extent {
    double xmin = -20, xmax = 20;
    double ymin = -20, ymax = 20;
    double zmin = -3, zmax = 3;
};

struct BevConfig {
    Extent extent;
    int rows = 64;      // H
    int cols = 64;      // W
    int channels = 16;  // C, vertical bins
    int window = 5;     // saliency neighborhood side s, odd

    void validate() const;
    double cell_dx() const { return (extent.xmax - extent.xmin) / rows; }
    double cell_dy() const { return (extent.ymax - extent.ymin) / cols; }
    double cell_dz() const { return (extent.zmax - extent.zmin) / channels; }
};

// Dense binary occupancy over a metric box. Row index i bins x, column index
// j bins y, channel k bins z.
class BevGrid {
public:
    BevGrid(BevConfig config, std::vector<std::uint8_t> occupancy, std::size_t dropped_points);

    const BevConfig& config() const { return config_; }
    std::uint8_t at(int i, int j, int k) const { return occupancy_[index(i, j, k)]; }
    // Pillar occupancy mask B*: 1 iff any channel of the pillar is occupied.
    std::uint8_t pillar(int i, int j) const { return pillar_mask_[static_cast<std::size_t>(i) * config_.cols + j]; }
    const std::vector<std::uint8_t>& pillar_mask() const { return pillar_mask_; }
    std::size_t occupied_pillars() const;
    std::size_t dropped_points() const { return dropped_points_; }

    // Sorted (i,j) list of occupied pillars.
    std::vector<std::pair<int, int>> active_pillars() const;
    // Occupied-voxel (channel, z-center) entries of one pillar, ascending channel.
    std::vector<std::pair<int, double>> pillar_heights(int i, int j) const;
    double channel_center_z(int k) const { return config_.extent.zmin + (k + 0.5) * config_.cell_dz(); }
    // Metric center of a pillar cell.
    double cell_center_x(int i) const { return config_.extent.xmin + (i + 0.5) * config_.cell_dx(); }
    double cell_center_y(int j) const { return config_.extent.ymin + (j + 0.5) * config_.cell_dy(); }

private:
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * config_.cols + j) * config_.channels + k;
    }

    BevConfig config_;
    std::vector<std::uint8_t> occupancy_;
    std::vector<std::uint8_t> pillar_mask_;
    std::size_t dropped_points_ = 0;
};

// Uniform binning; points on an interior boundary go to the higher cell, the
// upper extent face clamps to the last cell. Out-of-extent points are dropped
// (counted in BevGrid::dropped_points).
BevGrid voxelize(const PointCloud& cloud, const BevConfig& config);

// Bin index for one axis, or -1 when out of extent.
int bin_coordinate(double v, double lo, double hi, int n);

}  // namespace bevnet
