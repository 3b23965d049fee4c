#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "bevnet/tape.hpp"

namespace bevnet {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Ordered collection of named Parameters; owns them for the lifetime of the
// model. Names are unique and stable, they key the checkpoint format.
class ParamStore {
public:
    Parameter& create(const std::string& name, int rows, int cols);
    Parameter& get(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }

    // Glorot-uniform over +-sqrt(6/(fan_in+fan_out)); bias rows (rows==1) are
    // set to a small positive constant so no relu starts exactly at its kink.
    void init_uniform(std::uint64_t seed);
    void zero_grads();
    // Standard Adam with bias correction; clears gradients afterwards.
    void adam_step(const AdamConfig& cfg);
    int adam_steps() const { return adam_t_; }

    std::size_t total_entries() const;

    // Versioned binary checkpoint: magic, config digest, adam step count, then
    // named blobs (name length, name, rows, cols, row-major float64 values).
    void save(const std::string& path, std::uint64_t config_digest) const;
    void load(const std::string& path, std::uint64_t expected_digest);

private:
    std::vector<std::unique_ptr<Parameter>> params_;
    int adam_t_ = 0;
};

// FNV-1a over a byte string; used as the checkpoint config digest.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace bevnet
