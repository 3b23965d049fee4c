#include "bevnet/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace bevnet {

namespace {
constexpr char kMagic[] = "BEVNETCK1";
}

Parameter& ParamStore::create(const std::string& name, int rows, int cols) {
    for (const auto& p : params_) {
        if (p->name == name) throw ConfigError("ParamStore: duplicate parameter name " + name);
    }
    params_.push_back(std::make_unique<Parameter>(name, rows, cols));
    return *params_.back();
}

Parameter& ParamStore::get(const std::string& name) {
    for (const auto& p : params_) {
        if (p->name == name) return *p;
    }
    throw ConfigError("ParamStore: unknown parameter " + name);
}

void ParamStore::init_uniform(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (auto& p : params_) {
        if (p->value.rows() == 1) {
            // small positive bias keeps fresh pre-activations off the relu kink
            p->value.setConstant(0.01);
            continue;
        }
        const double bound =
            std::sqrt(6.0 / static_cast<double>(p->value.rows() + p->value.cols()));
        for (Eigen::Index i = 0; i < p->value.rows(); ++i)
            for (Eigen::Index j = 0; j < p->value.cols(); ++j) p->value(i, j) = bound * unit(rng);
    }
}

void ParamStore::zero_grads() {
    for (auto& p : params_) p->zero_grad();
}

void ParamStore::adam_step(const AdamConfig& cfg) {
    ++adam_t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, adam_t_);
    const double c2 = 1.0 - std::pow(cfg.beta2, adam_t_);
    for (auto& p : params_) {
        p->adam_m = cfg.beta1 * p->adam_m + (1.0 - cfg.beta1) * p->grad;
        p->adam_v = cfg.beta2 * p->adam_v.array() + (1.0 - cfg.beta2) * p->grad.array().square();
        p->value.array() -=
            cfg.lr * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + cfg.eps);
        p->zero_grad();
    }
}

std::size_t ParamStore::total_entries() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("checkpoint: truncated file");
    return v;
}

}  // namespace

void ParamStore::save(const std::string& path, std::uint64_t config_digest) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint save: cannot open " + path);
    out.write(kMagic, sizeof(kMagic) - 1);
    write_pod<std::uint64_t>(out, config_digest);
    write_pod<std::int32_t>(out, adam_t_);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
    for (const auto& p : params_) {
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
        auto dump = [&](const Mat& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) write_pod<double>(out, m(i, j));
        };
        dump(p->value);
        dump(p->adam_m);
        dump(p->adam_v);
    }
    if (!out) throw IoError("checkpoint save: write failed on " + path);
}

void ParamStore::load(const std::string& path, std::uint64_t expected_digest) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint load: cannot open " + path);
    char magic[sizeof(kMagic) - 1];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw FormatError("checkpoint load: bad magic in " + path);
    const auto digest = read_pod<std::uint64_t>(in);
    if (digest != expected_digest)
        throw FormatError("checkpoint load: config digest mismatch in " + path);
    adam_t_ = read_pod<std::int32_t>(in);
    const auto count = read_pod<std::uint32_t>(in);
    if (count != params_.size()) throw FormatError("checkpoint load: parameter count mismatch");
    for (auto& p : params_) {
        const auto nlen = read_pod<std::uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        if (!in || name != p->name)
            throw FormatError("checkpoint load: parameter name mismatch, expected " + p->name);
        const auto rows = read_pod<std::uint32_t>(in);
        const auto cols = read_pod<std::uint32_t>(in);
        if (rows != p->value.rows() || cols != p->value.cols())
            throw FormatError("checkpoint load: shape mismatch for " + p->name);
        auto slurp = [&](Mat& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_pod<double>(in);
        };
        slurp(p->value);
        slurp(p->adam_m);
        slurp(p->adam_v);
        p->zero_grad();
    }
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace bevnet
