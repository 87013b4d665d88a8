#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "jvlgs/autograd.hpp"

namespace jvlgs {

using ag::Var;

/// Named, trainable parameters. Names are hierarchical (`tsm.2.gsa.n2.weight`)
/// and iteration order is lexicographic. Each parameter's initial values
/// depend only on (seed, name), so adding or dropping a module leaves the
/// others untouched.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    /// Uniform(-bound, bound) initialization.
    Var& uniform(const std::string& name, Shape shape, double bound) {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (unsigned char c : name) h = (h ^ c) * 1099511628211ull;
        std::mt19937_64 rng(seed_ ^ h);
        Tensor t(std::move(shape));
        for (auto& v : t.values()) v = bound * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
        return add(name, std::move(t));
    }

    Var& zeros(const std::string& name, Shape shape) { return add(name, Tensor(std::move(shape))); }

    Var& add(const std::string& name, Tensor value) {
        require(!params_.contains(name), ErrorKind::InvalidArgument, "duplicate parameter " + name);
        auto [it, ok] = params_.emplace(name, Var(std::move(value), true));
        return it->second;
    }

    bool contains(const std::string& name) const { return params_.contains(name); }

    Var& get(const std::string& name) {
        auto it = params_.find(name);
        require(it != params_.end(), ErrorKind::Checkpoint, "unknown parameter " + name);
        return it->second;
    }

    const std::map<std::string, Var>& all() const { return params_; }
    std::map<std::string, Var>& all() { return params_; }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& [_, v] : params_) n += v.value().size();
        return n;
    }

    std::size_t scalar_count(const std::string& prefix) const {
        std::size_t n = 0;
        for (const auto& [name, v] : params_)
            if (name.rfind(prefix, 0) == 0) n += v.value().size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, v] : params_) v.zero_grad();
    }

    /// Parameters under these prefixes are skipped by the optimizer.
    void freeze(const std::string& prefix) { frozen_.push_back(prefix); }
    bool frozen(const std::string& name) const {
        for (const auto& p : frozen_)
            if (name.rfind(p, 0) == 0) return true;
        return false;
    }

private:
    std::uint64_t seed_;
    std::map<std::string, Var> params_;
    std::vector<std::string> frozen_;
};

/// Adaptive moment estimation, default moment constants, no weight decay.
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& store, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, t_);
        const double c2 = 1.0 - std::pow(beta2_, t_);
        for (auto& [name, p] : store.all()) {
            if (store.frozen(name)) continue;
            const Tensor& g = p.grad();
            auto& [m, v] = state_[name];
            if (m.size() != g.size()) {
                m = Tensor(g.shape());
                v = Tensor(g.shape());
            }
            Tensor& w = p.value();
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            }
        }
    }

    long steps() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> state_;
};

// ---------------------------------------------------------------------------
// Checkpoint archive: CBOR map {version, metadata, params: {name: {shape, data}}}.

inline constexpr int kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamStore& store, const nlohmann::json& metadata) {
    nlohmann::json doc;
    doc["version"] = kCheckpointVersion;
    doc["metadata"] = metadata;
    auto& params = doc["params"];
    params = nlohmann::json::object();
    for (const auto& [name, v] : store.all()) {
        params[name] = {{"shape", v.value().shape()}, {"data", v.value().storage()}};
    }
    const auto bytes = nlohmann::json::to_cbor(doc);
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::Io, "cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorKind::Io, "short write on checkpoint " + path);
}

inline nlohmann::json read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open checkpoint " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::from_cbor(bytes);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Checkpoint, "corrupt checkpoint " + path + ": " + e.what());
    }
    require(doc.contains("version") && doc["version"] == kCheckpointVersion, ErrorKind::Checkpoint,
            "checkpoint version mismatch in " + path);
    return doc;
}

/// Copies archived arrays into matching parameters. With `prefix` set, only
/// names under that prefix are loaded; every such store entry must be present.
inline void load_params(const nlohmann::json& doc, ParamStore& store, const std::string& prefix = "") {
    const auto& params = doc.at("params");
    for (auto& [name, var] : store.all()) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        require(params.contains(name), ErrorKind::Checkpoint, "checkpoint lacks parameter " + name);
        const auto& entry = params[name];
        Shape shape = entry.at("shape").get<Shape>();
        require(shape == var.value().shape(), ErrorKind::Checkpoint,
                "parameter " + name + " has shape " + shape_str(shape) + ", model expects " +
                    shape_str(var.value().shape()));
        var.value() = Tensor(shape, entry.at("data").get<std::vector<double>>());
    }
}

}  // namespace jvlgs
