#pragma once

// Layers, parameter bookkeeping, the Adam optimizer, binary checkpoints and
// the finite-difference gradient checker.

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include <desd/tensor.hpp>
#include <desd/weights.hpp>

namespace desd::nn {

// Spiral convolution: gather each vertex's spiral-ordered neighborhood,
// flatten and apply one affine map. weight is [(L*C_in) x C_out].
inline Var spiral_conv(const Var& input, const SpiralTable& spirals, const Var& weight,
                       const Var& bias) {
    const int lc = spirals.spiral_length * input.cols();
    if (weight.rows() != lc)
        throw ContractError("spiral_conv: weight shape [" + std::to_string(weight.rows()) + "," +
                            std::to_string(weight.cols()) + "] does not match gathered width " +
                            std::to_string(lc));
    if (bias.cols() != weight.cols() || bias.rows() != 1)
        throw ContractError("spiral_conv: bias shape [" + std::to_string(bias.rows()) + "," +
                            std::to_string(bias.cols()) + "] does not match output width " +
                            std::to_string(weight.cols()));
    return add_rowvec(matmul(gather_spiral(input, spirals), weight), bias);
}

// Eq.-style weighted reconstruction loss over batched [B*N, 3] fields.
inline Var weighted_l2_loss(const Var& pred, const Var& target, const VertexWeights& weights) {
    const int n = int(weights.w.size());
    if (pred.cols() != 3) throw ContractError("weighted_l2_loss: expected 3 columns");
    if (pred.rows() % n != 0)
        throw ContractError("weighted_l2_loss: rows " + std::to_string(pred.rows()) +
                            " not a multiple of vertex count " + std::to_string(n));
    std::vector<double> tiled(pred.rows());
    for (int r = 0; r < pred.rows(); ++r) tiled[r] = weights.w[r % n];
    return weighted_row_l2(pred, target, std::move(tiled));
}

// ---------------------------------------------------------------------------
// Parameters with Adam state. Iteration order is registration order, which
// is fixed by construction code, so serialization and updates are stable.

class ParamSet {
public:
    Var add(const std::string& name, int rows, int cols, std::vector<double> init) {
        if (index_.count(name)) throw ContractError("params: duplicate name '" + name + "'");
        Var v = Var::leaf(rows, cols, std::move(init), /*requires_grad=*/true);
        index_[name] = items_.size();
        items_.push_back({name, v});
        moments_.push_back({std::vector<double>(v.size(), 0.0), std::vector<double>(v.size(), 0.0)});
        return v;
    }

    Var get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("params: unknown name '" + name + "'");
        return items_[it->second].second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    size_t size() const { return items_.size(); }
    int64_t step_count() const { return step_; }

    const std::vector<std::pair<std::string, Var>>& items() const { return items_; }

    void zero_grads() {
        for (auto& [name, v] : items_) v.clear_grad();
    }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& [name, v] : items_) n += v.size();
        return n;
    }

    friend void adam_step(ParamSet&, double, double, double, double);

private:
    struct Moments {
        std::vector<double> m, v;
    };
    std::vector<std::pair<std::string, Var>> items_;
    std::vector<Moments> moments_;
    std::map<std::string, size_t> index_;
    int64_t step_ = 0;
};

// Bias-corrected Adam, in place. Every parameter must carry a gradient.
inline void adam_step(ParamSet& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
    if (lr <= 0) throw ContractError("adam: learning rate must be positive");
    for (const auto& [name, v] : params.items_)
        if (!v.has_grad())
            throw ContractError("adam: parameter '" + name + "' has no gradient");
    const int64_t t = ++params.step_;
    const double c1 = 1.0 - std::pow(beta1, double(t));
    const double c2 = 1.0 - std::pow(beta2, double(t));
    for (size_t i = 0; i < params.items_.size(); ++i) {
        Var& v = params.items_[i].second;
        auto& m = params.moments_[i].m;
        auto& s = params.moments_[i].v;
        const auto& g = v.grad();
        auto& x = v.mutable_value();
        for (size_t j = 0; j < x.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            s[j] = beta2 * s[j] + (1.0 - beta2) * g[j] * g[j];
            double mhat = m[j] / c1;
            double vhat = s[j] / c2;
            x[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            if (!std::isfinite(x[j])) throw NumericError("adam: parameter became non-finite");
        }
    }
}

// Glorot-uniform init; the rng stream is the caller's responsibility.
inline std::vector<double> glorot_init(int fan_in, int fan_out, Rng& rng) {
    double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> out(size_t(fan_in) * fan_out);
    for (double& x : out) x = rng.uniform(-limit, limit);
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "DESD", version u32, entry count u32, then per entry
// name_len u32 + name + rank u32 + dims u64 + f64 payload. Little-endian.

namespace detail {
template <class T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("checkpoint: truncated file");
    return v;
}
}  // namespace detail

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Var>>& entries) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write '" + path + "'");
    out.write("DESD", 4);
    detail::write_pod<uint32_t>(out, kCheckpointVersion);
    detail::write_pod<uint32_t>(out, uint32_t(entries.size()));
    for (const auto& [name, v] : entries) {
        detail::write_pod<uint32_t>(out, uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        detail::write_pod<uint32_t>(out, 2);
        detail::write_pod<uint64_t>(out, uint64_t(v.rows()));
        detail::write_pod<uint64_t>(out, uint64_t(v.cols()));
        out.write(reinterpret_cast<const char*>(v.value().data()),
                  std::streamsize(v.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

struct CheckpointEntry {
    std::vector<uint64_t> dims;
    std::vector<double> data;
};

inline std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "DESD")
        throw ContractError("checkpoint: '" + path + "' is not a DESD checkpoint");
    uint32_t version = detail::read_pod<uint32_t>(in);
    if (version != kCheckpointVersion)
        throw ContractError("checkpoint: unsupported version " + std::to_string(version));
    uint32_t count = detail::read_pod<uint32_t>(in);
    std::map<std::string, CheckpointEntry> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = detail::read_pod<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rank = detail::read_pod<uint32_t>(in);
        CheckpointEntry e;
        uint64_t total = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            e.dims.push_back(detail::read_pod<uint64_t>(in));
            total *= e.dims.back();
        }
        e.data.resize(total);
        in.read(reinterpret_cast<char*>(e.data.data()), std::streamsize(total * sizeof(double)));
        if (!in) throw IoError("checkpoint: truncated payload in '" + path + "'");
        out[name] = std::move(e);
    }
    return out;
}

inline void load_into_params(ParamSet& params, const std::map<std::string, CheckpointEntry>& ck,
                             const std::string& prefix = "") {
    for (const auto& [name, v] : params.items()) {
        auto it = ck.find(prefix + name);
        if (it == ck.end()) throw ContractError("checkpoint: missing entry '" + prefix + name + "'");
        if (it->second.data.size() != v.size())
            throw ContractError("checkpoint: size mismatch for '" + prefix + name + "'");
        Var handle = v; // shares the node
        handle.mutable_value() = it->second.data;
    }
}

// ---------------------------------------------------------------------------
// Central finite differences against reverse-mode gradients. Returns the
// worst relative error, |a - n| / max(|a|, |n|, 1).

inline double grad_check(const std::function<Var(const std::vector<Var>&)>& f,
                         std::vector<Var> inputs, double h = 1e-5) {
    for (size_t i = 0; i < inputs.size(); ++i)
        if (!inputs[i].needs_grad())
            throw ContractError("grad_check: input " + std::to_string(i) +
                                " does not require gradients");
    Var out = f(inputs);
    if (out.size() != 1) throw ContractError("grad_check: function output is not scalar");
    out.backward();

    std::vector<std::vector<double>> analytic;
    for (auto& in : inputs) {
        if (in.has_grad())
            analytic.push_back(in.grad());
        else
            analytic.push_back(std::vector<double>(in.size(), 0.0));
        in.clear_grad();
    }

    double worst = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        auto& vals = inputs[i].mutable_value();
        for (size_t j = 0; j < vals.size(); ++j) {
            double saved = vals[j];
            vals[j] = saved + h;
            double fp = f(inputs).item();
            vals[j] = saved - h;
            double fm = f(inputs).item();
            vals[j] = saved;
            double numeric = (fp - fm) / (2 * h);
            double a = analytic[i][j];
            double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1.0});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace desd::nn
