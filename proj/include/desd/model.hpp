#pragma once

// The double-encoder / shared-decoder displacement model. Two spiral-conv
// encoder pyramids (talk, expr) embed displacement fields into d-dim latents;
// one decoder maps a 2d-wide code back to a full-resolution field. Training
// feeds duplicated latents (f ⊕ f); inference mixes the two encoders'
// latents, which is where the talk/expr entanglement happens.

#include <memory>
#include <optional>

#include <desd/nn.hpp>

namespace desd {

enum class Which { Talk, Expr };

struct LatentCode {
    std::vector<double> values;
    Which source = Which::Talk;
};

enum class MixStrategy {
    DuplicateTalk,
    DuplicateExpr,
    Concat,
    Reversed,
    Sum,
    Mult,
    ZeroCatTalk,
    ZeroCatExpr,
};

struct MixSpec {
    MixStrategy strategy = MixStrategy::Concat;
    double mu_t = 1.0;
    double mu_e = 1.0;
};

inline const char* to_string(MixStrategy s) {
    switch (s) {
        case MixStrategy::DuplicateTalk: return "duplicate_talk";
        case MixStrategy::DuplicateExpr: return "duplicate_expr";
        case MixStrategy::Concat: return "concat";
        case MixStrategy::Reversed: return "reversed";
        case MixStrategy::Sum: return "sum";
        case MixStrategy::Mult: return "mult";
        case MixStrategy::ZeroCatTalk: return "zero_cat_talk";
        case MixStrategy::ZeroCatExpr: return "zero_cat_expr";
    }
    return "?";
}

inline MixStrategy mix_strategy_from_string(const std::string& s) {
    for (MixStrategy m : {MixStrategy::DuplicateTalk, MixStrategy::DuplicateExpr, MixStrategy::Concat,
                          MixStrategy::Reversed, MixStrategy::Sum, MixStrategy::Mult,
                          MixStrategy::ZeroCatTalk, MixStrategy::ZeroCatExpr})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown mix strategy '" + s + "'");
}

// Latent combination recipes. zero_cat keeps its mu factor so that
// concat with the other mu at 0 is exactly the zero_cat output.
inline std::vector<double> mix_latents(const MixSpec& spec, const std::optional<LatentCode>& f_t,
                                       const std::optional<LatentCode>& f_e) {
    if (!std::isfinite(spec.mu_t) || !std::isfinite(spec.mu_e))
        throw ContractError("mix_latents: non-finite mu coefficient");
    auto need = [&](const std::optional<LatentCode>& f, const char* which) -> const std::vector<double>& {
        if (!f)
            throw ContractError(std::string("mix_latents: strategy ") + to_string(spec.strategy) +
                                " requires the " + which + " latent");
        return f->values;
    };
    auto cat = [](std::vector<double> a, const std::vector<double>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    auto scaled = [](const std::vector<double>& v, double k) {
        std::vector<double> out(v.size());
        for (size_t i = 0; i < v.size(); ++i) out[i] = k * v[i];
        return out;
    };

    switch (spec.strategy) {
        case MixStrategy::DuplicateTalk: {
            const auto& t = need(f_t, "talk");
            return cat(t, t);
        }
        case MixStrategy::DuplicateExpr: {
            const auto& e = need(f_e, "expr");
            return cat(e, e);
        }
        case MixStrategy::Concat:
            return cat(scaled(need(f_t, "talk"), spec.mu_t), scaled(need(f_e, "expr"), spec.mu_e));
        case MixStrategy::Reversed:
            return cat(scaled(need(f_e, "expr"), spec.mu_e), scaled(need(f_t, "talk"), spec.mu_t));
        case MixStrategy::Sum: {
            auto s = scaled(need(f_t, "talk"), spec.mu_t);
            const auto& e = need(f_e, "expr");
            for (size_t i = 0; i < s.size(); ++i) s[i] += spec.mu_e * e[i];
            return cat(s, s);
        }
        case MixStrategy::Mult: {
            auto p = scaled(need(f_t, "talk"), spec.mu_t);
            const auto& e = need(f_e, "expr");
            for (size_t i = 0; i < p.size(); ++i) p[i] *= spec.mu_e * e[i];
            return cat(p, p);
        }
        case MixStrategy::ZeroCatTalk: {
            auto t = scaled(need(f_t, "talk"), spec.mu_t);
            return cat(t, std::vector<double>(t.size(), 0.0));
        }
        case MixStrategy::ZeroCatExpr: {
            auto e = scaled(need(f_e, "expr"), spec.mu_e);
            return cat(std::vector<double>(e.size(), 0.0), e);
        }
    }
    throw ContractError("mix_latents: unreachable");
}

// ---------------------------------------------------------------------------

struct ModelConfig {
    int latent_dim = 64;
    std::vector<int> channels = {16, 32, 64, 128};
    int spiral_length = 9;
    std::vector<double> factors = {0.5, 0.5, 0.5, 0.5};
    bool single_encoder = false; // ablation: one shared encoder for both streams
};

class DesdModel {
public:
    DesdModel(const MeshTopology& topo, const VertexField& neutral, ModelConfig cfg, uint64_t seed)
        : cfg_(std::move(cfg)) {
        if (cfg_.channels.empty()) throw ConfigError("model: channels must be non-empty");
        if (cfg_.channels.size() != cfg_.factors.size())
            throw ConfigError("model: channels and factors must have equal length");
        if (cfg_.latent_dim < 1) throw ConfigError("model: latent_dim must be positive");
        hierarchy_ = build_hierarchy(topo, neutral, cfg_.factors);
        for (int l = 0; l < depth(); ++l)
            spirals_.push_back(compute_spirals(hierarchy_.topo(l), cfg_.spiral_length));

        Rng rng(seed);
        enc_talk_ = std::make_shared<nn::ParamSet>();
        init_encoder(*enc_talk_, "enc_t", rng);
        if (cfg_.single_encoder) {
            enc_expr_ = enc_talk_;
        } else {
            enc_expr_ = std::make_shared<nn::ParamSet>();
            init_encoder(*enc_expr_, "enc_e", rng);
        }
        decoder_ = std::make_shared<nn::ParamSet>();
        init_decoder(*decoder_, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    const SamplingHierarchy& hierarchy() const { return hierarchy_; }
    const MeshTopology& topology() const { return hierarchy_.topo(0); }
    int latent_dim() const { return cfg_.latent_dim; }
    int depth() const { return int(cfg_.channels.size()); } // conv stages; levels = depth+1

    nn::ParamSet& encoder_params(Which which) {
        return which == Which::Talk ? *enc_talk_ : *enc_expr_;
    }
    const nn::ParamSet& encoder_params(Which which) const {
        return which == Which::Talk ? *enc_talk_ : *enc_expr_;
    }
    nn::ParamSet& decoder_params() { return *decoder_; }
    const nn::ParamSet& decoder_params() const { return *decoder_; }
    bool single_encoder() const { return cfg_.single_encoder; }

    // --- graph builders -----------------------------------------------------

    // input [B*N, 3] -> latent [B, d]
    nn::Var encoder_forward(Which which, const nn::Var& input) const {
        const nn::ParamSet& ps = encoder_params(which);
        const std::string pre = cfg_.single_encoder ? "enc_t" : prefix(which);
        if (input.rows() % topology().vertex_count != 0 || input.cols() != 3)
            throw ContractError("encode: input shape [" + std::to_string(input.rows()) + "," +
                                std::to_string(input.cols()) + "] does not sit on the model topology (N=" +
                                std::to_string(topology().vertex_count) + ")");
        nn::Var h = input;
        for (int i = 0; i < depth(); ++i) {
            h = nn::spiral_conv(h, spirals_[i], ps.get(pre + ".conv" + std::to_string(i) + ".weight"),
                                ps.get(pre + ".conv" + std::to_string(i) + ".bias"));
            h = nn::elu(h);
            h = nn::sparse_apply(h, hierarchy_.levels[i + 1].down);
        }
        const int nk = hierarchy_.topo(depth()).vertex_count;
        const int ck = cfg_.channels.back();
        const int batch = h.rows() / nk;
        h = nn::reshape(h, batch, nk * ck);
        return nn::add_rowvec(nn::matmul(h, ps.get(pre + ".latent.weight")),
                              ps.get(pre + ".latent.bias"));
    }

    // mixed [B, 2d] -> field [B*N, 3]; optional per-layer activation capture
    nn::Var decoder_forward(const nn::Var& mixed,
                            std::vector<std::vector<double>>* activations = nullptr) const {
        if (mixed.cols() != 2 * cfg_.latent_dim)
            throw ContractError("decode: expected width " + std::to_string(2 * cfg_.latent_dim) +
                                ", got " + std::to_string(mixed.cols()));
        const nn::ParamSet& ps = *decoder_;
        const int nk = hierarchy_.topo(depth()).vertex_count;
        const int ck = cfg_.channels.back();
        nn::Var h = nn::elu(nn::add_rowvec(nn::matmul(mixed, ps.get("dec.dense.weight")),
                                           ps.get("dec.dense.bias")));
        h = nn::reshape(h, h.rows() * nk, ck);
        for (int i = depth() - 1; i >= 0; --i) {
            h = nn::sparse_apply(h, hierarchy_.levels[i + 1].up);
            h = nn::spiral_conv(h, spirals_[i], ps.get("dec.conv" + std::to_string(i) + ".weight"),
                                ps.get("dec.conv" + std::to_string(i) + ".bias"));
            if (i > 0) h = nn::elu(h);
            if (activations) activations->push_back(mean_abs_per_vertex(h, hierarchy_.topo(i).vertex_count));
        }
        return h;
    }

    // --- single-sample operations --------------------------------------------

    LatentCode encode(const VertexField& displacements, Which which) const {
        check_field(displacements, "encode");
        nn::Var in = nn::Var::leaf(displacements.vertex_count, 3, displacements.values);
        nn::Var z = encoder_forward(which, in);
        return LatentCode{z.value(), which};
    }

    VertexField decode(const std::vector<double>& mixed,
                       std::vector<std::vector<double>>* activations = nullptr) const {
        if (int(mixed.size()) != 2 * cfg_.latent_dim)
            throw ContractError("decode: expected length " + std::to_string(2 * cfg_.latent_dim) +
                                ", got " + std::to_string(mixed.size()));
        nn::Var in = nn::Var::leaf(1, int(mixed.size()), mixed);
        nn::Var out = decoder_forward(in, activations);
        VertexField field(topology());
        field.values = out.value();
        return field;
    }

    // S^te = D(mu_t f^t ⊕ mu_e f^e)
    VertexField infer_combined(const VertexField& s_talk, const VertexField& s_expr, double mu_t,
                               double mu_e) const {
        LatentCode ft = encode(s_talk, Which::Talk);
        LatentCode fe = encode(s_expr, Which::Expr);
        return decode(mix_latents({MixStrategy::Concat, mu_t, mu_e}, ft, fe));
    }

    // per decoder layer, per vertex: mean |activation| across channels
    std::vector<std::vector<double>> capture_activations(const std::vector<double>& mixed) const {
        std::vector<std::vector<double>> maps;
        decode(mixed, &maps);
        return maps;
    }

    // --- checkpointing --------------------------------------------------------

    std::vector<std::pair<std::string, nn::Var>> all_parameters() const {
        std::vector<std::pair<std::string, nn::Var>> out = enc_talk_->items();
        if (!cfg_.single_encoder) {
            auto e = enc_expr_->items();
            out.insert(out.end(), e.begin(), e.end());
        }
        auto d = decoder_->items();
        out.insert(out.end(), d.begin(), d.end());
        return out;
    }

    void save(const std::string& path) const { nn::save_checkpoint(path, all_parameters()); }

    void load(const std::string& path) {
        auto ck = nn::load_checkpoint(path);
        nn::load_into_params(*enc_talk_, ck);
        if (!cfg_.single_encoder) nn::load_into_params(*enc_expr_, ck);
        nn::load_into_params(*decoder_, ck);
    }

    void check_field(const VertexField& f, const char* what) const {
        if (f.topology_id != topology().id)
            throw ContractError(std::string(what) + ": field is not on the model topology");
    }

private:
    static std::string prefix(Which which) { return which == Which::Talk ? "enc_t" : "enc_e"; }

    static std::vector<double> mean_abs_per_vertex(const nn::Var& h, int n_verts) {
        const int batch_rows = h.rows();
        const int c = h.cols();
        if (batch_rows != n_verts)
            throw ContractError("activation capture expects batch size 1");
        std::vector<double> out(n_verts, 0.0);
        for (int v = 0; v < n_verts; ++v) {
            double s = 0;
            for (int j = 0; j < c; ++j) s += std::abs(h.value()[size_t(v) * c + j]);
            out[v] = s / c;
        }
        return out;
    }

    void init_encoder(nn::ParamSet& ps, const std::string& pre, Rng& rng) {
        int c_in = 3;
        for (int i = 0; i < depth(); ++i) {
            int c_out = cfg_.channels[i];
            int fan_in = cfg_.spiral_length * c_in;
            std::string base = pre + ".conv" + std::to_string(i);
            Rng r = rng.fork(fnv1a(base));
            ps.add(base + ".weight", fan_in, c_out, nn::glorot_init(fan_in, c_out, r));
            ps.add(base + ".bias", 1, c_out, std::vector<double>(c_out, 0.0));
            c_in = c_out;
        }
        const int nk = hierarchy_.topo(depth()).vertex_count;
        const int flat = nk * cfg_.channels.back();
        Rng r = rng.fork(fnv1a(pre + ".latent"));
        ps.add(pre + ".latent.weight", flat, cfg_.latent_dim,
               nn::glorot_init(flat, cfg_.latent_dim, r));
        ps.add(pre + ".latent.bias", 1, cfg_.latent_dim, std::vector<double>(cfg_.latent_dim, 0.0));
    }

    void init_decoder(nn::ParamSet& ps, Rng& rng) {
        const int nk = hierarchy_.topo(depth()).vertex_count;
        const int flat = nk * cfg_.channels.back();
        Rng r = rng.fork(fnv1a(std::string("dec.dense")));
        ps.add("dec.dense.weight", 2 * cfg_.latent_dim, flat,
               nn::glorot_init(2 * cfg_.latent_dim, flat, r));
        ps.add("dec.dense.bias", 1, flat, std::vector<double>(flat, 0.0));
        for (int i = depth() - 1; i >= 0; --i) {
            int c_in = cfg_.channels[i];
            int c_out = i > 0 ? cfg_.channels[i - 1] : 3;
            int fan_in = cfg_.spiral_length * c_in;
            std::string base = "dec.conv" + std::to_string(i);
            Rng rr = rng.fork(fnv1a(base));
            ps.add(base + ".weight", fan_in, c_out, nn::glorot_init(fan_in, c_out, rr));
            ps.add(base + ".bias", 1, c_out, std::vector<double>(c_out, 0.0));
        }
    }

    ModelConfig cfg_;
    SamplingHierarchy hierarchy_;
    std::vector<SpiralTable> spirals_;
    std::shared_ptr<nn::ParamSet> enc_talk_, enc_expr_, decoder_;
};

// M^te = M^n + S^te
inline VertexField apply_to_neutral(const VertexField& neutral, const VertexField& s_te) {
    require_same_topology(neutral, s_te, "apply_to_neutral");
    VertexField out = neutral;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += s_te.values[i];
    return out;
}

}  // namespace desd
