#pragma once

// Ablation harness over latent-combination strategies, plus the activation-
// disjointness measurement that backs the duplication argument: talk-only and
// expr-only latents should excite largely different decoder vertices, while
// the combined code should cover the union.

#include <desd/classifier.hpp>
#include <desd/metrics.hpp>
#include <desd/model.hpp>
#include <desd/synth.hpp>

namespace desd {

// decode(mix(strategy)) for one frame pair
inline VertexField infer_with_strategy(const DesdModel& model, const VertexField& s_talk,
                                       const VertexField& s_expr, const MixSpec& spec) {
    LatentCode ft = model.encode(s_talk, Which::Talk);
    LatentCode fe = model.encode(s_expr, Which::Expr);
    return model.decode(mix_latents(spec, ft, fe));
}

// ---------------------------------------------------------------------------
// Activation disjointness.

struct LayerDisjointness {
    double jaccard = 0;  // overlap of talk-only vs expr-only active sets
    double coverage = 0; // how much of their union the combined pass activates
};

inline constexpr double kActivationTau = 0.10; // active = above 10% of the layer max

namespace detail {
inline std::vector<int> active_set(const std::vector<double>& act, double tau) {
    double m = 0;
    for (double x : act) m = std::max(m, x);
    std::vector<int> out;
    if (m <= 0) return out;
    for (size_t v = 0; v < act.size(); ++v)
        if (act[v] >= tau * m) out.push_back(int(v));
    return out;
}

inline double jaccard(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.empty() && b.empty()) return 0; // degenerate case, by convention
    std::vector<int> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    return uni.empty() ? 0.0 : double(inter.size()) / double(uni.size());
}
}  // namespace detail

inline std::vector<LayerDisjointness> activation_disjointness(const DesdModel& model,
                                                              const VertexField& s_talk,
                                                              const VertexField& s_expr,
                                                              double mu_t = 1.0, double mu_e = 1.0,
                                                              double tau = kActivationTau) {
    LatentCode ft = model.encode(s_talk, Which::Talk);
    LatentCode fe = model.encode(s_expr, Which::Expr);
    auto maps_t = model.capture_activations(mix_latents({MixStrategy::DuplicateTalk}, ft, fe));
    auto maps_e = model.capture_activations(mix_latents({MixStrategy::DuplicateExpr}, ft, fe));
    auto maps_c =
        model.capture_activations(mix_latents({MixStrategy::Concat, mu_t, mu_e}, ft, fe));

    std::vector<LayerDisjointness> out;
    for (size_t l = 0; l < maps_t.size(); ++l) {
        auto at = detail::active_set(maps_t[l], tau);
        auto ae = detail::active_set(maps_e[l], tau);
        auto ac = detail::active_set(maps_c[l], tau);
        std::vector<int> uni, covered;
        std::set_union(at.begin(), at.end(), ae.begin(), ae.end(), std::back_inserter(uni));
        std::set_intersection(ac.begin(), ac.end(), uni.begin(), uni.end(),
                              std::back_inserter(covered));
        LayerDisjointness d;
        d.jaccard = detail::jaccard(at, ae);
        d.coverage = uni.empty() ? 0.0 : double(covered.size()) / double(uni.size());
        out.push_back(d);
    }
    return out;
}

// CSV export of activation maps: vertex_id, layer, value
inline void write_activation_csv(const std::string& path,
                                 const std::vector<std::vector<double>>& maps) {
    std::ofstream out(path);
    if (!out) throw IoError("activations: cannot write '" + path + "'");
    out << "vertex_id,layer,value\n";
    char buf[64];
    for (size_t l = 0; l < maps.size(); ++l)
        for (size_t v = 0; v < maps[l].size(); ++v) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g\n", v, l, maps[l][v]);
            out << buf;
        }
}

// per-vertex scalar sidecar (heatmap-style export for the full-resolution map)
inline void write_activation_sidecar(const std::string& path, const std::vector<double>& map) {
    nlohmann::json j;
    j["vertex_scalars"] = map;
    std::ofstream out(path);
    if (!out) throw IoError("activations: cannot write '" + path + "'");
    out << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Strategy ablation table (classifier accuracy per intensity + geometric
// similarity to the two sources).

struct AblationVariant {
    std::string name;
    const DesdModel* model = nullptr; // null -> absent row
    MixStrategy strategy = MixStrategy::Concat;
};

struct AblationRow {
    std::string name;
    bool present = false;
    std::vector<double> accuracy;  // one per intensity level
    double lve_vs_talk = 0;        // lips error of the combined output vs the speech source
    double uve_vs_expr = 0;        // upper error vs the expression source
};

struct AblationPair {
    const DisplacementSequence* talk;
    const DisplacementSequence* expr; // carries the emotion label
};

inline std::vector<AblationRow> ablate_strategies(const std::vector<AblationVariant>& variants,
                                                  const ExprClassifier& classifier,
                                                  const std::vector<AblationPair>& pairs,
                                                  const std::vector<double>& mu_e_levels,
                                                  double mu_t, const MeshTopology& topo,
                                                  MetricAgg agg = MetricAgg::Mean) {
    if (pairs.empty()) throw ContractError("ablate: no evaluation pairs");
    std::vector<AblationRow> rows;
    for (const auto& variant : variants) {
        AblationRow row;
        row.name = variant.name;
        if (!variant.model) {
            rows.push_back(std::move(row)); // absent, reported but empty
            continue;
        }
        row.present = true;
        row.accuracy.assign(mu_e_levels.size(), 0.0);
        double lve_acc = 0, uve_acc = 0;
        int geo_count = 0;
        for (const auto& pair : pairs) {
            DisplacementSequence expr = resample_sequence(*pair.expr, pair.talk->frame_count());
            int label = classifier.class_index(pair.expr->meta.emotion);
            for (size_t lvl = 0; lvl < mu_e_levels.size(); ++lvl) {
                MixSpec spec{variant.strategy, mu_t, mu_e_levels[lvl]};
                DisplacementSequence combined;
                combined.fps = pair.talk->fps;
                combined.meta = pair.talk->meta;
                for (int t = 0; t < pair.talk->frame_count(); ++t)
                    combined.frames.push_back(infer_with_strategy(*variant.model, pair.talk->frames[t],
                                                                  expr.frames[t], spec));
                int peak = peak_frame_index(combined, topo);
                if (classifier.predict(combined.frames[peak]) == label)
                    row.accuracy[lvl] += 1.0;
                lve_acc += lve(combined, *pair.talk, topo, agg);
                uve_acc += uve(combined, expr, topo, agg);
                ++geo_count;
            }
        }
        for (double& a : row.accuracy) a /= double(pairs.size());
        row.lve_vs_talk = lve_acc / geo_count;
        row.uve_vs_expr = uve_acc / geo_count;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("ablation: cannot write '" + path + "'");
    out << "model";
    size_t levels = 0;
    for (const auto& r : rows) levels = std::max(levels, r.accuracy.size());
    for (size_t i = 1; i <= levels; ++i) out << ",I" << i << "_acc";
    out << ",lve_vs_talk_mm,uve_vs_expr_mm,present\n";
    char buf[64];
    for (const auto& r : rows) {
        out << r.name;
        for (size_t i = 0; i < levels; ++i) {
            if (i < r.accuracy.size() && r.present) {
                std::snprintf(buf, sizeof buf, ",%.3f", r.accuracy[i]);
                out << buf;
            } else {
                out << ",";
            }
        }
        if (r.present) {
            std::snprintf(buf, sizeof buf, ",%.3f,%.3f,yes\n", r.lve_vs_talk, r.uve_vs_expr);
            out << buf;
        } else {
            out << ",,,absent\n";
        }
    }
}

}  // namespace desd
