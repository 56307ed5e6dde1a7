#pragma once

// Desk-scale synthetic corpora. Talking sequences are smooth band-limited
// displacement fields supported on the "lips" region; expression sequences
// live on the "upper" region plus a small mouth-shape component, with a
// temporal envelope peaking mid-sequence. Structural patterns (modes, per-
// emotion shapes, actor gains) depend only on the seed; per-sequence draws
// also mix in the sequence key and a variant tag, so a different variant
// yields fresh sequences from the same distribution (held-out material).
//
// Each talking sequence also carries a synthetic audio-feature track that is
// a fixed linear readout of the mode coefficients, which is what the
// landmark generator trains against.

#include <desd/data.hpp>

namespace desd {

struct CorpusConfig {
    uint64_t seed = 1;
    int n_actors = 2;
    int n_contents = 8;    // talking sequences per actor
    int n_expressions = 8; // emotion classes, one expr sequence per (actor, emotion)
    int frames_per_seq = 64;
    double fps = 60.0;
    uint64_t variant = 0;
    int feature_bands = 8; // width of the synthetic audio features
};

struct SyntheticCorpus {
    std::vector<DisplacementSequence> talk;
    std::vector<DisplacementSequence> expr;
    // ground-truth expression components, aligned with `expr`
    std::vector<DisplacementSequence> expr_upper;
    std::vector<DisplacementSequence> expr_mouth;
    // per talk sequence: frames x feature_bands
    std::vector<std::vector<std::vector<double>>> talk_features;
    std::vector<std::string> emotions;
};

namespace detail {

inline const std::vector<std::string>& emotion_names() {
    static const std::vector<std::string> names = {"afraid", "angry",  "disgust",    "happy",
                                                   "sad",    "moody",  "drunk",      "ill",
                                                   "suspicious", "pleased", "upset"};
    return names;
}

// smooth vector-field bump over a vertex subset, unit RMS over the mesh
inline std::vector<double> region_bump(const MeshTopology& topo, const VertexField& neutral,
                                       const std::vector<int>& region, Rng& rng) {
    std::vector<double> field(size_t(topo.vertex_count) * 3, 0.0);
    int center = region[rng.uniform_int(int(region.size()))];
    double dir[3] = {rng.normal(), rng.normal(), rng.normal()};
    double dn = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    for (double& d : dir) d /= dn;
    // spatial extent from the region's bounding size
    double lo[3] = {1e30, 1e30, 1e30}, hi[3] = {-1e30, -1e30, -1e30};
    for (int v : region)
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], neutral.at(v, c));
            hi[c] = std::max(hi[c], neutral.at(v, c));
        }
    double extent = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
    double sigma = extent * rng.uniform(0.2, 0.4);
    double energy = 0;
    for (int v : region) {
        double d2 = 0;
        for (int c = 0; c < 3; ++c) {
            double d = neutral.at(v, c) - neutral.at(center, c);
            d2 += d * d;
        }
        double g = std::exp(-d2 / (2 * sigma * sigma));
        for (int c = 0; c < 3; ++c) field[size_t(v) * 3 + c] = g * dir[c];
        energy += 3 * g * g;
    }
    double rms = std::sqrt(energy / double(topo.vertex_count * 3));
    for (double& x : field) x /= std::max(rms, 1e-12);
    return field;
}

inline void scale_to_norm_ratio(std::vector<double>& field, const std::vector<double>& reference,
                                double ratio) {
    auto norm = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };
    double nf = norm(field), nr = norm(reference);
    if (nf < 1e-12) return;
    double k = ratio * nr / nf;
    for (double& x : field) x *= k;
}

}  // namespace detail

inline SyntheticCorpus generate_synthetic_corpus(const MeshTopology& topo,
                                                 const VertexField& neutral,
                                                 const CorpusConfig& cfg) {
    if (!topo.has_region("lips") || !topo.has_region("upper"))
        throw ContractError("corpus: topology must define 'lips' and 'upper' regions");
    if (cfg.n_actors < 1 || cfg.n_contents < 1 || cfg.n_expressions < 1 || cfg.frames_per_seq < 1)
        throw ContractError("corpus: counts must be positive");
    const auto& lips = topo.region("lips");
    const auto& upper = topo.region("upper");

    SyntheticCorpus corpus;
    for (int e = 0; e < cfg.n_expressions; ++e) {
        const auto& names = detail::emotion_names();
        corpus.emotions.push_back(e < int(names.size()) ? names[e]
                                                        : "expr" + std::to_string(e));
    }

    // --- structural patterns, a function of the seed only
    Rng structural(cfg.seed);
    constexpr int kTalkModes = 3;
    std::vector<std::vector<double>> lip_modes;
    for (int k = 0; k < kTalkModes; ++k)
        lip_modes.push_back(detail::region_bump(topo, neutral, lips, structural));

    std::vector<std::vector<double>> emo_upper, emo_mouth;
    for (int e = 0; e < cfg.n_expressions; ++e) {
        auto u = detail::region_bump(topo, neutral, upper, structural);
        auto u2 = detail::region_bump(topo, neutral, upper, structural);
        for (size_t i = 0; i < u.size(); ++i) u[i] = 0.75 * u[i] + 0.45 * u2[i];
        auto m = detail::region_bump(topo, neutral, lips, structural);
        detail::scale_to_norm_ratio(m, u, 0.3); // ~8% of combined energy in the mouth
        emo_upper.push_back(std::move(u));
        emo_mouth.push_back(std::move(m));
    }

    std::vector<double> actor_gain;
    for (int a = 0; a < cfg.n_actors; ++a) actor_gain.push_back(structural.uniform(0.8, 1.25));

    // fixed readout of mode coefficients -> feature bands
    std::vector<double> readout(size_t(cfg.feature_bands) * kTalkModes);
    for (double& x : readout) x = structural.normal();
    std::vector<double> readout_bias(cfg.feature_bands);
    for (double& x : readout_bias) x = 0.25 * structural.normal();

    const int T = cfg.frames_per_seq;
    const double kTalkMm = 4.0, kExprMm = 3.0;

    // --- talking sequences
    for (int a = 0; a < cfg.n_actors; ++a)
        for (int s = 0; s < cfg.n_contents; ++s) {
            uint64_t key = fnv1a("talk", cfg.seed);
            key = fnv1a(&a, sizeof a, key);
            key = fnv1a(&s, sizeof s, key);
            key = fnv1a(&cfg.variant, sizeof cfg.variant, key);
            Rng rng(key);

            // band-limited coefficient signals per mode
            constexpr int kHarmonics = 3;
            double freq[kTalkModes][kHarmonics], phase[kTalkModes][kHarmonics],
                amp[kTalkModes][kHarmonics];
            for (int k = 0; k < kTalkModes; ++k)
                for (int h = 0; h < kHarmonics; ++h) {
                    freq[k][h] = rng.uniform(0.5, 2.5);
                    phase[k][h] = rng.uniform(0, 2 * M_PI);
                    amp[k][h] = rng.normal() / std::sqrt(double(kHarmonics));
                }

            DisplacementSequence seq;
            seq.fps = cfg.fps;
            seq.meta.actor = "actor" + std::to_string(a);
            seq.meta.content_id = "s" + std::to_string(s);
            std::vector<std::vector<double>> track;
            for (int t = 0; t < T; ++t) {
                double coeff[kTalkModes];
                for (int k = 0; k < kTalkModes; ++k) {
                    double c = 0;
                    for (int h = 0; h < kHarmonics; ++h)
                        c += amp[k][h] * std::sin(2 * M_PI * freq[k][h] * t / double(T) + phase[k][h]);
                    coeff[k] = c * actor_gain[a] * kTalkMm;
                }
                VertexField f(topo);
                for (int k = 0; k < kTalkModes; ++k)
                    for (size_t i = 0; i < f.values.size(); ++i)
                        f.values[i] += coeff[k] * lip_modes[k][i];
                seq.frames.push_back(std::move(f));

                std::vector<double> feat(cfg.feature_bands);
                for (int b = 0; b < cfg.feature_bands; ++b) {
                    double v = readout_bias[b];
                    for (int k = 0; k < kTalkModes; ++k)
                        v += readout[size_t(b) * kTalkModes + k] * coeff[k];
                    feat[b] = v;
                }
                track.push_back(std::move(feat));
            }
            corpus.talk.push_back(std::move(seq));
            corpus.talk_features.push_back(std::move(track));
        }

    // --- expression sequences
    for (int a = 0; a < cfg.n_actors; ++a)
        for (int e = 0; e < cfg.n_expressions; ++e) {
            uint64_t key = fnv1a("expr", cfg.seed);
            key = fnv1a(&a, sizeof a, key);
            key = fnv1a(&e, sizeof e, key);
            key = fnv1a(&cfg.variant, sizeof cfg.variant, key);
            Rng rng(key);

            // small per-sequence perturbation keeps classes separable but not identical
            auto upper_field = emo_upper[e];
            auto wobble = detail::region_bump(topo, neutral, upper, rng);
            detail::scale_to_norm_ratio(wobble, upper_field, 0.18);
            for (size_t i = 0; i < upper_field.size(); ++i) upper_field[i] += wobble[i];
            auto mouth_field = emo_mouth[e];

            double gain = actor_gain[a] * rng.uniform(0.85, 1.15) * kExprMm;

            DisplacementSequence seq, seq_u, seq_m;
            seq.fps = seq_u.fps = seq_m.fps = cfg.fps;
            seq.meta.actor = "actor" + std::to_string(a);
            seq.meta.content_id = "e" + std::to_string(e);
            seq.meta.emotion = corpus.emotions[e];
            seq_u.meta = seq_m.meta = seq.meta;
            for (int t = 0; t < T; ++t) {
                double x = T == 1 ? 0.5 : double(t) / double(T - 1);
                double env = gain * std::sin(M_PI * x) * std::sin(M_PI * x); // peak mid-sequence
                VertexField f(topo), fu(topo), fm(topo);
                for (size_t i = 0; i < f.values.size(); ++i) {
                    fu.values[i] = env * upper_field[i];
                    fm.values[i] = env * mouth_field[i];
                    f.values[i] = fu.values[i] + fm.values[i];
                }
                seq.frames.push_back(std::move(f));
                seq_u.frames.push_back(std::move(fu));
                seq_m.frames.push_back(std::move(fm));
            }
            corpus.expr.push_back(std::move(seq));
            corpus.expr_upper.push_back(std::move(seq_u));
            corpus.expr_mouth.push_back(std::move(seq_m));
        }

    return corpus;
}

// fraction of a field's squared magnitude carried by a vertex subset
inline double region_energy_fraction(const VertexField& field, const std::vector<int>& region) {
    double total = 0;
    for (double x : field.values) total += x * x;
    if (total == 0) return 0;
    double in = 0;
    for (int v : region)
        for (int c = 0; c < 3; ++c) in += field.at(v, c) * field.at(v, c);
    return in / total;
}

}  // namespace desd
