#pragma once

// Emotion-conditioned talking-head generator, two stages:
//   S2L: a bidirectional gated recurrent net maps per-frame
//        [audio features ⊕ emotion embedding ⊕ intensity embedding] to the
//        motion of the topology's landmarks.
//   S2D: a dense lift of one landmark frame to coarse decoder features,
//        expanded to the full mesh by the same upsample + spiral-conv stack
//        the displacement model's decoder uses (separate weights).
// Labels are one-hot (all-zero allowed: the unconditioned mode) embedded by
// bias-free linear maps, so the zero label embeds to the zero vector.

#include <desd/audio.hpp>
#include <desd/model.hpp>
#include <desd/weights.hpp>

namespace desd {

struct LabelCondition {
    std::vector<double> emotion;  // |E| one-hot or all-zero
    std::array<double, 3> intensity{0, 0, 0};

    static LabelCondition make(int emotion_idx, int n_emotions, int intensity_level /*1..3, 0=off*/) {
        LabelCondition c;
        c.emotion.assign(n_emotions, 0.0);
        if (emotion_idx >= 0) {
            if (emotion_idx >= n_emotions) throw ContractError("label: emotion index out of range");
            c.emotion[emotion_idx] = 1.0;
        }
        if (intensity_level != 0) {
            if (intensity_level < 1 || intensity_level > 3)
                throw ContractError("label: intensity must be 1..3 or 0 for off");
            c.intensity[intensity_level - 1] = 1.0;
        }
        return c;
    }

    void validate() const {
        auto check_onehot = [](const double* v, size_t n, const char* what) {
            int hot = 0;
            for (size_t i = 0; i < n; ++i) {
                if (v[i] == 0.0) continue;
                if (v[i] != 1.0) throw ContractError(std::string("label: ") + what + " is not one-hot");
                ++hot;
            }
            if (hot > 1)
                throw ContractError(std::string("label: ") + what + " has multiple hot entries");
        };
        check_onehot(emotion.data(), emotion.size(), "emotion");
        check_onehot(intensity.data(), intensity.size(), "intensity");
    }
};

struct LandmarkMotion {
    int landmark_count = 0;
    std::vector<std::vector<double>> frames; // T rows of landmark_count*3

    int frame_count() const { return int(frames.size()); }
};

// landmark displacements of a dense frame, in the topology's Λ order
inline std::vector<double> landmarks_of(const VertexField& field, const MeshTopology& topo) {
    std::vector<double> out;
    out.reserve(topo.landmarks.size() * 3);
    for (int lm : topo.landmarks)
        for (int c = 0; c < 3; ++c) out.push_back(field.at(lm, c));
    return out;
}

struct EmoGenConfig {
    int feature_dim = 8;
    int n_emotions = 5;
    int label_embed_dim = 64; // per label type; the condition vector is twice this
    int hidden = 128;
    int layers = 2;
    // S2D decoder stack
    std::vector<int> channels = {16, 32};
    std::vector<double> factors = {0.5, 0.5};
    int spiral_length = 9;
};

class EmoGen {
public:
    EmoGen(const MeshTopology& topo, const VertexField& neutral, EmoGenConfig cfg, uint64_t seed)
        : cfg_(std::move(cfg)) {
        if (topo.landmarks.empty()) throw ContractError("emo-gen: topology has no landmarks");
        if (cfg_.channels.size() != cfg_.factors.size())
            throw ConfigError("emo-gen: channels and factors must have equal length");
        landmark_count_ = int(topo.landmarks.size());
        hierarchy_ = build_hierarchy(topo, neutral, cfg_.factors);
        for (size_t l = 0; l < cfg_.factors.size(); ++l)
            spirals_.push_back(compute_spirals(hierarchy_.topo(int(l)), cfg_.spiral_length));

        Rng rng(seed);
        init_s2l(rng);
        init_s2d(rng);
    }

    const EmoGenConfig& config() const { return cfg_; }
    const MeshTopology& topology() const { return hierarchy_.topo(0); }
    int landmark_count() const { return landmark_count_; }
    nn::ParamSet& s2l_params() { return s2l_; }
    nn::ParamSet& s2d_params() { return s2d_; }

    // --- label embedding ------------------------------------------------------

    // [1, 2*label_embed_dim]; bias-free, so all-zero one-hots embed to zero
    nn::Var embed_labels_var(const LabelCondition& cond) const {
        cond.validate();
        if (int(cond.emotion.size()) != cfg_.n_emotions)
            throw ContractError("label: emotion width " + std::to_string(cond.emotion.size()) +
                                " does not match model (" + std::to_string(cfg_.n_emotions) + ")");
        nn::Var e = nn::matmul(nn::Var::leaf(1, cfg_.n_emotions, cond.emotion),
                               s2l_.get("s2l.embed.emotion"));
        nn::Var i = nn::matmul(
            nn::Var::leaf(1, 3, {cond.intensity[0], cond.intensity[1], cond.intensity[2]}),
            s2l_.get("s2l.embed.intensity"));
        return nn::concat_cols(e, i);
    }

    std::vector<double> embed_labels(const LabelCondition& cond) const {
        return embed_labels_var(cond).value();
    }

    // per-frame conditioned inputs [T, F + 2*embed]; conds has 1 entry (constant
    // condition) or one per frame (label switching)
    std::vector<std::vector<double>> conditioned_inputs(const AudioFeatureTrack& track,
                                                        const std::vector<LabelCondition>& conds) const {
        track.validate();
        if (track.feature_dim() != cfg_.feature_dim)
            throw ContractError("s2l: feature width " + std::to_string(track.feature_dim()) +
                                " does not match model (" + std::to_string(cfg_.feature_dim) + ")");
        if (conds.empty() || (conds.size() != 1 && int(conds.size()) != track.frame_count()))
            throw ContractError("s2l: need one condition or one per frame");
        std::vector<std::vector<double>> rows;
        rows.reserve(track.frame_count());
        std::vector<double> cached;
        for (int t = 0; t < track.frame_count(); ++t) {
            const LabelCondition& c = conds.size() == 1 ? conds[0] : conds[t];
            if (conds.size() == 1 && !cached.empty()) {
                // constant condition, reuse the embedding
            } else {
                cached = embed_labels(c);
            }
            std::vector<double> row = track.frames[t];
            row.insert(row.end(), cached.begin(), cached.end());
            rows.push_back(std::move(row));
        }
        return rows;
    }

    // --- S2L ------------------------------------------------------------------

    // [T, landmark_count*3]
    nn::Var s2l_forward_var(const AudioFeatureTrack& track,
                            const std::vector<LabelCondition>& conds) const {
        track.validate();
        if (track.feature_dim() != cfg_.feature_dim)
            throw ContractError("s2l: feature width " + std::to_string(track.feature_dim()) +
                                " does not match model (" + std::to_string(cfg_.feature_dim) + ")");
        if (conds.empty() || (conds.size() != 1 && int(conds.size()) != track.frame_count()))
            throw ContractError("s2l: need one condition or one per frame");
        const int t_len = track.frame_count();
        // label embeddings stay in the graph so they train with the rest
        nn::Var const_emb;
        if (conds.size() == 1) const_emb = embed_labels_var(conds[0]);
        std::vector<nn::Var> layer_in;
        layer_in.reserve(t_len);
        for (int t = 0; t < t_len; ++t) {
            nn::Var emb = conds.size() == 1 ? const_emb : embed_labels_var(conds[t]);
            layer_in.push_back(
                nn::concat_cols(nn::Var::leaf(1, cfg_.feature_dim, track.frames[t]), emb));
        }
        for (int layer = 0; layer < cfg_.layers; ++layer) {
            std::vector<nn::Var> fwd = gru_direction(layer_in, layer, /*backward=*/false);
            std::vector<nn::Var> bwd = gru_direction(layer_in, layer, /*backward=*/true);
            std::vector<nn::Var> merged(t_len);
            for (int t = 0; t < t_len; ++t) merged[t] = nn::concat_cols(fwd[t], bwd[t]);
            layer_in = std::move(merged);
        }
        nn::Var stacked = nn::stack_rows(layer_in); // [T, 2H]
        return nn::add_rowvec(nn::matmul(stacked, s2l_.get("s2l.head.weight")),
                              s2l_.get("s2l.head.bias"));
    }

    LandmarkMotion s2l_forward(const AudioFeatureTrack& track,
                               const std::vector<LabelCondition>& conds) const {
        nn::Var out = s2l_forward_var(track, conds);
        LandmarkMotion motion;
        motion.landmark_count = landmark_count_;
        for (int t = 0; t < out.rows(); ++t)
            motion.frames.emplace_back(out.value().begin() + size_t(t) * out.cols(),
                                       out.value().begin() + size_t(t + 1) * out.cols());
        return motion;
    }

    // --- S2D ------------------------------------------------------------------

    // landmarks [B, landmark_count*3] -> dense [B*N, 3]
    nn::Var s2d_forward_var(const nn::Var& landmarks) const {
        if (landmarks.cols() != landmark_count_ * 3)
            throw ContractError("s2d: expected width " + std::to_string(landmark_count_ * 3) +
                                ", got " + std::to_string(landmarks.cols()));
        const int nk = hierarchy_.topo(int(cfg_.factors.size())).vertex_count;
        const int ck = cfg_.channels.back();
        nn::Var h = nn::elu(nn::add_rowvec(nn::matmul(landmarks, s2d_.get("s2d.dense.weight")),
                                           s2d_.get("s2d.dense.bias")));
        h = nn::reshape(h, h.rows() * nk, ck);
        for (int i = int(cfg_.channels.size()) - 1; i >= 0; --i) {
            h = nn::sparse_apply(h, hierarchy_.levels[i + 1].up);
            h = nn::spiral_conv(h, spirals_[i], s2d_.get("s2d.conv" + std::to_string(i) + ".weight"),
                                s2d_.get("s2d.conv" + std::to_string(i) + ".bias"));
            if (i > 0) h = nn::elu(h);
        }
        return h;
    }

    VertexField s2d_forward(const std::vector<double>& landmark_frame) const {
        nn::Var in = nn::Var::leaf(1, int(landmark_frame.size()), landmark_frame);
        nn::Var out = s2d_forward_var(in);
        VertexField f(topology());
        f.values = out.value();
        return f;
    }

    // --- composition ------------------------------------------------------------

    // per frame: neutral + s2d(s2l(track, cond)_t); returns absolute positions
    std::vector<VertexField> generate(const AudioFeatureTrack& track,
                                      const std::vector<LabelCondition>& conds,
                                      const VertexField& neutral) const {
        if (neutral.topology_id != topology().id)
            throw ContractError("generate: neutral is not on the model topology");
        LandmarkMotion motion = s2l_forward(track, conds);
        std::vector<VertexField> out;
        out.reserve(motion.frames.size());
        for (const auto& lmk : motion.frames) {
            VertexField disp = s2d_forward(lmk);
            out.push_back(apply_to_neutral(neutral, disp));
        }
        return out;
    }

    // --- training ---------------------------------------------------------------

    struct S2lSample {
        const AudioFeatureTrack* track;
        LabelCondition cond;
        const LandmarkMotion* target;
    };

    // mean per-landmark L2 against ground-truth landmark motion
    double train_s2l(const std::vector<S2lSample>& samples, int epochs, double lr, uint64_t seed) {
        if (samples.empty()) throw ContractError("s2l: no training samples");
        Rng rng(seed);
        std::vector<int> order(samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        double last = 0;
        for (int ep = 0; ep < epochs; ++ep) {
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_int(int(i))]);
            double acc = 0;
            for (int idx : order) {
                const S2lSample& s = samples[idx];
                if (s.target->frame_count() != s.track->frame_count())
                    throw ContractError("s2l: target frame count differs from the track");
                nn::Var pred = s2l_forward_var(*s.track, {s.cond});
                std::vector<double> gt;
                for (const auto& f : s.target->frames) gt.insert(gt.end(), f.begin(), f.end());
                nn::Var target = nn::Var::leaf(pred.rows(), pred.cols(), std::move(gt));
                nn::Var loss = nn::weighted_row_l2(
                    nn::reshape(pred, pred.rows() * landmark_count_, 3),
                    nn::reshape(target, target.rows() * landmark_count_, 3));
                s2l_.zero_grads();
                loss.backward();
                nn::adam_step(s2l_, lr);
                acc += loss.item();
            }
            last = acc / double(samples.size());
        }
        return last;
    }

    struct S2dSample {
        std::vector<double> landmarks;     // landmark_count*3
        const VertexField* dense_target;
    };

    // Eq.-style weighted loss against the dense ground truth
    double train_s2d(const std::vector<S2dSample>& samples, const VertexWeights& weights,
                     int epochs, double lr, int batch, uint64_t seed) {
        if (samples.empty()) throw ContractError("s2d: no training samples");
        Rng rng(seed);
        std::vector<int> order(samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        const int n = topology().vertex_count;
        double last = 0;
        for (int ep = 0; ep < epochs; ++ep) {
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_int(int(i))]);
            double acc = 0;
            int batches = 0;
            for (size_t lo = 0; lo < order.size(); lo += batch) {
                size_t hi = std::min(order.size(), lo + batch);
                std::vector<double> in, gt;
                for (size_t i = lo; i < hi; ++i) {
                    const auto& s = samples[order[i]];
                    in.insert(in.end(), s.landmarks.begin(), s.landmarks.end());
                    gt.insert(gt.end(), s.dense_target->values.begin(),
                              s.dense_target->values.end());
                }
                nn::Var input = nn::Var::leaf(int(hi - lo), landmark_count_ * 3, std::move(in));
                nn::Var target = nn::Var::leaf(int(hi - lo) * n, 3, std::move(gt));
                nn::Var loss = nn::weighted_l2_loss(s2d_forward_var(input), target, weights);
                s2d_.zero_grads();
                loss.backward();
                nn::adam_step(s2d_, lr);
                acc += loss.item();
                ++batches;
            }
            last = acc / batches;
        }
        return last;
    }

    // --- checkpointing ------------------------------------------------------------

    std::vector<std::pair<std::string, nn::Var>> all_parameters() const {
        auto out = s2l_.items();
        auto d = s2d_.items();
        out.insert(out.end(), d.begin(), d.end());
        return out;
    }

    void save(const std::string& path) const { nn::save_checkpoint(path, all_parameters()); }

    void load(const std::string& path) {
        auto ck = nn::load_checkpoint(path);
        nn::load_into_params(s2l_, ck);
        nn::load_into_params(s2d_, ck);
    }

private:
    std::vector<nn::Var> gru_direction(const std::vector<nn::Var>& inputs, int layer,
                                       bool backward) const {
        const int t_len = int(inputs.size());
        const std::string base =
            "s2l.l" + std::to_string(layer) + (backward ? ".bwd" : ".fwd");
        nn::Var wz = s2l_.get(base + ".Wz"), wr = s2l_.get(base + ".Wr"),
                wh = s2l_.get(base + ".Wh");
        nn::Var uz = s2l_.get(base + ".Uz"), ur = s2l_.get(base + ".Ur"),
                uh = s2l_.get(base + ".Uh");
        nn::Var bz = s2l_.get(base + ".bz"), br = s2l_.get(base + ".br"),
                bh = s2l_.get(base + ".bh");
        std::vector<nn::Var> out(t_len);
        nn::Var h = nn::Var::zeros(1, cfg_.hidden);
        for (int step = 0; step < t_len; ++step) {
            int t = backward ? t_len - 1 - step : step;
            const nn::Var& x = inputs[t];
            nn::Var z = nn::sigmoid(nn::add_rowvec(nn::add(nn::matmul(x, wz), nn::matmul(h, uz)), bz));
            nn::Var r = nn::sigmoid(nn::add_rowvec(nn::add(nn::matmul(x, wr), nn::matmul(h, ur)), br));
            nn::Var cand = nn::tanh_op(
                nn::add_rowvec(nn::add(nn::matmul(x, wh), nn::matmul(nn::mul(r, h), uh)), bh));
            // h = (1 - z) ∘ h + z ∘ cand
            nn::Var keep = nn::add_scalar(nn::scale(z, -1.0), 1.0);
            h = nn::add(nn::mul(keep, h), nn::mul(z, cand));
            out[t] = h;
        }
        return out;
    }

    void init_s2l(Rng& rng) {
        const int cond_dim = cfg_.feature_dim + 2 * cfg_.label_embed_dim;
        {
            Rng r = rng.fork(fnv1a(std::string("s2l.embed")));
            s2l_.add("s2l.embed.emotion", cfg_.n_emotions, cfg_.label_embed_dim,
                     nn::glorot_init(cfg_.n_emotions, cfg_.label_embed_dim, r));
            s2l_.add("s2l.embed.intensity", 3, cfg_.label_embed_dim,
                     nn::glorot_init(3, cfg_.label_embed_dim, r));
        }
        int in_dim = cond_dim;
        for (int layer = 0; layer < cfg_.layers; ++layer) {
            for (const char* dir : {".fwd", ".bwd"}) {
                std::string base = "s2l.l" + std::to_string(layer) + dir;
                Rng r = rng.fork(fnv1a(base));
                for (const char* g : {"z", "r", "h"}) {
                    s2l_.add(base + ".W" + g, in_dim, cfg_.hidden,
                             nn::glorot_init(in_dim, cfg_.hidden, r));
                    s2l_.add(base + ".U" + g, cfg_.hidden, cfg_.hidden,
                             nn::glorot_init(cfg_.hidden, cfg_.hidden, r));
                    s2l_.add(base + ".b" + g, 1, cfg_.hidden,
                             std::vector<double>(cfg_.hidden, 0.0));
                }
            }
            in_dim = 2 * cfg_.hidden;
        }
        Rng r = rng.fork(fnv1a(std::string("s2l.head")));
        s2l_.add("s2l.head.weight", 2 * cfg_.hidden, landmark_count_ * 3,
                 nn::glorot_init(2 * cfg_.hidden, landmark_count_ * 3, r));
        s2l_.add("s2l.head.bias", 1, landmark_count_ * 3,
                 std::vector<double>(size_t(landmark_count_) * 3, 0.0));
    }

    void init_s2d(Rng& rng) {
        const int nk = hierarchy_.topo(int(cfg_.factors.size())).vertex_count;
        const int flat = nk * cfg_.channels.back();
        Rng r = rng.fork(fnv1a(std::string("s2d.dense")));
        s2d_.add("s2d.dense.weight", landmark_count_ * 3, flat,
                 nn::glorot_init(landmark_count_ * 3, flat, r));
        s2d_.add("s2d.dense.bias", 1, flat, std::vector<double>(flat, 0.0));
        for (int i = int(cfg_.channels.size()) - 1; i >= 0; --i) {
            int c_in = cfg_.channels[i];
            int c_out = i > 0 ? cfg_.channels[i - 1] : 3;
            int fan_in = cfg_.spiral_length * c_in;
            std::string base = "s2d.conv" + std::to_string(i);
            Rng rr = rng.fork(fnv1a(base));
            s2d_.add(base + ".weight", fan_in, c_out, nn::glorot_init(fan_in, c_out, rr));
            s2d_.add(base + ".bias", 1, c_out, std::vector<double>(c_out, 0.0));
        }
    }

    EmoGenConfig cfg_;
    int landmark_count_ = 0;
    SamplingHierarchy hierarchy_;
    std::vector<SpiralTable> spirals_;
    nn::ParamSet s2l_, s2d_;
};

}  // namespace desd
