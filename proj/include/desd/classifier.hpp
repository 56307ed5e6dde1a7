#pragma once

// Expression-classifier probe: a small spiral-conv encoder with an MLP head,
// trained on expression-only displacement frames and used to measure how
// recognizable expressions remain inside combined talk+expr outputs.

#include <desd/nn.hpp>
#include <desd/synthetic.hpp>

namespace desd {

struct ClassifierConfig {
    std::vector<int> channels = {8, 16};
    std::vector<double> factors = {0.5, 0.5};
    int spiral_length = 6;
    int hidden = 32;
    double lr = 1e-3;
    int batch = 32;
    int epochs = 30;
};

class ExprClassifier {
public:
    ExprClassifier(const MeshTopology& topo, const VertexField& neutral,
                   std::vector<std::string> classes, ClassifierConfig cfg, uint64_t seed)
        : cfg_(std::move(cfg)), classes_(std::move(classes)) {
        if (classes_.size() < 2) throw ContractError("classifier: needs at least 2 classes");
        hierarchy_ = build_hierarchy(topo, neutral, cfg_.factors);
        for (size_t l = 0; l < cfg_.factors.size(); ++l)
            spirals_.push_back(compute_spirals(hierarchy_.topo(int(l)), cfg_.spiral_length));

        Rng rng(seed);
        int c_in = 3;
        for (size_t i = 0; i < cfg_.channels.size(); ++i) {
            int c_out = cfg_.channels[i];
            int fan_in = cfg_.spiral_length * c_in;
            std::string base = "conv" + std::to_string(i);
            Rng r = rng.fork(fnv1a(base));
            params_.add(base + ".weight", fan_in, c_out, nn::glorot_init(fan_in, c_out, r));
            params_.add(base + ".bias", 1, c_out, std::vector<double>(c_out, 0.0));
            c_in = c_out;
        }
        const int nk = hierarchy_.topo(int(cfg_.factors.size())).vertex_count;
        const int flat = nk * cfg_.channels.back();
        Rng r1 = rng.fork(fnv1a(std::string("mlp1")));
        params_.add("mlp1.weight", flat, cfg_.hidden, nn::glorot_init(flat, cfg_.hidden, r1));
        params_.add("mlp1.bias", 1, cfg_.hidden, std::vector<double>(cfg_.hidden, 0.0));
        Rng r2 = rng.fork(fnv1a(std::string("mlp2")));
        params_.add("mlp2.weight", cfg_.hidden, int(classes_.size()),
                    nn::glorot_init(cfg_.hidden, int(classes_.size()), r2));
        params_.add("mlp2.bias", 1, int(classes_.size()),
                    std::vector<double>(classes_.size(), 0.0));
    }

    const std::vector<std::string>& classes() const { return classes_; }
    nn::ParamSet& params() { return params_; }

    int class_index(const std::string& name) const {
        for (size_t i = 0; i < classes_.size(); ++i)
            if (classes_[i] == name) return int(i);
        throw ContractError("classifier: unknown class '" + name + "'");
    }

    nn::Var logits_forward(const nn::Var& input) const {
        nn::Var h = input;
        for (size_t i = 0; i < cfg_.channels.size(); ++i) {
            h = nn::spiral_conv(h, spirals_[i],
                                params_.get("conv" + std::to_string(i) + ".weight"),
                                params_.get("conv" + std::to_string(i) + ".bias"));
            h = nn::elu(h);
            h = nn::sparse_apply(h, hierarchy_.levels[i + 1].down);
        }
        const int nk = hierarchy_.topo(int(cfg_.factors.size())).vertex_count;
        const int batch = h.rows() / nk;
        h = nn::reshape(h, batch, nk * cfg_.channels.back());
        h = nn::elu(nn::add_rowvec(nn::matmul(h, params_.get("mlp1.weight")),
                                   params_.get("mlp1.bias")));
        return nn::add_rowvec(nn::matmul(h, params_.get("mlp2.weight")), params_.get("mlp2.bias"));
    }

    std::vector<double> predict_probs(const VertexField& frame) const {
        nn::Var in = nn::Var::leaf(frame.vertex_count, 3, frame.values);
        nn::Var logits = logits_forward(in);
        std::vector<double> p(logits.value());
        double m = *std::max_element(p.begin(), p.end());
        double z = 0;
        for (double& x : p) {
            x = std::exp(x - m);
            z += x;
        }
        for (double& x : p) x /= z;
        return p;
    }

    int predict(const VertexField& frame) const {
        auto p = predict_probs(frame);
        return int(std::max_element(p.begin(), p.end()) - p.begin());
    }

    double accuracy(const std::vector<const VertexField*>& frames,
                    const std::vector<int>& labels) const {
        if (frames.empty()) return 0;
        int hit = 0;
        for (size_t i = 0; i < frames.size(); ++i)
            if (predict(*frames[i]) == labels[i]) ++hit;
        return double(hit) / double(frames.size());
    }

    void train(const std::vector<const VertexField*>& frames, const std::vector<int>& labels,
               uint64_t seed) {
        if (frames.size() != labels.size()) throw ContractError("classifier: frame/label mismatch");
        Rng rng(seed);
        std::vector<int> order(frames.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
        const int n = frames[0]->vertex_count;
        for (int ep = 0; ep < cfg_.epochs; ++ep) {
            for (size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_int(int(i))]);
            for (size_t lo = 0; lo < order.size(); lo += cfg_.batch) {
                size_t hi = std::min(order.size(), lo + cfg_.batch);
                std::vector<double> data;
                std::vector<int> batch_labels;
                data.reserve((hi - lo) * size_t(n) * 3);
                for (size_t i = lo; i < hi; ++i) {
                    const auto& v = frames[order[i]]->values;
                    data.insert(data.end(), v.begin(), v.end());
                    batch_labels.push_back(labels[order[i]]);
                }
                nn::Var input = nn::Var::leaf(int(hi - lo) * n, 3, std::move(data));
                params_.zero_grads();
                nn::Var loss = nn::softmax_cross_entropy(logits_forward(input), batch_labels);
                loss.backward();
                nn::adam_step(params_, cfg_.lr);
            }
        }
    }

private:
    ClassifierConfig cfg_;
    std::vector<std::string> classes_;
    SamplingHierarchy hierarchy_;
    std::vector<SpiralTable> spirals_;
    nn::ParamSet params_;
};

// frame with the strongest upper-region motion; the classifier consumes
// single frames, the peak frame for sequences
inline int peak_frame_index(const DisplacementSequence& seq, const MeshTopology& topo) {
    const auto& upper = topo.region("upper");
    int best = 0;
    double best_e = -1;
    for (int t = 0; t < seq.frame_count(); ++t) {
        double e = 0;
        for (int v : upper)
            for (int c = 0; c < 3; ++c) e += seq.frames[t].at(v, c) * seq.frames[t].at(v, c);
        if (e > best_e) {
            best_e = e;
            best = t;
        }
    }
    return best;
}

// Train on expression-only frames labeled by emotion. Classes must be at
// least two and balanced within a factor of 2.
inline ExprClassifier train_classifier(const MeshTopology& topo, const VertexField& neutral,
                                       const std::vector<DisplacementSequence>& expr_corpus,
                                       const ClassifierConfig& cfg, uint64_t seed) {
    std::map<std::string, int> counts;
    for (const auto& s : expr_corpus)
        if (!s.meta.emotion.empty()) counts[s.meta.emotion] += s.frame_count();
    if (counts.size() < 2) throw ContractError("classifier: corpus has fewer than 2 emotion classes");
    int lo = INT32_MAX, hi = 0;
    for (const auto& [emo, c] : counts) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    if (hi > 2 * lo)
        throw ContractError("classifier: classes unbalanced beyond 2x (" + std::to_string(lo) +
                            " vs " + std::to_string(hi) + " frames)");

    std::vector<std::string> classes;
    for (const auto& [emo, c] : counts) classes.push_back(emo);
    ExprClassifier clf(topo, neutral, classes, cfg, seed);

    std::vector<const VertexField*> frames;
    std::vector<int> labels;
    for (const auto& s : expr_corpus) {
        if (s.meta.emotion.empty()) continue;
        int label = clf.class_index(s.meta.emotion);
        for (const auto& f : s.frames) {
            frames.push_back(&f);
            labels.push_back(label);
        }
    }
    clf.train(frames, labels, seed + 1);
    return clf;
}

// Confusion matrix over single frames; rows = true class, cols = predicted,
// row-normalized percentages.
inline std::vector<std::vector<double>> confusion_matrix(const ExprClassifier& clf,
                                                         const std::vector<const VertexField*>& frames,
                                                         const std::vector<int>& labels) {
    const int k = int(clf.classes().size());
    std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
    std::vector<int> totals(k, 0);
    for (size_t i = 0; i < frames.size(); ++i) {
        m[labels[i]][clf.predict(*frames[i])] += 1.0;
        totals[labels[i]]++;
    }
    for (int r = 0; r < k; ++r)
        if (totals[r] > 0)
            for (int c = 0; c < k; ++c) m[r][c] = 100.0 * m[r][c] / totals[r];
    return m;
}

inline void write_confusion_csv(const std::string& path, const ExprClassifier& clf,
                                const std::vector<std::vector<double>>& m) {
    std::ofstream out(path);
    if (!out) throw IoError("confusion: cannot write '" + path + "'");
    out << "true\\pred";
    for (const auto& c : clf.classes()) out << ',' << c;
    out << '\n';
    char buf[32];
    for (size_t r = 0; r < m.size(); ++r) {
        out << clf.classes()[r];
        for (double x : m[r]) {
            std::snprintf(buf, sizeof buf, ",%.1f", x);
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace desd
