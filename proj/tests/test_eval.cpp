#include <catch2/catch_amalgamated.hpp>

#include <desd/ablation.hpp>
#include <desd/classifier.hpp>
#include <desd/metrics.hpp>
#include <desd/synthetic.hpp>

using namespace desd;

namespace {

struct Fixture {
    MeshTopology topo;
    VertexField neutral;
    Fixture() {
        auto [t, p] = make_face_grid(10, 9);
        topo = std::move(t);
        neutral = std::move(p);
    }

    DisplacementSequence zero_seq(int frames) const {
        DisplacementSequence s;
        for (int t = 0; t < frames; ++t) s.frames.emplace_back(topo);
        return s;
    }
};

// independent direct-summation oracle: explicit per-vertex norms, then the
// frame maximum, then the frame mean
double oracle_metric(const DisplacementSequence& pred, const DisplacementSequence& gt,
                     const std::vector<int>* region, bool agg_max) {
    std::vector<double> frame_vals;
    for (int t = 0; t < pred.frame_count(); ++t) {
        std::vector<int> verts;
        if (region)
            verts = *region;
        else
            for (int v = 0; v < pred.frames[t].vertex_count; ++v) verts.push_back(v);
        double m = 0;
        for (int v : verts) {
            double dx = pred.frames[t].at(v, 0) - gt.frames[t].at(v, 0);
            double dy = pred.frames[t].at(v, 1) - gt.frames[t].at(v, 1);
            double dz = pred.frames[t].at(v, 2) - gt.frames[t].at(v, 2);
            m = std::max(m, std::hypot(dx, std::hypot(dy, dz)));
        }
        frame_vals.push_back(m);
    }
    if (agg_max) return *std::max_element(frame_vals.begin(), frame_vals.end());
    double s = 0;
    for (double x : frame_vals) s += x;
    return s / frame_vals.size();
}

}  // namespace

TEST_CASE_METHOD(Fixture, "metric hand values") {
    SECTION("identical sequences give zero everywhere") {
        auto a = zero_seq(3);
        CHECK(mve(a, a) == 0.0);
        CHECK(uve(a, a, topo) == 0.0);
        CHECK(lve(a, a, topo) == 0.0);
    }
    SECTION("one frame, one vertex off by (3,4,0) is 5 mm") {
        auto pred = zero_seq(1), gt = zero_seq(1);
        pred.frames[0].at(7, 0) = 3;
        pred.frames[0].at(7, 1) = 4;
        CHECK(mve(pred, gt) == Catch::Approx(5.0));
    }
    SECTION("two frames with maxima 2 and 4 average to 3, max to 4") {
        auto pred = zero_seq(2), gt = zero_seq(2);
        pred.frames[0].at(3, 2) = 2;
        pred.frames[1].at(5, 2) = 4;
        CHECK(mve(pred, gt, MetricAgg::Mean) == Catch::Approx(3.0));
        CHECK(mve(pred, gt, MetricAgg::Max) == Catch::Approx(4.0));
    }
    SECTION("lips-confined error leaves UVE at zero") {
        auto pred = zero_seq(1), gt = zero_seq(1);
        int lip_vertex = topo.region("lips")[0];
        pred.frames[0].at(lip_vertex, 2) = 2.0;
        CHECK(uve(pred, gt, topo) == 0.0);
        CHECK(lve(pred, gt, topo) == Catch::Approx(2.0));
        CHECK(mve(pred, gt) == Catch::Approx(2.0));
    }
    SECTION("frame count mismatch and missing masks are contract errors") {
        auto a = zero_seq(2), b = zero_seq(3);
        CHECK_THROWS_AS(mve(a, b), ContractError);
        auto [sphere, spos] = make_icosphere(1);
        DisplacementSequence s;
        s.frames.emplace_back(sphere);
        CHECK_THROWS_AS(uve(s, s, sphere), ContractError);
    }
}

TEST_CASE_METHOD(Fixture, "metrics agree with the direct-summation oracle") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        DisplacementSequence pred, gt;
        int frames = 1 + rng.uniform_int(4);
        for (int t = 0; t < frames; ++t) {
            VertexField a(topo), b(topo);
            for (double& x : a.values) x = rng.normal() * 3;
            for (double& x : b.values) x = rng.normal() * 3;
            pred.frames.push_back(std::move(a));
            gt.frames.push_back(std::move(b));
        }
        for (bool mx : {false, true}) {
            MetricAgg agg = mx ? MetricAgg::Max : MetricAgg::Mean;
            REQUIRE(mve(pred, gt, agg) ==
                    Catch::Approx(oracle_metric(pred, gt, nullptr, mx)).margin(1e-12));
            REQUIRE(uve(pred, gt, topo, agg) ==
                    Catch::Approx(oracle_metric(pred, gt, &topo.region("upper"), mx)).margin(1e-12));
            REQUIRE(lve(pred, gt, topo, agg) ==
                    Catch::Approx(oracle_metric(pred, gt, &topo.region("lips"), mx)).margin(1e-12));
        }
    }
}

TEST_CASE_METHOD(Fixture, "metric properties: region bound, symmetry, scale covariance") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        DisplacementSequence pred, gt;
        VertexField a(topo), b(topo);
        for (double& x : a.values) x = rng.normal();
        for (double& x : b.values) x = rng.normal();
        pred.frames.push_back(a);
        gt.frames.push_back(b);
        double m = mve(pred, gt), u = uve(pred, gt, topo), l = lve(pred, gt, topo);
        REQUIRE(std::max(u, l) <= m + 1e-15);
        REQUIRE(mve(gt, pred) == m);
    }
    // scale covariance
    DisplacementSequence pred, gt;
    VertexField a(topo), b(topo);
    for (double& x : a.values) x = rng.normal();
    pred.frames.push_back(a);
    gt.frames.push_back(b);
    double base = mve(pred, gt);
    DisplacementSequence scaled = pred;
    for (double& x : scaled.frames[0].values) x *= -2.5;
    CHECK(mve(scaled, gt) == Catch::Approx(2.5 * base).epsilon(1e-12));
}

TEST_CASE_METHOD(Fixture, "metric report aggregates and exports") {
    MetricReport report;
    report.rows = {{"a", "happy", 1, 2.0, 0.5, 1.0},
                   {"b", "happy", 2, 4.0, 1.5, 3.0},
                   {"c", "sad", 1, 6.0, 2.5, 5.0}};
    auto overall = report.overall();
    CHECK(overall.mve == Catch::Approx(4.0));
    auto j = report.summary_json();
    CHECK(j["by_emotion"]["happy"]["mve_mm"] == Catch::Approx(3.0));
    CHECK(j["by_intensity"]["1"]["lve_mm"] == Catch::Approx(3.0));

    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "report.csv";
    report.write_csv(p.string());
    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == "id,emotion,intensity,mve_mm,uve_mm,lve_mm");
}

TEST_CASE_METHOD(Fixture, "classifier learns separable classes and stays normalized") {
    CorpusConfig cc;
    cc.seed = 4;
    cc.n_actors = 2;
    cc.n_expressions = 2;
    cc.n_contents = 1;
    cc.frames_per_seq = 24;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);

    // brute-force separability: nearest-centroid on raw frames must already
    // split the two classes before any training
    {
        std::vector<double> c0(neutral.values.size(), 0.0), c1 = c0;
        int n0 = 0, n1 = 0;
        for (const auto& s : corpus.expr)
            for (const auto& f : s.frames) {
                double e = 0;
                for (double x : f.values) e += x * x;
                if (e < 1e-9) continue;
                auto& c = s.meta.emotion == corpus.emotions[0] ? c0 : c1;
                (s.meta.emotion == corpus.emotions[0] ? n0 : n1)++;
                // normalized direction, so the envelope cancels
                for (size_t i = 0; i < f.values.size(); ++i) c[i] += f.values[i] / std::sqrt(e);
            }
        REQUIRE(n0 > 0);
        REQUIRE(n1 > 0);
        double dot = 0, na = 0, nb = 0;
        for (size_t i = 0; i < c0.size(); ++i) {
            dot += c0[i] / n0 * (c1[i] / n1);
            na += c0[i] / n0 * (c0[i] / n0);
            nb += c1[i] / n1 * (c1[i] / n1);
        }
        double cosine = dot / std::sqrt(na * nb);
        REQUIRE(cosine < 0.9); // distinct class directions
    }

    ClassifierConfig cfg;
    cfg.channels = {6, 8};
    cfg.factors = {0.5, 0.5};
    cfg.spiral_length = 5;
    cfg.hidden = 16;
    cfg.epochs = 12;
    auto clf = train_classifier(topo, neutral, corpus.expr, cfg, 5);

    // held-out: same structure, fresh draws
    CorpusConfig held = cc;
    held.variant = 1;
    auto test_corpus = generate_synthetic_corpus(topo, neutral, held);
    std::vector<const VertexField*> frames;
    std::vector<int> labels;
    for (const auto& s : test_corpus.expr) {
        int peak = peak_frame_index(s, topo);
        frames.push_back(&s.frames[peak]);
        labels.push_back(clf.class_index(s.meta.emotion));
    }
    CHECK(clf.accuracy(frames, labels) == 1.0);

    for (const auto* f : frames) {
        auto p = clf.predict_probs(*f);
        double sum = 0;
        for (double x : p) {
            sum += x;
            CHECK(x >= 0.0);
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE_METHOD(Fixture, "untrained and label-shuffled classifiers sit at chance") {
    CorpusConfig cc;
    cc.seed = 6;
    cc.n_actors = 2;
    cc.n_expressions = 4;
    cc.n_contents = 1;
    cc.frames_per_seq = 16;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);

    std::vector<const VertexField*> frames;
    std::vector<int> labels;
    ClassifierConfig cfg;
    cfg.channels = {6, 8};
    cfg.factors = {0.5, 0.5};
    cfg.spiral_length = 5;
    cfg.hidden = 16;
    ExprClassifier untrained(topo, neutral, corpus.emotions, cfg, 11);
    for (const auto& s : corpus.expr)
        for (const auto& f : s.frames) {
            frames.push_back(&f);
            labels.push_back(untrained.class_index(s.meta.emotion));
        }
    const double n = double(frames.size());
    const double chance = 1.0 / 4.0;
    const double margin = 3.0 * std::sqrt(chance * (1 - chance) / n);
    CHECK(untrained.accuracy(frames, labels) <= chance + margin + 1e-12);

    // label permutation destroys the signal
    std::vector<int> shuffled = labels;
    Rng rng(13);
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.uniform_int(int(i))]);
    ClassifierConfig quick = cfg;
    quick.epochs = 6;
    ExprClassifier perm(topo, neutral, corpus.emotions, quick, 17);
    perm.train(frames, shuffled, 19);
    CHECK(perm.accuracy(frames, labels) <= chance + 4.0 * std::sqrt(chance * (1 - chance) / n));
}

TEST_CASE_METHOD(Fixture, "classifier contract errors") {
    CorpusConfig cc;
    cc.n_actors = 1;
    cc.n_expressions = 1;
    cc.n_contents = 1;
    cc.frames_per_seq = 8;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);
    ClassifierConfig cfg;
    CHECK_THROWS_AS(train_classifier(topo, neutral, corpus.expr, cfg, 1), ContractError);

    // unbalanced beyond 2x
    CorpusConfig two = cc;
    two.n_expressions = 2;
    auto c2 = generate_synthetic_corpus(topo, neutral, two);
    auto unbalanced = c2.expr;
    for (int i = 0; i < 2; ++i) unbalanced.push_back(c2.expr[0]); // happy 3x vs 1x
    CHECK_THROWS_AS(train_classifier(topo, neutral, unbalanced, cfg, 1), ContractError);
}

TEST_CASE_METHOD(Fixture, "confusion matrix rows are percentages") {
    CorpusConfig cc;
    cc.n_actors = 1;
    cc.n_expressions = 2;
    cc.n_contents = 1;
    cc.frames_per_seq = 8;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);
    ClassifierConfig cfg;
    cfg.channels = {4};
    cfg.factors = {0.5};
    cfg.spiral_length = 4;
    cfg.hidden = 8;
    ExprClassifier clf(topo, neutral, corpus.emotions, cfg, 3);
    std::vector<const VertexField*> frames;
    std::vector<int> labels;
    for (const auto& s : corpus.expr)
        for (const auto& f : s.frames) {
            frames.push_back(&f);
            labels.push_back(clf.class_index(s.meta.emotion));
        }
    auto m = confusion_matrix(clf, frames, labels);
    REQUIRE(m.size() == 2);
    for (const auto& row : m) {
        double sum = 0;
        for (double x : row) sum += x;
        CHECK(sum == Catch::Approx(100.0).margin(1e-9));
    }
}

TEST_CASE_METHOD(Fixture, "activation disjointness conventions") {
    ModelConfig mc;
    mc.latent_dim = 6;
    mc.channels = {4, 6};
    mc.factors = {0.5, 0.5};
    mc.spiral_length = 4;

    SECTION("zero inputs on a fresh model give empty active sets and zero scores") {
        DesdModel model(topo, neutral, mc, 5);
        VertexField zero(topo);
        auto scores = activation_disjointness(model, zero, zero);
        REQUIRE(int(scores.size()) == model.depth());
        for (const auto& s : scores) {
            CHECK(s.jaccard == 0.0);
            CHECK(s.coverage == 0.0);
        }
    }
    SECTION("identical latents on both paths give full overlap and coverage") {
        ModelConfig shared = mc;
        shared.single_encoder = true;
        DesdModel model(topo, neutral, shared, 7);
        VertexField s(topo);
        Rng rng(3);
        for (double& x : s.values) x = rng.normal();
        auto scores = activation_disjointness(model, s, s);
        for (const auto& sc : scores) {
            CHECK(sc.jaccard == 1.0);
            CHECK(sc.coverage == 1.0);
        }
    }
}

TEST_CASE_METHOD(Fixture, "ablation rows: absent models and determinism") {
    ModelConfig mc;
    mc.latent_dim = 6;
    mc.channels = {4, 6};
    mc.factors = {0.5, 0.5};
    mc.spiral_length = 4;
    DesdModel model(topo, neutral, mc, 9);

    CorpusConfig cc;
    cc.n_actors = 1;
    cc.n_expressions = 2;
    cc.n_contents = 1;
    cc.frames_per_seq = 8;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);
    ClassifierConfig cfg;
    cfg.channels = {4};
    cfg.factors = {0.5};
    cfg.spiral_length = 4;
    cfg.hidden = 8;
    cfg.epochs = 2;
    auto clf = train_classifier(topo, neutral, corpus.expr, cfg, 3);

    std::vector<AblationPair> pairs;
    pairs.push_back({&corpus.talk[0], &corpus.expr[0]});
    pairs.push_back({&corpus.talk[0], &corpus.expr[1]});

    std::vector<AblationVariant> variants = {
        {"desd", &model, MixStrategy::Concat},
        {"reversed", &model, MixStrategy::Reversed},
        {"missing", nullptr, MixStrategy::Sum},
    };
    auto rows = ablate_strategies(variants, clf, pairs, {0.5, 1.0}, 1.0, topo);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].present);
    CHECK_FALSE(rows[2].present);
    CHECK(rows[0].accuracy.size() == 2);

    auto rows2 = ablate_strategies(variants, clf, pairs, {0.5, 1.0}, 1.0, topo);
    CHECK(rows[0].lve_vs_talk == rows2[0].lve_vs_talk);
    CHECK(rows[0].accuracy == rows2[0].accuracy);

    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "ablation.csv";
    write_ablation_csv(p.string(), rows);
    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == "model,I1_acc,I2_acc,lve_vs_talk_mm,uve_vs_expr_mm,present");
}

TEST_CASE("ablation report formats the reference row") {
    // report-format fixture with externally published values
    AblationRow row;
    row.name = "DE-SD";
    row.present = true;
    row.accuracy = {0.46, 0.71, 0.82};
    row.lve_vs_talk = 5.861;
    row.uve_vs_expr = 0.981;
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / "fixture_row.csv";
    write_ablation_csv(p.string(), {row});
    std::ifstream in(p);
    std::string header, line;
    std::getline(in, header);
    std::getline(in, line);
    CHECK(line == "DE-SD,0.460,0.710,0.820,5.861,0.981,yes");
}
