#include <catch2/catch_amalgamated.hpp>

#include <desd/model.hpp>
#include <desd/synthetic.hpp>
#include <desd/train.hpp>

#include <filesystem>

using namespace desd;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.latent_dim = 8;
    cfg.channels = {6, 8};
    cfg.factors = {0.5, 0.5};
    cfg.spiral_length = 5;
    return cfg;
}

struct Fixture {
    MeshTopology topo;
    VertexField neutral;
    Fixture() {
        auto [t, p] = make_face_grid(10, 9);
        topo = std::move(t);
        neutral = std::move(p);
    }
};

VertexField random_field(const MeshTopology& topo, uint64_t seed) {
    VertexField f(topo);
    Rng rng(seed);
    for (double& x : f.values) x = rng.normal();
    return f;
}

}  // namespace

TEST_CASE("mix_latents recipes") {
    LatentCode ft{{1, 2}, Which::Talk};
    LatentCode fe{{2, 2}, Which::Expr};

    CHECK(mix_latents({MixStrategy::DuplicateTalk}, ft, std::nullopt) ==
          std::vector<double>{1, 2, 1, 2});
    CHECK(mix_latents({MixStrategy::DuplicateExpr}, std::nullopt, fe) ==
          std::vector<double>{2, 2, 2, 2});

    LatentCode f10{{1, 0}, Which::Talk};
    CHECK(mix_latents({MixStrategy::Concat, 1.0, 0.5}, f10, fe) ==
          std::vector<double>{1, 0, 1, 1});

    SECTION("zero mu_e concat equals zero_cat_talk") {
        auto a = mix_latents({MixStrategy::Concat, 1.0, 0.0}, ft, fe);
        auto b = mix_latents({MixStrategy::ZeroCatTalk, 1.0, 0.7}, ft, std::nullopt);
        CHECK(a == b);
        auto c = mix_latents({MixStrategy::Concat, 0.0, 0.8}, ft, fe);
        auto d = mix_latents({MixStrategy::ZeroCatExpr, 1.0, 0.8}, std::nullopt, fe);
        CHECK(c == d);
    }
    SECTION("reversed is concat with swapped halves") {
        auto r = mix_latents({MixStrategy::Reversed, 0.3, 1.7}, ft, fe);
        auto expect = mix_latents({MixStrategy::Concat, 1.7, 0.3}, LatentCode{fe.values, Which::Talk},
                                  LatentCode{ft.values, Which::Expr});
        CHECK(r == expect);
    }
    SECTION("sum duplicates the weighted sum") {
        auto s = mix_latents({MixStrategy::Sum, 2.0, 1.0}, ft, fe);
        CHECK(s == std::vector<double>{4, 6, 4, 6});
    }
    SECTION("missing latents are contract errors") {
        CHECK_THROWS_AS(mix_latents({MixStrategy::DuplicateTalk}, std::nullopt, fe), ContractError);
        CHECK_THROWS_AS(mix_latents({MixStrategy::Concat}, ft, std::nullopt), ContractError);
    }
}

TEST_CASE_METHOD(Fixture, "fresh model maps zero to zero") {
    DesdModel model(topo, neutral, tiny_config(), 7);
    VertexField zero(topo);
    LatentCode z = model.encode(zero, Which::Talk);
    REQUIRE(int(z.values.size()) == model.latent_dim());
    for (double x : z.values) CHECK(x == 0.0);

    VertexField out = model.decode(std::vector<double>(2 * model.latent_dim(), 0.0));
    for (double x : out.values) CHECK(x == 0.0);
}

TEST_CASE_METHOD(Fixture, "encode is deterministic and shape-checked") {
    DesdModel model(topo, neutral, tiny_config(), 7);
    VertexField s = random_field(topo, 3);
    LatentCode a = model.encode(s, Which::Talk);
    LatentCode b = model.encode(s, Which::Talk);
    CHECK(a.values == b.values);
    for (double x : a.values) CHECK(std::isfinite(x));

    LatentCode e = model.encode(s, Which::Expr);
    CHECK(a.values != e.values); // separate parameters

    auto [other, opos] = make_icosphere(1);
    VertexField wrong(other);
    CHECK_THROWS_AS(model.encode(wrong, Which::Talk), ContractError);
    CHECK_THROWS_AS(model.decode(std::vector<double>(3, 0.0)), ContractError);
}

TEST_CASE_METHOD(Fixture, "decode of a duplicate mix matches the training-time forward") {
    DesdModel model(topo, neutral, tiny_config(), 7);
    VertexField s = random_field(topo, 5);
    LatentCode f = model.encode(s, Which::Talk);
    VertexField via_mix = model.decode(mix_latents({MixStrategy::DuplicateTalk}, f, std::nullopt));

    nn::Var input = nn::Var::leaf(topo.vertex_count, 3, s.values);
    nn::Var z = model.encoder_forward(Which::Talk, input);
    nn::Var pred = model.decoder_forward(nn::concat_cols(z, z));
    REQUIRE(via_mix.values.size() == pred.value().size());
    for (size_t i = 0; i < via_mix.values.size(); ++i)
        REQUIRE(via_mix.values[i] == pred.value()[i]); // bitwise
}

TEST_CASE_METHOD(Fixture, "talk loss cannot reach expression-encoder parameters") {
    DesdModel model(topo, neutral, tiny_config(), 7);
    VertexField s = random_field(topo, 9);
    nn::Var input = nn::Var::leaf(topo.vertex_count, 3, s.values);
    nn::Var z = model.encoder_forward(Which::Talk, input);
    nn::Var pred = model.decoder_forward(nn::concat_cols(z, z));
    nn::Var loss = nn::weighted_l2_loss(pred, input, VertexWeights::uniform(topo.vertex_count));

    CHECK(loss.depends_on(model.encoder_params(Which::Talk).items()[0].second));
    CHECK(loss.depends_on(model.decoder_params().items()[0].second));
    for (const auto& [name, p] : model.encoder_params(Which::Expr).items())
        CHECK_FALSE(loss.depends_on(p));
}

TEST_CASE_METHOD(Fixture, "one batch per stream is exactly two optimizer steps each way") {
    DesdModel model(topo, neutral, tiny_config(), 7);
    CorpusConfig cc;
    cc.n_actors = 1;
    cc.n_contents = 1;
    cc.n_expressions = 2;
    cc.frames_per_seq = 4;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);

    TrainConfig tc;
    tc.batch = 16; // larger than either stream -> one batch each
    tc.epochs = 1;
    DesdTrainer trainer(model, vertex_weights(topo, neutral), tc);
    trainer.train(corpus.talk, corpus.expr);
    CHECK(model.encoder_params(Which::Talk).step_count() == 1);
    CHECK(model.encoder_params(Which::Expr).step_count() == 1);
    CHECK(model.decoder_params().step_count() == 2);
}

TEST_CASE_METHOD(Fixture, "a short training run reduces both losses") {
    DesdModel model(topo, neutral, tiny_config(), 11);
    CorpusConfig cc;
    cc.n_actors = 1;
    cc.n_contents = 2;
    cc.n_expressions = 2;
    cc.frames_per_seq = 16;
    auto corpus = generate_synthetic_corpus(topo, neutral, cc);

    TrainConfig tc;
    tc.epochs = 60;
    tc.batch = 16;
    tc.lr = 3e-3;
    tc.seed = 5;
    DesdTrainer trainer(model, vertex_weights(topo, neutral), tc);
    auto history = trainer.train(corpus.talk, corpus.expr);
    CHECK(history.back().talk < 0.5 * history.front().talk);
    CHECK(history.back().expr < 0.5 * history.front().expr);

    // loss decreases monotonically in the epoch-averaged sense most of the time
    int drops = 0;
    for (size_t i = 1; i < history.size(); ++i)
        if (history[i].talk <= history[i - 1].talk) ++drops;
    CHECK(drops >= int(history.size()) * 2 / 3);
}

TEST_CASE_METHOD(Fixture, "fixed seeds reproduce training bitwise") {
    auto run = [&](uint64_t seed) {
        DesdModel model(topo, neutral, tiny_config(), seed);
        CorpusConfig cc;
        cc.n_actors = 1;
        cc.n_contents = 1;
        cc.n_expressions = 2;
        cc.frames_per_seq = 8;
        auto corpus = generate_synthetic_corpus(topo, neutral, cc);
        TrainConfig tc;
        tc.epochs = 3;
        tc.seed = seed;
        DesdTrainer trainer(model, vertex_weights(topo, neutral), tc);
        trainer.train(corpus.talk, corpus.expr);
        std::vector<double> flat;
        for (const auto& [name, v] : model.all_parameters())
            flat.insert(flat.end(), v.value().begin(), v.value().end());
        return flat;
    };
    CHECK(run(3) == run(3));
    CHECK(run(3) != run(4));
}

TEST_CASE_METHOD(Fixture, "checkpoint round trip restores the model") {
    namespace fs = std::filesystem;
    DesdModel model(topo, neutral, tiny_config(), 13);
    VertexField s = random_field(topo, 21);
    LatentCode before = model.encode(s, Which::Expr);

    fs::path p = fs::temp_directory_path() / "model_ck.desd";
    model.save(p.string());
    DesdModel other(topo, neutral, tiny_config(), 999); // different init
    other.load(p.string());
    LatentCode after = other.encode(s, Which::Expr);
    CHECK(before.values == after.values);
}

TEST_CASE_METHOD(Fixture, "infer_combined edge cases") {
    DesdModel model(topo, neutral, tiny_config(), 17);
    VertexField st = random_field(topo, 31);
    VertexField se = random_field(topo, 32);

    SECTION("mu_e = 0 equals the zero_cat_talk path") {
        VertexField a = model.infer_combined(st, se, 1.0, 0.0);
        LatentCode ft = model.encode(st, Which::Talk);
        VertexField b = model.decode(mix_latents({MixStrategy::ZeroCatTalk}, ft, std::nullopt));
        CHECK(a.values == b.values);
    }
    SECTION("both mu zero on a fresh model gives the zero field") {
        VertexField out = model.infer_combined(st, se, 0.0, 0.0);
        for (double x : out.values) CHECK(x == 0.0);
    }
    SECTION("deterministic") {
        VertexField a = model.infer_combined(st, se, 1.0, 1.0);
        VertexField b = model.infer_combined(st, se, 1.0, 1.0);
        CHECK(a.values == b.values);
    }
}

TEST_CASE_METHOD(Fixture, "activation capture shapes and the zero case") {
    DesdModel model(topo, neutral, tiny_config(), 19);
    auto maps = model.capture_activations(std::vector<double>(2 * model.latent_dim(), 0.0));
    REQUIRE(int(maps.size()) == model.depth());
    // zero code, zero biases: every decoder layer is silent
    for (const auto& layer : maps)
        for (double x : layer) CHECK(x == 0.0);
    // layer l sits on hierarchy level depth-1-l
    for (int l = 0; l < model.depth(); ++l)
        CHECK(int(maps[l].size()) == model.hierarchy().topo(model.depth() - 1 - l).vertex_count);
}

TEST_CASE_METHOD(Fixture, "apply_to_neutral is the inverse of neutral_subtract") {
    VertexField m = random_field(topo, 41);
    VertexField zero(topo);
    CHECK(apply_to_neutral(neutral, zero).values == neutral.values);

    VertexField s = neutral_subtract(m, neutral);
    VertexField back = apply_to_neutral(neutral, s);
    for (size_t i = 0; i < m.values.size(); ++i)
        REQUIRE(back.values[i] == Catch::Approx(m.values[i]).margin(1e-12));
}

TEST_CASE_METHOD(Fixture, "single-encoder mode shares parameters") {
    ModelConfig cfg = tiny_config();
    cfg.single_encoder = true;
    DesdModel model(topo, neutral, cfg, 23);
    VertexField s = random_field(topo, 43);
    CHECK(model.encode(s, Which::Talk).values == model.encode(s, Which::Expr).values);
}
