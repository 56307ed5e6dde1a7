#include <catch2/catch_amalgamated.hpp>

#include <desd/nn.hpp>

#include <filesystem>

using namespace desd;
using namespace desd::nn;

namespace {

MeshTopology tetra() {
    MeshTopology t;
    t.vertex_count = 4;
    t.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
    t.finalize();
    return t;
}

std::vector<double> random_vec(size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal() * scale;
    return v;
}

}  // namespace

TEST_CASE("scalar affine spiral conv on a one-vertex mesh") {
    SpiralTable table;
    table.spiral_length = 1;
    table.vertex_count = 1;
    table.entries = {0};
    Var input = Var::leaf(1, 1, {3.0});
    Var weight = Var::leaf(1, 1, {2.0});
    Var bias = Var::leaf(1, 1, {1.0});
    Var out = spiral_conv(input, table, weight, bias);
    CHECK(out.value()[0] == Catch::Approx(7.0));
}

TEST_CASE("zero input and zero bias give zero output") {
    auto topo = tetra();
    auto table = compute_spirals(topo, 4);
    Var input = Var::zeros(4, 3);
    Var weight = Var::leaf(12, 5, std::vector<double>(60, 0.7));
    Var bias = Var::zeros(1, 5);
    Var out = spiral_conv(input, table, weight, bias);
    for (double x : out.value()) CHECK(x == 0.0);
}

TEST_CASE("shape mismatches name both shapes") {
    Var a = Var::zeros(2, 3);
    Var b = Var::zeros(3, 3);
    CHECK_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("[2,3]") &&
                                     Catch::Matchers::ContainsSubstring("[3,3]"));
    CHECK_THROWS_AS(matmul(a, Var::zeros(2, 2)), ContractError);
}

TEST_CASE("non-finite values are a hard error") {
    CHECK_THROWS_AS(Var::leaf(1, 1, {std::nan("")}), NumericError);
    Var big = Var::leaf(1, 1, {1e308});
    CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("weighted l2 loss hand values") {
    SECTION("identity gives zero") {
        Var p = Var::leaf(4, 3, random_vec(12, *new Rng(1)));
        VertexWeights w = VertexWeights::uniform(4);
        CHECK(weighted_l2_loss(p, p, w).item() == 0.0);
    }
    SECTION("one vertex off by a unit vector, uniform weights") {
        Var pred = Var::zeros(4, 3);
        std::vector<double> t(12, 0.0);
        t[0] = 1.0; // vertex 0 offset (1,0,0)
        Var target = Var::leaf(4, 3, t);
        CHECK(weighted_l2_loss(pred, target, VertexWeights::uniform(4)).item() ==
              Catch::Approx(0.25));
    }
    SECTION("two vertices, weights 4/3 and 2/3, offsets of norm 3") {
        Var pred = Var::zeros(2, 3);
        Var target = Var::leaf(2, 3, {3, 0, 0, 0, 0, 3});
        VertexWeights w;
        w.w = {4.0 / 3.0, 2.0 / 3.0};
        CHECK(weighted_l2_loss(pred, target, w).item() == Catch::Approx(3.0));
    }
}

TEST_CASE("loss is positive unless prediction matches target") {
    Rng rng(11);
    Var pred = Var::leaf(5, 3, random_vec(15, rng));
    Var target = Var::leaf(5, 3, random_vec(15, rng));
    VertexWeights w;
    w.w = {0.5, 1.5, 1.0, 0.25, 1.75};
    CHECK(weighted_l2_loss(pred, target, w).item() > 0.0);
}

TEST_CASE("spiral conv gradient matches finite differences") {
    auto topo = tetra();
    auto table = compute_spirals(topo, 4);
    Rng rng(42);
    Var input = Var::leaf(4, 3, random_vec(12, rng), true);
    Var weight = Var::leaf(12, 2, random_vec(24, rng), true);
    Var bias = Var::leaf(1, 2, random_vec(2, rng), true);
    auto f = [&](const std::vector<Var>& in) {
        Var out = spiral_conv(in[0], table, in[1], in[2]);
        return scale(sum_all(mul(out, out)), 0.5);
    };
    double err = grad_check(f, {input, weight, bias});
    CHECK(err < 1e-6);
}

TEST_CASE("pure affine path is exact to float noise") {
    Rng rng(3);
    Var x = Var::leaf(3, 3, random_vec(9, rng), true);
    Var w = Var::leaf(3, 2, random_vec(6, rng));
    auto f = [&](const std::vector<Var>& in) { return sum_all(matmul(in[0], w)); };
    CHECK(grad_check(f, {x}) < 1e-9);
}

TEST_CASE("weighted loss gradient away from the kink") {
    Rng rng(5);
    Var pred = Var::leaf(6, 3, random_vec(18, rng), true);
    Var target = Var::leaf(6, 3, random_vec(18, rng));
    VertexWeights w;
    w.w = {1.2, 0.8, 1.0, 0.5, 1.5, 1.0};
    auto f = [&](const std::vector<Var>& in) { return weighted_l2_loss(in[0], target, w); };
    CHECK(grad_check(f, {pred}) < 1e-5);
}

TEST_CASE("activations and recurrent-style graphs gradcheck") {
    Rng rng(9);
    Var x = Var::leaf(2, 4, random_vec(8, rng), true);
    Var w = Var::leaf(4, 4, random_vec(16, rng), true);
    auto f = [&](const std::vector<Var>& in) {
        Var h = elu(matmul(in[0], in[1]));
        Var z = sigmoid(matmul(h, in[1]));
        Var g = tanh_op(add(h, z));
        return sum_all(mul(g, g));
    };
    CHECK(grad_check(f, {x, w}) < 1e-6);
}

TEST_CASE("backprop is linear in the loss combination") {
    Rng rng(13);
    auto run = [&](double a, double b, std::vector<double>& grad_out) {
        Var x = Var::leaf(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}, true);
        Var w1 = Var::leaf(3, 1, {0.5, -1, 2});
        Var w2 = Var::leaf(3, 1, {1, 1, -0.5});
        Var l1 = sum_all(mul(matmul(x, w1), matmul(x, w1)));
        Var l2 = sum_all(mul(matmul(x, w2), matmul(x, w2)));
        Var combo = add(scale(l1, a), scale(l2, b));
        combo.backward();
        grad_out = x.grad();
    };
    std::vector<double> g1, g2, gc;
    run(1, 0, g1);
    run(0, 1, g2);
    run(0.3, -0.7, gc);
    for (size_t i = 0; i < gc.size(); ++i)
        REQUIRE(gc[i] == Catch::Approx(0.3 * g1[i] - 0.7 * g2[i]).margin(1e-9));
}

TEST_CASE("gather and scatter are adjoint") {
    auto topo = tetra();
    auto table = compute_spirals(topo, 3);
    Rng rng(21);
    std::vector<double> xv = random_vec(4 * 2, rng);
    std::vector<double> yv = random_vec(4 * 6, rng);
    Var x = Var::leaf(4, 2, xv, true);
    Var g = gather_spiral(x, table);
    // <gather(x), y>
    double inner_forward = 0;
    for (size_t i = 0; i < yv.size(); ++i) inner_forward += g.value()[i] * yv[i];
    // backward with upstream y gives scatter(y) in x.grad
    Var s = sum_all(mul(g, Var::leaf(4, 6, yv)));
    s.backward();
    double inner_adjoint = 0;
    for (size_t i = 0; i < xv.size(); ++i) inner_adjoint += xv[i] * x.grad()[i];
    CHECK(inner_forward == Catch::Approx(inner_adjoint).margin(1e-12));
}

TEST_CASE("graph reachability tracks parameter participation") {
    Var a = Var::leaf(1, 2, {1, 2}, true);
    Var b = Var::leaf(1, 2, {3, 4}, true);
    Var loss = sum_all(mul(a, a));
    CHECK(loss.depends_on(a));
    CHECK_FALSE(loss.depends_on(b));
    loss.backward();
    CHECK(a.has_grad());
    CHECK_FALSE(b.has_grad());
}

TEST_CASE("adam hand-checked steps") {
    SECTION("zero gradient leaves parameters unchanged") {
        ParamSet ps;
        Var p = ps.add("p", 1, 2, {1.5, -2.5});
        Var loss = sum_all(mul(sub(p, p), p)); // identically zero, zero grads
        loss.backward();
        adam_step(ps, 1e-3);
        CHECK(p.value()[0] == 1.5);
        CHECK(p.value()[1] == -2.5);
    }
    SECTION("first step moves by about minus lr") {
        ParamSet ps;
        Var p = ps.add("theta", 1, 1, {0.0});
        Var loss = sum_all(p); // d/dp = 1
        loss.backward();
        adam_step(ps, 1e-3);
        CHECK(p.value()[0] == Catch::Approx(-1e-3).epsilon(1e-6));
        CHECK(ps.step_count() == 1);
    }
    SECTION("identical parameters receive identical updates") {
        ParamSet ps;
        Var a = ps.add("a", 1, 1, {0.7});
        Var b = ps.add("b", 1, 1, {0.7});
        Var loss = sum_all(mul(add(a, b), add(a, b)));
        loss.backward();
        adam_step(ps, 1e-2);
        CHECK(a.value()[0] == b.value()[0]);
    }
    SECTION("missing gradient is a consistency error") {
        ParamSet ps;
        Var a = ps.add("a", 1, 1, {1.0});
        ps.add("unused", 1, 1, {2.0});
        Var loss = sum_all(a);
        loss.backward();
        CHECK_THROWS_AS(adam_step(ps, 1e-3), ContractError);
    }
}

TEST_CASE("softmax cross entropy gradcheck and normalization") {
    Rng rng(17);
    Var logits = Var::leaf(3, 4, random_vec(12, rng), true);
    std::vector<int> labels = {2, 0, 3};
    auto f = [&](const std::vector<Var>& in) { return softmax_cross_entropy(in[0], labels); };
    CHECK(grad_check(f, {logits}) < 1e-6);
}

TEST_CASE("sparse apply matches dense application and gradchecks") {
    SparseMat m;
    m.rows = 2;
    m.cols = 3;
    m.row_entries = {{{0, 0.5}, {2, 0.5}}, {{1, 1.0}}};
    Rng rng(23);
    Var x = Var::leaf(3, 2, random_vec(6, rng), true);
    Var y = sparse_apply(x, m);
    CHECK(y.value()[0] == Catch::Approx(0.5 * x.value()[0] + 0.5 * x.value()[4]));
    auto f = [&](const std::vector<Var>& in) {
        Var out = sparse_apply(in[0], m);
        return sum_all(mul(out, out));
    };
    CHECK(grad_check(f, {x}) < 1e-8);
}

TEST_CASE("checkpoint round trip preserves names, shapes, payloads") {
    namespace fs = std::filesystem;
    Rng rng(31);
    ParamSet ps;
    ps.add("layer0.weight", 3, 4, random_vec(12, rng));
    ps.add("layer0.bias", 1, 4, random_vec(4, rng));
    fs::path p = fs::temp_directory_path() / "ck_test.desd";
    save_checkpoint(p.string(), ps.items());
    auto ck = load_checkpoint(p.string());
    REQUIRE(ck.size() == 2);
    REQUIRE(ck.count("layer0.weight") == 1);
    CHECK(ck["layer0.weight"].dims == std::vector<uint64_t>{3, 4});
    CHECK(ck["layer0.weight"].data == ps.get("layer0.weight").value());

    ParamSet fresh;
    fresh.add("layer0.weight", 3, 4, std::vector<double>(12, 0.0));
    fresh.add("layer0.bias", 1, 4, std::vector<double>(4, 0.0));
    load_into_params(fresh, ck);
    CHECK(fresh.get("layer0.bias").value() == ps.get("layer0.bias").value());

    CHECK_THROWS_AS(load_checkpoint("/nonexistent/x.desd"), IoError);
}

TEST_CASE("grad_check rejects non-scalar outputs and non-grad inputs") {
    Var x = Var::leaf(2, 2, {1, 2, 3, 4}, true);
    auto bad = [&](const std::vector<Var>& in) { return add(in[0], in[0]); };
    CHECK_THROWS_AS(grad_check(bad, {x}), ContractError);
    Var frozen = Var::leaf(1, 1, {1.0});
    auto ok = [&](const std::vector<Var>& in) { return sum_all(in[0]); };
    CHECK_THROWS_AS(grad_check(ok, {frozen}), ContractError);
}
