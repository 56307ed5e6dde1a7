#include <catch2/catch_amalgamated.hpp>

#include <desd/mesh.hpp>
#include <desd/weights.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

using namespace desd;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p;
}

const char* kTetraObj =
    "v 0 0 0\n"
    "v 1 0 0\n"
    "v 0 1 0\n"
    "v 0 0 1\n"
    "f 1 2 3\n"
    "f 1 3 4\n"
    "f 1 4 2\n"
    "f 2 4 3\n";

}  // namespace

TEST_CASE("single triangle obj") {
    auto p = write_temp("tri.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    auto [topo, pos] = load_obj(p.string());
    CHECK(topo.vertex_count == 3);
    CHECK(topo.faces.size() == 1);
    CHECK(pos.at(1, 0) == 1.0);
    CHECK(topo.landmarks.empty());
}

TEST_CASE("tetrahedron is manifold with 6 edges each shared twice") {
    auto p = write_temp("tetra.obj", kTetraObj);
    auto [topo, pos] = load_obj(p.string());
    CHECK(topo.vertex_count == 4);
    CHECK(topo.faces.size() == 4);

    std::map<std::pair<int, int>, int> edges;
    for (const auto& f : topo.faces)
        for (int k = 0; k < 3; ++k) {
            auto e = std::minmax(f[k], f[(k + 1) % 3]);
            edges[{e.first, e.second}]++;
        }
    CHECK(edges.size() == 6);
    for (const auto& [e, count] : edges) CHECK(count == 2);
}

TEST_CASE("quad face is rejected") {
    auto p = write_temp("quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    CHECK_THROWS_AS(load_obj(p.string()), ContractError);
    CHECK_THROWS_WITH(load_obj(p.string()), Catch::Matchers::ContainsSubstring("line 5"));
}

TEST_CASE("missing file and bad index") {
    CHECK_THROWS_AS(load_obj("/nonexistent/nowhere.obj"), IoError);
    auto p = write_temp("bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
    CHECK_THROWS_AS(load_obj(p.string()), ContractError);
}

TEST_CASE("sidecar metadata round trip") {
    auto p = write_temp("meta.obj", kTetraObj);
    write_temp("meta.obj.meta.json",
               R"({"landmarks": [0, 2], "regions": {"lips": [1], "upper": [2, 3]}})");
    auto [topo, pos] = load_obj(p.string());
    REQUIRE(topo.landmarks == std::vector<int>{0, 2});
    CHECK(topo.region("lips") == std::vector<int>{1});
    CHECK(topo.region("upper") == std::vector<int>{2, 3});
    CHECK_THROWS_AS(topo.region("nose"), ContractError);

    fs::path out = fs::temp_directory_path() / "meta_out.obj";
    save_obj(out.string(), topo, pos);
    auto [topo2, pos2] = load_obj(out.string());
    CHECK(topo2.landmarks == topo.landmarks);
    CHECK(topo2.regions == topo.regions);
    CHECK(topo2.id == topo.id);
    for (size_t i = 0; i < pos.values.size(); ++i)
        CHECK(pos2.values[i] == Catch::Approx(pos.values[i]).margin(1e-9));
}

TEST_CASE("duplicate landmark and non-manifold edge are rejected") {
    MeshTopology topo;
    topo.vertex_count = 4;
    topo.faces = {{0, 1, 2}};
    topo.landmarks = {1, 1};
    CHECK_THROWS_AS(topo.finalize(), ContractError);

    MeshTopology bad;
    bad.vertex_count = 5;
    bad.faces = {{0, 1, 2}, {0, 1, 3}, {0, 1, 4}};
    CHECK_THROWS_AS(bad.finalize(), ContractError);
}

TEST_CASE("icosphere subdivision counts") {
    auto [t0, p0] = make_icosphere(0);
    auto [t2, p2] = make_icosphere(2);
    CHECK(t0.vertex_count == 12);
    CHECK(t2.vertex_count == 162);
    CHECK(t2.faces.size() == 320);
    // closed manifold: every edge in exactly 2 faces
    std::map<std::pair<int, int>, int> edges;
    for (const auto& f : t2.faces)
        for (int k = 0; k < 3; ++k) {
            auto e = std::minmax(f[k], f[(k + 1) % 3]);
            edges[{e.first, e.second}]++;
        }
    for (const auto& [e, count] : edges) REQUIRE(count == 2);
}

TEST_CASE("face grid carries 68 landmarks and required regions") {
    auto [topo, pos] = make_face_grid();
    CHECK(topo.vertex_count == 16 * 14);
    CHECK(topo.landmarks.size() == 68);
    std::set<int> uniq(topo.landmarks.begin(), topo.landmarks.end());
    CHECK(uniq.size() == 68);
    CHECK(topo.has_region("lips"));
    CHECK(topo.has_region("upper"));
    // lips and upper are disjoint
    std::set<int> lips(topo.region("lips").begin(), topo.region("lips").end());
    for (int v : topo.region("upper")) CHECK(lips.count(v) == 0);
}

TEST_CASE("vertex weight formula") {
    auto w = detail::weights_from_distances({1.0, 3.0});
    CHECK(w.w[0] == Catch::Approx(4.0 / 3.0));
    CHECK(w.w[1] == Catch::Approx(2.0 / 3.0));

    auto raw_zero = detail::weights_from_distances({0.0});
    CHECK(raw_zero.w[0] == Catch::Approx(1.0)); // mean-1 of a single weight

    auto uniform = detail::weights_from_distances({5.0, 5.0, 5.0});
    for (double x : uniform.w) CHECK(x == Catch::Approx(1.0));
}

TEST_CASE("vertex weights on a mesh: landmark vertex carries the max weight") {
    auto [topo, pos] = make_face_grid();
    auto w = vertex_weights(topo, pos);
    REQUIRE(int(w.w.size()) == topo.vertex_count);
    double mean = 0;
    for (double x : w.w) {
        CHECK(x > 0);
        mean += x;
    }
    mean /= double(w.w.size());
    CHECK(mean == Catch::Approx(1.0).epsilon(1e-9));
    // every landmark vertex has distance 0, hence the maximal weight
    double wmax = *std::max_element(w.w.begin(), w.w.end());
    for (int lm : topo.landmarks) CHECK(w.w[lm] == Catch::Approx(wmax));
}

TEST_CASE("weight ordering is invariant to uniform distance scaling") {
    Rng rng(7);
    std::vector<double> d(40);
    for (double& x : d) x = rng.uniform(0.1, 30.0);
    auto base = detail::weights_from_distances(d);
    std::vector<double> scaled = d;
    for (double& x : scaled) x *= 3.7;
    auto other = detail::weights_from_distances(scaled);
    auto order = [](const std::vector<double>& w) {
        std::vector<int> idx(w.size());
        for (size_t i = 0; i < w.size(); ++i) idx[i] = int(i);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return w[a] > w[b]; });
        return idx;
    };
    CHECK(order(base.w) == order(other.w));
}

TEST_CASE("weights demand landmarks") {
    auto [topo, pos] = make_icosphere(0);
    CHECK_THROWS_AS(vertex_weights(topo, pos), ContractError);
}
