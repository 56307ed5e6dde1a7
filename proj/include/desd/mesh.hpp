#pragma once

// Triangle-mesh connectivity and per-vertex 3D fields. Topology is fixed and
// immutable after construction; all learning operates on VertexField data
// (positions or displacements, millimeters) bound to a topology by id.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <desd/common.hpp>
#include <json.hpp>

namespace desd {

struct MeshTopology {
    int vertex_count = 0;
    std::vector<std::array<int, 3>> faces;
    std::vector<int> landmarks;                      // ordered, 68 in the standard layout
    std::map<std::string, std::vector<int>> regions; // name -> vertex indices
    uint64_t id = 0;                                 // structural hash, set by finalize()

    void finalize() {
        validate();
        uint64_t h = fnv1a(&vertex_count, sizeof vertex_count);
        if (!faces.empty()) h = fnv1a(faces.data(), faces.size() * sizeof faces[0], h);
        id = h;
    }

    void validate() const {
        if (vertex_count <= 0) throw ContractError("topology: vertex_count must be positive");
        std::map<std::pair<int, int>, int> edge_use;
        for (size_t f = 0; f < faces.size(); ++f) {
            const auto& t = faces[f];
            for (int k = 0; k < 3; ++k) {
                if (t[k] < 0 || t[k] >= vertex_count)
                    throw ContractError("topology: face " + std::to_string(f) + " index out of range");
            }
            if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
                throw ContractError("topology: face " + std::to_string(f) + " is degenerate");
            for (int k = 0; k < 3; ++k) {
                int a = t[k], b = t[(k + 1) % 3];
                auto key = std::minmax(a, b);
                if (++edge_use[{key.first, key.second}] > 2)
                    throw ContractError("topology: non-manifold edge (" + std::to_string(key.first) +
                                        "," + std::to_string(key.second) + ")");
            }
        }
        std::set<int> seen;
        for (int lm : landmarks) {
            if (lm < 0 || lm >= vertex_count)
                throw ContractError("topology: landmark index " + std::to_string(lm) + " out of range");
            if (!seen.insert(lm).second)
                throw ContractError("topology: duplicate landmark " + std::to_string(lm));
        }
        for (const auto& [name, verts] : regions)
            for (int v : verts)
                if (v < 0 || v >= vertex_count)
                    throw ContractError("topology: region '" + name + "' index out of range");
    }

    const std::vector<int>& region(const std::string& name) const {
        auto it = regions.find(name);
        if (it == regions.end())
            throw ContractError("topology: required region '" + name + "' is missing");
        return it->second;
    }

    bool has_region(const std::string& name) const { return regions.count(name) != 0; }
};

// N x 3 real field over a topology's vertices, row-major, millimeters.
struct VertexField {
    int vertex_count = 0;
    uint64_t topology_id = 0;
    std::vector<double> values; // 3 * vertex_count

    VertexField() = default;
    VertexField(const MeshTopology& topo, double fill = 0.0)
        : vertex_count(topo.vertex_count),
          topology_id(topo.id),
          values(size_t(topo.vertex_count) * 3, fill) {}

    double& at(int v, int c) { return values[size_t(v) * 3 + c]; }
    double at(int v, int c) const { return values[size_t(v) * 3 + c]; }

    void check_finite() const {
        for (double x : values)
            if (!std::isfinite(x)) throw NumericError("vertex field contains non-finite values");
    }
};

inline void require_same_topology(const VertexField& a, const VertexField& b, const char* what) {
    if (a.topology_id != b.topology_id || a.vertex_count != b.vertex_count)
        throw ContractError(std::string(what) + ": topology mismatch (" +
                            std::to_string(a.vertex_count) + " vs " + std::to_string(b.vertex_count) +
                            " vertices)");
}

inline double vertex_distance(const VertexField& f, int a, int b) {
    double dx = f.at(a, 0) - f.at(b, 0);
    double dy = f.at(a, 1) - f.at(b, 1);
    double dz = f.at(a, 2) - f.at(b, 2);
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// ---------------------------------------------------------------------------
// Wavefront OBJ (ASCII, triangles only) + JSON sidecar for landmarks/regions.

namespace detail {
inline int parse_obj_index(const std::string& tok, int vertex_count, int line_no) {
    // accepts v, v/vt, v//vn, v/vt/vn; 1-based, negatives count from the end
    size_t slash = tok.find('/');
    std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
    int idx = 0;
    try {
        idx = std::stoi(head);
    } catch (...) {
        throw ContractError("obj: bad face index '" + tok + "' at line " + std::to_string(line_no));
    }
    if (idx < 0) idx = vertex_count + idx + 1;
    if (idx < 1 || idx > vertex_count)
        throw ContractError("obj: face index out of range at line " + std::to_string(line_no));
    return idx - 1;
}
}  // namespace detail

inline std::pair<MeshTopology, VertexField> load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("obj: cannot open '" + path + "'");

    std::vector<double> pos;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        if (key == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z))
                throw ContractError("obj: malformed vertex at line " + std::to_string(line_no));
            pos.insert(pos.end(), {x, y, z});
        } else if (key == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok)
                idx.push_back(detail::parse_obj_index(tok, int(pos.size() / 3), line_no));
            if (idx.size() != 3)
                throw ContractError("obj: non-triangle face (" + std::to_string(idx.size()) +
                                    " vertices) at line " + std::to_string(line_no) +
                                    "; only triangle meshes are supported");
            faces.push_back({idx[0], idx[1], idx[2]});
        }
        // all other keys (vn, vt, usemtl, comments, ...) are ignored
    }

    MeshTopology topo;
    topo.vertex_count = int(pos.size() / 3);
    topo.faces = std::move(faces);

    // optional sidecar metadata: <path>.meta.json
    std::ifstream meta(path + ".meta.json");
    if (meta) {
        nlohmann::json j;
        try {
            meta >> j;
        } catch (const std::exception& e) {
            throw ContractError("obj sidecar: invalid JSON in '" + path + ".meta.json': " + e.what());
        }
        if (j.contains("landmarks")) topo.landmarks = j["landmarks"].get<std::vector<int>>();
        if (j.contains("regions"))
            for (auto it = j["regions"].begin(); it != j["regions"].end(); ++it)
                topo.regions[it.key()] = it.value().get<std::vector<int>>();
    }
    topo.finalize();

    VertexField field(topo);
    field.values = std::move(pos);
    field.check_finite();
    return {std::move(topo), std::move(field)};
}

inline void save_obj(const std::string& path, const MeshTopology& topo, const VertexField& positions) {
    std::ofstream out(path);
    if (!out) throw IoError("obj: cannot write '" + path + "'");
    char buf[128];
    for (int v = 0; v < topo.vertex_count; ++v) {
        std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", positions.at(v, 0), positions.at(v, 1),
                      positions.at(v, 2));
        out << buf;
    }
    for (const auto& f : topo.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!topo.landmarks.empty() || !topo.regions.empty()) {
        nlohmann::json j;
        j["landmarks"] = topo.landmarks;
        j["regions"] = nlohmann::json::object();
        for (const auto& [name, verts] : topo.regions) j["regions"][name] = verts;
        std::ofstream meta(path + ".meta.json");
        if (!meta) throw IoError("obj: cannot write '" + path + ".meta.json'");
        meta << j.dump(2) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Built-in meshes. The grid face is the desk-scale stand-in topology used by
// the synthetic corpus; the icosphere is a closed-manifold test surface.

inline std::pair<MeshTopology, VertexField> make_icosphere(int subdivisions) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<std::array<double, 3>> verts = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};

    auto normalize = [](std::array<double, 3>& p) {
        double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
        p = {p[0] / n, p[1] / n, p[2] / n};
    };
    for (auto& p : verts) normalize(p);

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find({key.first, key.second});
            if (it != midpoint.end()) return it->second;
            std::array<double, 3> m = {(verts[a][0] + verts[b][0]) / 2, (verts[a][1] + verts[b][1]) / 2,
                                       (verts[a][2] + verts[b][2]) / 2};
            normalize(m);
            verts.push_back(m);
            int idx = int(verts.size()) - 1;
            midpoint[{key.first, key.second}] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    MeshTopology topo;
    topo.vertex_count = int(verts.size());
    topo.faces = std::move(faces);
    topo.finalize();
    VertexField pos(topo);
    for (int v = 0; v < topo.vertex_count; ++v)
        for (int c = 0; c < 3; ++c) pos.at(v, c) = verts[v][c] * 100.0; // 100 mm radius
    return {std::move(topo), std::move(pos)};
}

// Regular (rows x cols) grid of vertices over a gently domed face-sized patch,
// with "lips" and "upper" regions and 68 landmarks in the usual mouth/eye/brow/
// jaw arrangement. Coordinates in millimeters; u spans width, v height.
inline std::pair<MeshTopology, VertexField> make_face_grid(int rows = 16, int cols = 14) {
    if (rows < 6 || cols < 6) throw ContractError("face grid: needs at least 6x6 vertices");
    MeshTopology topo;
    topo.vertex_count = rows * cols;
    auto vid = [&](int r, int c) { return r * cols + c; };
    for (int r = 0; r + 1 < rows; ++r)
        for (int c = 0; c + 1 < cols; ++c) {
            topo.faces.push_back({vid(r, c), vid(r, c + 1), vid(r + 1, c)});
            topo.faces.push_back({vid(r + 1, c), vid(r, c + 1), vid(r + 1, c + 1)});
        }

    const double width = 120.0, height = 150.0;
    std::vector<double> pos(size_t(topo.vertex_count) * 3);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double u = double(c) / (cols - 1); // 0..1 across
            double v = double(r) / (rows - 1); // 0 chin .. 1 forehead
            size_t i = size_t(vid(r, c)) * 3;
            pos[i + 0] = (u - 0.5) * width;
            pos[i + 1] = v * height;
            pos[i + 2] = 35.0 * std::sin(M_PI * u) * std::sin(M_PI * (0.15 + 0.7 * v));
        }

    auto uv_of = [&](int idx) {
        int r = idx / cols, c = idx % cols;
        return std::pair<double, double>{double(c) / (cols - 1), double(r) / (rows - 1)};
    };

    std::vector<int> lips, upper;
    for (int i = 0; i < topo.vertex_count; ++i) {
        auto [u, v] = uv_of(i);
        if (u > 0.25 && u < 0.75 && v > 0.10 && v < 0.38) lips.push_back(i);
        if (v > 0.55) upper.push_back(i);
    }
    topo.regions["lips"] = lips;
    topo.regions["upper"] = upper;

    // 68 landmarks: jaw 17, brows 10, nose 9, eyes 12, mouth 20 (iBUG-style layout).
    std::vector<std::pair<double, double>> lm_uv;
    for (int k = 0; k < 17; ++k) { // jaw arc
        double t = double(k) / 16.0;
        lm_uv.push_back({0.08 + 0.84 * t, 0.38 - 0.33 * std::sin(M_PI * t)});
    }
    for (int k = 0; k < 5; ++k) lm_uv.push_back({0.16 + 0.12 * k, 0.72}); // left brow
    for (int k = 0; k < 5; ++k) lm_uv.push_back({0.56 + 0.12 * k, 0.72}); // right brow
    for (int k = 0; k < 4; ++k) lm_uv.push_back({0.5, 0.62 - 0.06 * k}); // nose bridge
    for (int k = 0; k < 5; ++k) lm_uv.push_back({0.38 + 0.06 * k, 0.42}); // nose base
    for (int k = 0; k < 6; ++k) // left eye
        lm_uv.push_back({0.20 + 0.05 * (k % 3) + 0.02 * (k / 3), 0.64 - 0.04 * (k / 3)});
    for (int k = 0; k < 6; ++k) // right eye
        lm_uv.push_back({0.62 + 0.05 * (k % 3) + 0.02 * (k / 3), 0.64 - 0.04 * (k / 3)});
    for (int k = 0; k < 12; ++k) { // outer mouth ring
        double a = 2.0 * M_PI * k / 12.0;
        lm_uv.push_back({0.5 + 0.16 * std::cos(a), 0.24 + 0.09 * std::sin(a)});
    }
    for (int k = 0; k < 8; ++k) { // inner mouth ring
        double a = 2.0 * M_PI * k / 8.0;
        lm_uv.push_back({0.5 + 0.08 * std::cos(a), 0.24 + 0.045 * std::sin(a)});
    }

    // small grids cannot host all 68 distinct landmarks; take an even subset
    size_t n_lm = lm_uv.size();
    if (int(2 * n_lm) > topo.vertex_count) n_lm = size_t(topo.vertex_count) / 2;
    std::set<int> used;
    for (size_t k = 0; k < n_lm; ++k) {
        auto [lu, lv] = lm_uv[k * lm_uv.size() / n_lm];
        int best = -1;
        double best_d = 1e30;
        for (int i = 0; i < topo.vertex_count; ++i) {
            if (used.count(i)) continue;
            auto [u, v] = uv_of(i);
            double d = (u - lu) * (u - lu) + (v - lv) * (v - lv);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        used.insert(best);
        topo.landmarks.push_back(best);
    }

    topo.finalize();
    VertexField field(topo);
    field.values = std::move(pos);
    return {std::move(topo), std::move(field)};
}

}  // namespace desd
