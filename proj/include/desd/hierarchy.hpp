#pragma once

// Mesh sampling hierarchy for the encoder/decoder pyramid. Each level is
// produced by quadric-error-metric edge collapses with subset placement
// (collapses keep one endpoint), so coarse vertices are a subset of fine
// ones. Downsampling picks that subset (one-hot rows); upsampling maps each
// fine vertex to barycentric weights in its nearest coarse triangle. Both
// maps are row-stochastic, so constant fields survive a round trip.

#include <algorithm>
#include <limits>
#include <queue>
#include <vector>

#include <desd/mesh.hpp>

namespace desd {

struct SparseMat {
    int rows = 0, cols = 0;
    std::vector<std::vector<std::pair<int, double>>> row_entries;

    static SparseMat identity(int n) {
        SparseMat m;
        m.rows = m.cols = n;
        m.row_entries.resize(n);
        for (int i = 0; i < n; ++i) m.row_entries[i] = {{i, 1.0}};
        return m;
    }

    bool empty() const { return rows == 0; }

    // out[rows x C] = this * in[cols x C]
    void apply(const double* in, int channels, double* out) const {
        for (int r = 0; r < rows; ++r) {
            double* dst = out + size_t(r) * channels;
            std::fill(dst, dst + channels, 0.0);
            for (const auto& [c, w] : row_entries[r]) {
                const double* src = in + size_t(c) * channels;
                for (int k = 0; k < channels; ++k) dst[k] += w * src[k];
            }
        }
    }

    // out[cols x C] += this^T * in[rows x C]
    void apply_transposed_add(const double* in, int channels, double* out) const {
        for (int r = 0; r < rows; ++r) {
            const double* src = in + size_t(r) * channels;
            for (const auto& [c, w] : row_entries[r]) {
                double* dst = out + size_t(c) * channels;
                for (int k = 0; k < channels; ++k) dst[k] += w * src[k];
            }
        }
    }

    void check_row_stochastic(double tol = 1e-6) const {
        for (int r = 0; r < rows; ++r) {
            double s = 0;
            for (const auto& [c, w] : row_entries[r]) s += w;
            if (std::abs(s - 1.0) > tol)
                throw ContractError("sparse map: row " + std::to_string(r) + " sums to " +
                                    std::to_string(s) + ", expected 1");
        }
    }
};

struct HierarchyLevel {
    MeshTopology topo;
    VertexField positions;
    // For level l >= 1: down is N_l x N_{l-1}, up is N_{l-1} x N_l.
    // Level 0 carries empty maps.
    SparseMat down, up;
};

struct SamplingHierarchy {
    std::vector<HierarchyLevel> levels;

    int depth() const { return int(levels.size()); }
    const MeshTopology& topo(int level) const { return levels[level].topo; }
};

// ---------------------------------------------------------------------------
// QEM machinery.

namespace detail {

struct Quadric {
    // symmetric 4x4 stored as upper triangle of A (3x3), b (3), c
    double a00 = 0, a01 = 0, a02 = 0, a11 = 0, a12 = 0, a22 = 0;
    double b0 = 0, b1 = 0, b2 = 0, c = 0;

    void add_plane(const double n[3], double d) {
        a00 += n[0] * n[0];
        a01 += n[0] * n[1];
        a02 += n[0] * n[2];
        a11 += n[1] * n[1];
        a12 += n[1] * n[2];
        a22 += n[2] * n[2];
        b0 += d * n[0];
        b1 += d * n[1];
        b2 += d * n[2];
        c += d * d;
    }

    Quadric& operator+=(const Quadric& o) {
        a00 += o.a00; a01 += o.a01; a02 += o.a02;
        a11 += o.a11; a12 += o.a12; a22 += o.a22;
        b0 += o.b0; b1 += o.b1; b2 += o.b2; c += o.c;
        return *this;
    }

    double eval(const double p[3]) const {
        double ax = a00 * p[0] + a01 * p[1] + a02 * p[2];
        double ay = a01 * p[0] + a11 * p[1] + a12 * p[2];
        double az = a02 * p[0] + a12 * p[1] + a22 * p[2];
        return p[0] * ax + p[1] * ay + p[2] * az + 2.0 * (b0 * p[0] + b1 * p[1] + b2 * p[2]) + c;
    }
};

inline void face_normal(const double* p0, const double* p1, const double* p2, double out[3],
                        double* area2 = nullptr) {
    double e1[3] = {p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]};
    double e2[3] = {p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]};
    out[0] = e1[1] * e2[2] - e1[2] * e2[1];
    out[1] = e1[2] * e2[0] - e1[0] * e2[2];
    out[2] = e1[0] * e2[1] - e1[1] * e2[0];
    double n = std::sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2]);
    if (area2) *area2 = n;
    if (n > 1e-30) {
        out[0] /= n;
        out[1] /= n;
        out[2] /= n;
    }
}

// Closest point on triangle (Ericson, Real-Time Collision Detection) returned
// as barycentric coordinates (w0, w1, w2) that sum to 1.
inline double closest_point_barycentric(const double p[3], const double a[3], const double b[3],
                                        const double c[3], double bary[3]) {
    auto sub = [](const double* x, const double* y, double* o) {
        o[0] = x[0] - y[0]; o[1] = x[1] - y[1]; o[2] = x[2] - y[2];
    };
    auto dot3 = [](const double* x, const double* y) {
        return x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    };
    double ab[3], ac[3], ap[3], bp[3], cp[3];
    sub(b, a, ab);
    sub(c, a, ac);
    sub(p, a, ap);
    double d1 = dot3(ab, ap), d2 = dot3(ac, ap);
    auto finish = [&](double w0, double w1, double w2) {
        bary[0] = w0; bary[1] = w1; bary[2] = w2;
        double q[3] = {w0 * a[0] + w1 * b[0] + w2 * c[0], w0 * a[1] + w1 * b[1] + w2 * c[1],
                       w0 * a[2] + w1 * b[2] + w2 * c[2]};
        double d[3];
        sub(p, q, d);
        return dot3(d, d);
    };
    if (d1 <= 0 && d2 <= 0) return finish(1, 0, 0);
    sub(p, b, bp);
    double d3 = dot3(ab, bp), d4 = dot3(ac, bp);
    if (d3 >= 0 && d4 <= d3) return finish(0, 1, 0);
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) {
        double t = d1 / (d1 - d3);
        return finish(1 - t, t, 0);
    }
    sub(p, c, cp);
    double d5 = dot3(ab, cp), d6 = dot3(ac, cp);
    if (d6 >= 0 && d5 <= d6) return finish(0, 0, 1);
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) {
        double t = d2 / (d2 - d6);
        return finish(1 - t, 0, t);
    }
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
        double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return finish(0, 1 - t, t);
    }
    double denom = 1.0 / (va + vb + vc);
    double v = vb * denom, w = vc * denom;
    return finish(1 - v - w, v, w);
}

struct DecimationResult {
    MeshTopology topo;          // compacted coarse topology
    VertexField positions;      // coarse positions
    std::vector<int> origin;    // coarse vertex -> fine vertex index
};

// Edge-collapse decimation with subset placement. Collapses that would break
// the link condition or flip a face normal are refused; the result may keep
// more vertices than requested.
inline DecimationResult qem_decimate(const MeshTopology& topo, const VertexField& pos, int target) {
    const int n = topo.vertex_count;
    std::vector<std::array<int, 3>> faces = topo.faces;
    std::vector<bool> face_alive(faces.size(), true);
    std::vector<bool> vert_alive(n, true);
    std::vector<std::vector<int>> vfaces(n);
    for (size_t f = 0; f < faces.size(); ++f)
        for (int k = 0; k < 3; ++k) vfaces[faces[f][k]].push_back(int(f));

    std::vector<Quadric> quadrics(n);
    std::vector<double> p = pos.values;
    for (size_t f = 0; f < faces.size(); ++f) {
        const auto& t = faces[f];
        double nrm[3];
        face_normal(&p[3 * t[0]], &p[3 * t[1]], &p[3 * t[2]], nrm);
        double d = -(nrm[0] * p[3 * t[0]] + nrm[1] * p[3 * t[0] + 1] + nrm[2] * p[3 * t[0] + 2]);
        for (int k = 0; k < 3; ++k) {
            Quadric q;
            q.add_plane(nrm, d);
            quadrics[t[k]] += q;
        }
    }

    std::vector<int> version(n, 0);

    struct Entry {
        double cost;
        int a, b, keep;
        int va, vb;
        bool operator>(const Entry& o) const {
            if (cost != o.cost) return cost > o.cost;
            if (a != o.a) return a > o.a;
            return b > o.b;
        }
    };
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;

    auto neighbors = [&](int v) {
        std::vector<int> out;
        for (int f : vfaces[v])
            if (face_alive[f])
                for (int k = 0; k < 3; ++k)
                    if (faces[f][k] != v) out.push_back(faces[f][k]);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    };

    auto push_edge = [&](int a, int b) {
        if (a > b) std::swap(a, b);
        Quadric q = quadrics[a];
        q += quadrics[b];
        double ca = q.eval(&p[3 * a]);
        double cb = q.eval(&p[3 * b]);
        Entry e;
        e.a = a;
        e.b = b;
        if (ca <= cb) {
            e.cost = ca;
            e.keep = a;
        } else {
            e.cost = cb;
            e.keep = b;
        }
        e.va = version[a];
        e.vb = version[b];
        heap.push(e);
    };

    for (size_t f = 0; f < faces.size(); ++f)
        for (int k = 0; k < 3; ++k) {
            int a = faces[f][k], b = faces[f][(k + 1) % 3];
            if (a < b) push_edge(a, b);
        }

    int alive = n;
    int refused = 0;
    while (alive > target && !heap.empty()) {
        Entry e = heap.top();
        heap.pop();
        if (!vert_alive[e.a] || !vert_alive[e.b]) continue;
        if (version[e.a] != e.va || version[e.b] != e.vb) continue;

        int keep = e.keep, drop = keep == e.a ? e.b : e.a;

        // link condition: shared neighbors must be exactly the vertices
        // opposite the shared faces
        auto na = neighbors(e.a), nb = neighbors(e.b);
        std::vector<int> common;
        std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(), std::back_inserter(common));
        int shared_faces = 0;
        for (int f : vfaces[e.a])
            if (face_alive[f]) {
                const auto& t = faces[f];
                if ((t[0] == e.b || t[1] == e.b || t[2] == e.b)) ++shared_faces;
            }
        if (int(common.size()) != shared_faces || shared_faces == 0) {
            ++refused;
            continue;
        }

        // a dying face must not strand its third vertex (single-face corners)
        bool strands = false;
        for (int f : vfaces[e.a]) {
            if (!face_alive[f]) continue;
            const auto& t = faces[f];
            if (t[0] != e.b && t[1] != e.b && t[2] != e.b) continue;
            for (int k = 0; k < 3; ++k) {
                int c3 = t[k];
                if (c3 == e.a || c3 == e.b) continue;
                int live = 0;
                for (int g : vfaces[c3])
                    if (face_alive[g]) ++live;
                if (live <= 1) strands = true;
            }
        }
        if (strands) {
            ++refused;
            continue;
        }

        // normal-flip guard on the surviving faces of `drop`
        bool flip = false;
        for (int f : vfaces[drop]) {
            if (!face_alive[f]) continue;
            const auto& t = faces[f];
            if (t[0] == keep || t[1] == keep || t[2] == keep) continue; // will die
            double before[3], after[3];
            face_normal(&p[3 * t[0]], &p[3 * t[1]], &p[3 * t[2]], before);
            double moved[9];
            for (int k = 0; k < 3; ++k) {
                int src = t[k] == drop ? keep : t[k];
                moved[3 * k] = p[3 * src];
                moved[3 * k + 1] = p[3 * src + 1];
                moved[3 * k + 2] = p[3 * src + 2];
            }
            double area2;
            face_normal(&moved[0], &moved[3], &moved[6], after, &area2);
            double dp = before[0] * after[0] + before[1] * after[1] + before[2] * after[2];
            if (dp < 1e-10 || area2 < 1e-20) {
                flip = true;
                break;
            }
        }
        if (flip) {
            ++refused;
            continue;
        }

        // collapse drop -> keep
        for (int f : vfaces[drop]) {
            if (!face_alive[f]) continue;
            auto& t = faces[f];
            if (t[0] == keep || t[1] == keep || t[2] == keep) {
                face_alive[f] = false;
                continue;
            }
            for (int k = 0; k < 3; ++k)
                if (t[k] == drop) t[k] = keep;
            vfaces[keep].push_back(f);
        }
        vert_alive[drop] = false;
        quadrics[keep] += quadrics[drop];
        ++version[keep];
        ++version[drop];
        --alive;

        for (int u : neighbors(keep)) push_edge(keep, u);
    }

    if (alive > target)
        DESD_INFO("decimation stopped at %d vertices (target %d, %d collapses refused)", alive,
                  target, refused);

    DecimationResult res;
    std::vector<int> remap(n, -1);
    for (int v = 0; v < n; ++v)
        if (vert_alive[v]) {
            remap[v] = int(res.origin.size());
            res.origin.push_back(v);
        }
    res.topo.vertex_count = int(res.origin.size());
    std::vector<bool> touched(res.origin.size(), false);
    for (size_t f = 0; f < faces.size(); ++f)
        if (face_alive[f]) {
            res.topo.faces.push_back({remap[faces[f][0]], remap[faces[f][1]], remap[faces[f][2]]});
            for (int k = 0; k < 3; ++k) touched[res.topo.faces.back()[k]] = true;
        }
    for (size_t v = 0; v < touched.size(); ++v)
        if (!touched[v]) throw ContractError("decimation: produced an isolated vertex");
    res.topo.finalize();
    res.positions = VertexField(res.topo);
    for (int v = 0; v < res.topo.vertex_count; ++v)
        for (int c = 0; c < 3; ++c) res.positions.at(v, c) = pos.at(res.origin[v], c);
    return res;
}

}  // namespace detail

// ---------------------------------------------------------------------------

// Builds the pyramid. `factors` are per-level vertex-count ratios in (0, 1];
// a factor of exactly 1 yields an identity level. The coarsest level must
// keep at least 8 vertices. Needs the neutral geometry for the quadrics and
// the barycentric up-weights.
inline SamplingHierarchy build_hierarchy(const MeshTopology& topology, const VertexField& neutral,
                                         const std::vector<double>& factors) {
    if (factors.empty()) throw ContractError("hierarchy: factors must be non-empty");
    for (double f : factors)
        if (!(f > 0.0 && f <= 1.0))
            throw ContractError("hierarchy: factor " + std::to_string(f) + " outside (0, 1]");
    if (neutral.topology_id != topology.id) throw ContractError("hierarchy: neutral field topology mismatch");
    {
        double expect = topology.vertex_count;
        for (double f : factors) expect *= f;
        if (expect < 8.0)
            throw ContractError("hierarchy: requested factors leave fewer than 8 vertices at the "
                                "coarsest level");
    }

    SamplingHierarchy h;
    h.levels.push_back({topology, neutral, {}, {}});

    for (double f : factors) {
        const HierarchyLevel& fine = h.levels.back();
        const int nf = fine.topo.vertex_count;
        HierarchyLevel level;
        if (f == 1.0) {
            level.topo = fine.topo;
            level.positions = fine.positions;
            level.down = SparseMat::identity(nf);
            level.up = SparseMat::identity(nf);
        } else {
            int target = std::max(8, int(std::llround(nf * f)));
            auto coarse = detail::qem_decimate(fine.topo, fine.positions, target);
            const int nc = coarse.topo.vertex_count;

            level.down.rows = nc;
            level.down.cols = nf;
            level.down.row_entries.resize(nc);
            for (int v = 0; v < nc; ++v) level.down.row_entries[v] = {{coarse.origin[v], 1.0}};

            level.up.rows = nf;
            level.up.cols = nc;
            level.up.row_entries.resize(nf);
            const auto& cp = coarse.positions.values;
            for (int v = 0; v < nf; ++v) {
                const double* q = &fine.positions.values[3 * size_t(v)];
                double best = std::numeric_limits<double>::max();
                double best_bary[3] = {1, 0, 0};
                int best_face = -1;
                for (size_t fc = 0; fc < coarse.topo.faces.size(); ++fc) {
                    const auto& t = coarse.topo.faces[fc];
                    double bary[3];
                    double d = detail::closest_point_barycentric(q, &cp[3 * t[0]], &cp[3 * t[1]],
                                                                 &cp[3 * t[2]], bary);
                    if (d < best) {
                        best = d;
                        best_face = int(fc);
                        std::copy(bary, bary + 3, best_bary);
                    }
                }
                const auto& t = coarse.topo.faces[best_face];
                for (int k = 0; k < 3; ++k)
                    if (best_bary[k] > 1e-12)
                        level.up.row_entries[v].push_back({t[k], best_bary[k]});
                // renormalize against clamping round-off
                double s = 0;
                for (auto& [c, w] : level.up.row_entries[v]) s += w;
                for (auto& [c, w] : level.up.row_entries[v]) w /= s;
            }
            level.topo = std::move(coarse.topo);
            level.positions = std::move(coarse.positions);
        }
        level.down.check_row_stochastic();
        level.up.check_row_stochastic();
        h.levels.push_back(std::move(level));
    }
    return h;
}

}  // namespace desd
