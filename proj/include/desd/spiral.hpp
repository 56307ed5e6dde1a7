#pragma once

// Per-vertex spiral orderings for spiral convolutions. A spiral starts at the
// center vertex, walks the 1-ring in face-winding orientation starting from
// the adjacent vertex with the smallest index, then expands ring by ring.
// Rows are fixed-length; short rows are padded with kSpiralSentinel and the
// gather stage maps the sentinel to a zero feature vector.

#include <algorithm>
#include <vector>

#include <desd/mesh.hpp>

namespace desd {

inline constexpr int kSpiralSentinel = -1;

struct SpiralTable {
    int spiral_length = 0;
    int vertex_count = 0;
    std::vector<int> entries; // vertex_count * spiral_length

    int at(int v, int s) const { return entries[size_t(v) * spiral_length + s]; }
};

namespace detail {

// For each vertex v and each incident face (v,a,b) in winding order, the walk
// successor of a around v is b.
struct VertexRingMaps {
    // flat adjacency keyed by neighbor; small rings, linear scan is fine
    std::vector<std::pair<int, int>> next; // (from, to)
    std::vector<std::pair<int, int>> prev;

    int step_next(int from) const {
        for (const auto& [a, b] : next)
            if (a == from) return b;
        return -1;
    }
    int step_prev(int from) const {
        for (const auto& [a, b] : prev)
            if (a == from) return b;
        return -1;
    }
};

// Ordered 1-ring of v: forward walk from the smallest-index neighbor; if the
// ring is an open fan (boundary vertex) the remainder behind the start vertex
// is collected by walking backwards and appended after the forward part.
inline std::vector<int> ordered_one_ring(const VertexRingMaps& maps, int ring_size) {
    int start = -1;
    for (const auto& [a, b] : maps.next) {
        if (start < 0 || a < start) start = a;
        if (b < start) start = b;
    }
    std::vector<int> ring;
    ring.push_back(start);
    int cur = start;
    while (int(ring.size()) < ring_size) {
        int nxt = maps.step_next(cur);
        if (nxt < 0 || nxt == start) break;
        ring.push_back(nxt);
        cur = nxt;
    }
    cur = start;
    while (int(ring.size()) < ring_size) {
        int prv = maps.step_prev(cur);
        if (prv < 0) break;
        ring.push_back(prv);
        cur = prv;
    }
    return ring;
}

}  // namespace detail

inline SpiralTable compute_spirals(const MeshTopology& topo, int spiral_length) {
    if (spiral_length < 1) throw ContractError("spirals: spiral_length must be >= 1");
    const int n = topo.vertex_count;

    std::vector<detail::VertexRingMaps> maps(n);
    for (const auto& f : topo.faces)
        for (int k = 0; k < 3; ++k) {
            int v = f[k], a = f[(k + 1) % 3], b = f[(k + 2) % 3];
            maps[v].next.push_back({a, b});
            maps[v].prev.push_back({b, a});
        }

    std::vector<std::vector<int>> one_ring(n);
    for (int v = 0; v < n; ++v) {
        if (maps[v].next.empty())
            throw ContractError("spirals: vertex " + std::to_string(v) + " is isolated");
        std::vector<int> members;
        for (const auto& [a, b] : maps[v].next) {
            members.push_back(a);
            members.push_back(b);
        }
        std::sort(members.begin(), members.end());
        members.erase(std::unique(members.begin(), members.end()), members.end());
        one_ring[v] = detail::ordered_one_ring(maps[v], int(members.size()));
    }

    SpiralTable table;
    table.spiral_length = spiral_length;
    table.vertex_count = n;
    table.entries.assign(size_t(n) * spiral_length, kSpiralSentinel);

    std::vector<int> queued(n, -1); // stamped once a vertex is scheduled for v's spiral
    for (int v = 0; v < n; ++v) {
        std::vector<int> spiral;
        spiral.push_back(v);
        queued[v] = v;
        std::vector<int> ring = one_ring[v];
        for (int u : ring) queued[u] = v;
        while (!ring.empty() && int(spiral.size()) < spiral_length) {
            for (int u : ring) {
                spiral.push_back(u);
                if (int(spiral.size()) >= spiral_length) break;
            }
            if (int(spiral.size()) >= spiral_length) break;
            // next ring: walk the current ring in spiral order, appending each
            // member's 1-ring neighbors (in their winding order) once
            std::vector<int> next_ring;
            for (int u : ring)
                for (int w : one_ring[u])
                    if (queued[w] != v) {
                        queued[w] = v;
                        next_ring.push_back(w);
                    }
            ring = std::move(next_ring);
        }
        for (size_t s = 0; s < spiral.size() && int(s) < spiral_length; ++s)
            table.entries[size_t(v) * spiral_length + s] = spiral[s];
    }
    return table;
}

}  // namespace desd
