#pragma once

// Per-vertex loss weights: inverse distance to the closest landmark on the
// neutral geometry, rescaled to mean 1 so weighted losses stay on the same
// scale as unweighted ones.

#include <vector>

#include <desd/mesh.hpp>

namespace desd {

struct VertexWeights {
    std::vector<double> w; // length N, positive, mean 1

    static VertexWeights uniform(int n) {
        VertexWeights vw;
        vw.w.assign(n, 1.0);
        return vw;
    }
};

inline constexpr double kWeightEpsilonMm = 1.0;

namespace detail {
// raw_i = 1/(eps + d_i), rescaled to mean 1
inline VertexWeights weights_from_distances(const std::vector<double>& dist_mm) {
    VertexWeights vw;
    vw.w.resize(dist_mm.size());
    double sum = 0;
    for (size_t i = 0; i < dist_mm.size(); ++i) {
        vw.w[i] = 1.0 / (kWeightEpsilonMm + dist_mm[i]);
        sum += vw.w[i];
    }
    double mean = sum / double(dist_mm.size());
    for (double& x : vw.w) x /= mean;
    return vw;
}
}  // namespace detail

inline VertexWeights vertex_weights(const MeshTopology& topo, const VertexField& neutral) {
    if (topo.landmarks.empty()) throw ContractError("vertex_weights: topology has no landmarks");
    if (neutral.topology_id != topo.id) throw ContractError("vertex_weights: topology mismatch");

    std::vector<double> dist(topo.vertex_count);
    for (int v = 0; v < topo.vertex_count; ++v) {
        double d = std::numeric_limits<double>::max();
        for (int lm : topo.landmarks) d = std::min(d, vertex_distance(neutral, v, lm));
        dist[v] = d;
    }
    return detail::weights_from_distances(dist);
}

}  // namespace desd
