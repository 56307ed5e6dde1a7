#pragma once

// Reconstruction metrics in millimeters. Per frame: the maximum vertex L2
// error, optionally restricted to a named region. Per sequence: the mean of
// per-frame maxima (or the max, with --metric-agg max). Aggregates are means
// over sequences. Displacements and absolute positions give identical values
// because the shared neutral cancels in the difference.

#include <desd/data.hpp>

namespace desd {

enum class MetricAgg { Mean, Max };

inline MetricAgg metric_agg_from_string(const std::string& s) {
    if (s == "mean") return MetricAgg::Mean;
    if (s == "max") return MetricAgg::Max;
    throw ConfigError("metric-agg must be 'mean' or 'max', got '" + s + "'");
}

namespace detail {

inline double frame_max_error(const VertexField& pred, const VertexField& gt,
                              const std::vector<int>* region) {
    require_same_topology(pred, gt, "metric");
    double worst = 0;
    auto probe = [&](int v) {
        double s = 0;
        for (int c = 0; c < 3; ++c) {
            double d = pred.at(v, c) - gt.at(v, c);
            s += d * d;
        }
        worst = std::max(worst, s);
    };
    if (region)
        for (int v : *region) probe(v);
    else
        for (int v = 0; v < pred.vertex_count; ++v) probe(v);
    return std::sqrt(worst);
}

inline double sequence_metric(const DisplacementSequence& pred, const DisplacementSequence& gt,
                              const std::vector<int>* region, MetricAgg agg) {
    if (pred.frame_count() != gt.frame_count())
        throw ContractError("metric: frame counts differ (" + std::to_string(pred.frame_count()) +
                            " vs " + std::to_string(gt.frame_count()) + ")");
    double acc = 0;
    for (int t = 0; t < pred.frame_count(); ++t) {
        double m = frame_max_error(pred.frames[t], gt.frames[t], region);
        acc = agg == MetricAgg::Mean ? acc + m : std::max(acc, m);
    }
    return agg == MetricAgg::Mean ? acc / pred.frame_count() : acc;
}

}  // namespace detail

inline double mve(const DisplacementSequence& pred, const DisplacementSequence& gt,
                  MetricAgg agg = MetricAgg::Mean) {
    return detail::sequence_metric(pred, gt, nullptr, agg);
}

inline double uve(const DisplacementSequence& pred, const DisplacementSequence& gt,
                  const MeshTopology& topo, MetricAgg agg = MetricAgg::Mean) {
    return detail::sequence_metric(pred, gt, &topo.region("upper"), agg);
}

inline double lve(const DisplacementSequence& pred, const DisplacementSequence& gt,
                  const MeshTopology& topo, MetricAgg agg = MetricAgg::Mean) {
    return detail::sequence_metric(pred, gt, &topo.region("lips"), agg);
}

// single-frame variants
inline double frame_mve(const VertexField& pred, const VertexField& gt) {
    return detail::frame_max_error(pred, gt, nullptr);
}
inline double frame_uve(const VertexField& pred, const VertexField& gt, const MeshTopology& topo) {
    return detail::frame_max_error(pred, gt, &topo.region("upper"));
}
inline double frame_lve(const VertexField& pred, const VertexField& gt, const MeshTopology& topo) {
    return detail::frame_max_error(pred, gt, &topo.region("lips"));
}

// ---------------------------------------------------------------------------

struct MetricRow {
    std::string id, emotion;
    int intensity = 0;
    double mve = 0, uve = 0, lve = 0;
};

struct MetricReport {
    MetricAgg agg = MetricAgg::Mean;
    std::vector<MetricRow> rows;

    MetricRow aggregate(const std::vector<const MetricRow*>& subset) const {
        MetricRow out;
        if (subset.empty()) return out;
        for (const auto* r : subset) {
            out.mve += r->mve;
            out.uve += r->uve;
            out.lve += r->lve;
        }
        out.mve /= subset.size();
        out.uve /= subset.size();
        out.lve /= subset.size();
        return out;
    }

    MetricRow overall() const {
        std::vector<const MetricRow*> all;
        for (const auto& r : rows) all.push_back(&r);
        return aggregate(all);
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("report: cannot write '" + path + "'");
        out << "id,emotion,intensity,mve_mm,uve_mm,lve_mm\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof buf, "%s,%s,%d,%.9g,%.9g,%.9g\n", r.id.c_str(),
                          r.emotion.c_str(), r.intensity, r.mve, r.uve, r.lve);
            out << buf;
        }
    }

    nlohmann::json summary_json() const {
        nlohmann::json j;
        auto put = [](nlohmann::json& dst, const MetricRow& r) {
            dst = {{"mve_mm", r.mve}, {"uve_mm", r.uve}, {"lve_mm", r.lve}};
        };
        put(j["overall"], overall());
        std::map<std::string, std::vector<const MetricRow*>> by_emotion;
        std::map<int, std::vector<const MetricRow*>> by_intensity;
        for (const auto& r : rows) {
            if (!r.emotion.empty()) by_emotion[r.emotion].push_back(&r);
            if (r.intensity != 0) by_intensity[r.intensity].push_back(&r);
        }
        for (const auto& [emo, subset] : by_emotion) put(j["by_emotion"][emo], aggregate(subset));
        for (const auto& [lvl, subset] : by_intensity)
            put(j["by_intensity"][std::to_string(lvl)], aggregate(subset));
        j["sequence_count"] = rows.size();
        j["metric_agg"] = agg == MetricAgg::Mean ? "mean" : "max";
        return j;
    }
};

}  // namespace desd
