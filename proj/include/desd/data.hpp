#pragma once

// Displacement sequences and their on-disk form. Sequences are stored packed
// (magic EMOV): f32 on disk, f64 in memory. Frames all live on one topology.

#include <fstream>
#include <optional>

#include <desd/mesh.hpp>
#include <json.hpp>

namespace desd {

struct SequenceMeta {
    std::string actor;
    std::string content_id;
    std::string emotion;  // empty when not applicable
    int intensity = 0;    // 0 = unset, else 1..3

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["actor"] = actor;
        j["content_id"] = content_id;
        if (!emotion.empty()) j["emotion"] = emotion;
        if (intensity != 0) j["intensity"] = intensity;
        return j;
    }

    static SequenceMeta from_json(const nlohmann::json& j) {
        SequenceMeta m;
        m.actor = j.value("actor", "");
        m.content_id = j.value("content_id", "");
        m.emotion = j.value("emotion", "");
        m.intensity = j.value("intensity", 0);
        return m;
    }
};

struct DisplacementSequence {
    std::vector<VertexField> frames;
    double fps = 60.0;
    SequenceMeta meta;

    void validate() const {
        if (frames.empty()) throw ContractError("sequence: no frames");
        if (fps <= 0) throw ContractError("sequence: fps must be positive");
        for (const auto& f : frames)
            if (f.topology_id != frames[0].topology_id)
                throw ContractError("sequence: frames on mixed topologies");
    }

    int frame_count() const { return int(frames.size()); }
};

// S = M - M^n, elementwise
inline VertexField neutral_subtract(const VertexField& animated, const VertexField& neutral) {
    require_same_topology(animated, neutral, "neutral_subtract");
    VertexField out = animated;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] -= neutral.values[i];
    return out;
}

// alpha * S^t + (1 - alpha) * S^e; the naive baseline the evaluation harness
// compares against
inline VertexField interp_baseline(const VertexField& s_talk, const VertexField& s_expr,
                                   double alpha) {
    require_same_topology(s_talk, s_expr, "interp_baseline");
    VertexField out = s_talk;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = alpha * s_talk.values[i] + (1.0 - alpha) * s_expr.values[i];
    return out;
}

// Linear interpolation over frame index onto `target_frames` frames.
// Endpoint-aligned: output frame 0 is input frame 0, the last maps to the
// last; a single-frame target takes input frame 0.
inline DisplacementSequence resample_sequence(const DisplacementSequence& seq, int target_frames) {
    if (target_frames < 1) throw ContractError("resample: target frame count must be >= 1");
    seq.validate();
    const int src = seq.frame_count();
    DisplacementSequence out;
    out.fps = seq.fps;
    out.meta = seq.meta;
    out.frames.reserve(target_frames);
    for (int t = 0; t < target_frames; ++t) {
        double pos = target_frames == 1 ? 0.0 : double(t) * (src - 1) / double(target_frames - 1);
        int lo = int(pos);
        int hi = std::min(lo + 1, src - 1);
        double w = pos - lo;
        VertexField f = seq.frames[lo];
        if (w > 0)
            for (size_t i = 0; i < f.values.size(); ++i)
                f.values[i] = (1.0 - w) * f.values[i] + w * seq.frames[hi].values[i];
        out.frames.push_back(std::move(f));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Packed sequence file: magic "EMOV", version u32, N u32, frame count u32,
// fps f32, u32-length-prefixed metadata JSON, then frames as little-endian
// f32 N x 3.

inline constexpr uint32_t kSequenceFormatVersion = 1;

inline void save_sequence(const std::string& path, const DisplacementSequence& seq) {
    seq.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("sequence: cannot write '" + path + "'");
    auto put = [&](auto v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
    out.write("EMOV", 4);
    put(uint32_t(kSequenceFormatVersion));
    put(uint32_t(seq.frames[0].vertex_count));
    put(uint32_t(seq.frames.size()));
    put(float(seq.fps));
    std::string meta = seq.meta.to_json().dump();
    put(uint32_t(meta.size()));
    out.write(meta.data(), std::streamsize(meta.size()));
    for (const auto& frame : seq.frames)
        for (double x : frame.values) put(float(x));
    if (!out) throw IoError("sequence: write failed for '" + path + "'");
}

inline DisplacementSequence load_sequence(const std::string& path, const MeshTopology& topo) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("sequence: cannot open '" + path + "'");
    auto get = [&]<class T>(T* v) {
        in.read(reinterpret_cast<char*>(v), sizeof(T));
        if (!in) throw IoError("sequence: truncated file '" + path + "'");
    };
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "EMOV")
        throw ContractError("sequence: '" + path + "' is not an EMOV file");
    uint32_t version, n, frames, meta_len;
    float fps;
    get(&version);
    if (version != kSequenceFormatVersion)
        throw ContractError("sequence: unsupported version " + std::to_string(version));
    get(&n);
    get(&frames);
    get(&fps);
    get(&meta_len);
    if (int(n) != topo.vertex_count)
        throw ContractError("sequence: '" + path + "' has " + std::to_string(n) +
                            " vertices, topology has " + std::to_string(topo.vertex_count));
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    DisplacementSequence seq;
    seq.fps = fps;
    try {
        seq.meta = SequenceMeta::from_json(nlohmann::json::parse(meta));
    } catch (const std::exception& e) {
        throw ContractError("sequence: bad metadata in '" + path + "': " + e.what());
    }
    seq.frames.reserve(frames);
    for (uint32_t t = 0; t < frames; ++t) {
        VertexField f(topo);
        for (size_t i = 0; i < f.values.size(); ++i) {
            float x;
            get(&x);
            f.values[i] = double(x);
        }
        f.check_finite();
        seq.frames.push_back(std::move(f));
    }
    seq.validate();
    return seq;
}

}  // namespace desd
