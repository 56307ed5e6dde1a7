#pragma once

// EmoVOCA-style synthesis: sweep every talking sequence over the requested
// emotions and mu_e intensity levels, resample the chosen expression sequence
// to the talking length, and combine frame by frame through the trained
// model. Frames are independent by construction.

#include <filesystem>

#include <desd/data.hpp>
#include <desd/model.hpp>

namespace desd {

struct ManifestEntry {
    std::string actor, content, emotion;
    int intensity_level = 0; // 1-based
    double mu_e = 0;
    std::string path; // empty for in-memory synthesis
};

struct CorpusManifest {
    std::vector<std::string> actors, contents, emotions;
    std::vector<double> intensities; // mu_e values
    double mu_t = 1.0;
    std::vector<ManifestEntry> index;
    std::string config_hash;

    uint64_t expected_count() const {
        return uint64_t(actors.size()) * contents.size() * emotions.size() * intensities.size();
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["actors"] = actors;
        j["contents"] = contents;
        j["emotions"] = emotions;
        j["intensities"] = intensities;
        j["mu_t"] = mu_t;
        if (!config_hash.empty()) j["config_hash"] = config_hash;
        j["index"] = nlohmann::json::array();
        for (const auto& e : index)
            j["index"].push_back({{"actor", e.actor},
                                  {"content", e.content},
                                  {"emotion", e.emotion},
                                  {"intensity_level", e.intensity_level},
                                  {"mu_e", e.mu_e},
                                  {"path", e.path}});
        return j;
    }

    static CorpusManifest from_json(const nlohmann::json& j) {
        CorpusManifest m;
        m.actors = j.at("actors").get<std::vector<std::string>>();
        m.contents = j.at("contents").get<std::vector<std::string>>();
        m.emotions = j.at("emotions").get<std::vector<std::string>>();
        m.intensities = j.at("intensities").get<std::vector<double>>();
        m.mu_t = j.value("mu_t", 1.0);
        m.config_hash = j.value("config_hash", "");
        for (const auto& e : j.at("index")) {
            ManifestEntry ent;
            ent.actor = e.at("actor");
            ent.content = e.at("content");
            ent.emotion = e.at("emotion");
            ent.intensity_level = e.at("intensity_level");
            ent.mu_e = e.at("mu_e");
            ent.path = e.value("path", "");
            m.index.push_back(std::move(ent));
        }
        return m;
    }
};

// Dry-run arithmetic: one output per (talking sequence, emotion, level).
inline uint64_t synthesis_count(uint64_t n_actors, uint64_t n_contents, uint64_t n_emotions,
                                uint64_t n_levels) {
    return n_actors * n_contents * n_emotions * n_levels;
}

struct SynthOptions {
    std::vector<std::string> emotions;
    std::vector<double> mu_e_levels = {0.5, 1.0, 1.5};
    double mu_t = 1.0;
    uint64_t seed = 1;
    std::string out_dir;        // empty: keep sequences in memory only
    bool keep_in_memory = true; // also return the synthesized sequences
};

struct SynthResult {
    CorpusManifest manifest;
    std::vector<DisplacementSequence> sequences; // aligned with manifest.index when kept
};

inline SynthResult synthesize_emovoca(const DesdModel& model,
                                      const std::vector<DisplacementSequence>& talk_corpus,
                                      const std::vector<DisplacementSequence>& expr_corpus,
                                      const SynthOptions& opts) {
    if (talk_corpus.empty()) throw ContractError("synth: talking corpus is empty");
    if (opts.emotions.empty()) throw ContractError("synth: no emotions requested");
    if (opts.mu_e_levels.empty()) throw ContractError("synth: no intensity levels requested");

    // per-emotion expression pools, round-robin with a seeded start offset
    std::map<std::string, std::vector<int>> pools;
    for (size_t i = 0; i < expr_corpus.size(); ++i)
        pools[expr_corpus[i].meta.emotion].push_back(int(i));
    std::map<std::string, size_t> cursor;
    Rng rng(opts.seed);
    for (const auto& emo : opts.emotions) {
        auto it = pools.find(emo);
        if (it == pools.end() || it->second.empty())
            throw ContractError("synth: no expression sequence for emotion '" + emo + "'");
        cursor[emo] = size_t(rng.uniform_int(int(it->second.size())));
    }

    SynthResult res;
    CorpusManifest& man = res.manifest;
    man.emotions = opts.emotions;
    man.intensities = opts.mu_e_levels;
    man.mu_t = opts.mu_t;
    {
        std::set<std::string> actors, contents;
        for (const auto& s : talk_corpus) {
            actors.insert(s.meta.actor);
            contents.insert(s.meta.content_id);
        }
        man.actors.assign(actors.begin(), actors.end());
        man.contents.assign(contents.begin(), contents.end());
    }

    if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

    for (const auto& talk : talk_corpus) {
        for (const auto& emo : opts.emotions) {
            const auto& pool = pools[emo];
            int expr_idx = pool[cursor[emo] % pool.size()];
            cursor[emo]++;
            DisplacementSequence expr = resample_sequence(expr_corpus[expr_idx], talk.frame_count());
            for (size_t lvl = 0; lvl < opts.mu_e_levels.size(); ++lvl) {
                double mu_e = opts.mu_e_levels[lvl];
                DisplacementSequence out;
                out.fps = talk.fps;
                out.meta.actor = talk.meta.actor;
                out.meta.content_id = talk.meta.content_id;
                out.meta.emotion = emo;
                out.meta.intensity = int(lvl) + 1;
                out.frames.reserve(talk.frames.size());
                for (int t = 0; t < talk.frame_count(); ++t)
                    out.frames.push_back(
                        model.infer_combined(talk.frames[t], expr.frames[t], opts.mu_t, mu_e));

                ManifestEntry entry;
                entry.actor = out.meta.actor;
                entry.content = out.meta.content_id;
                entry.emotion = emo;
                entry.intensity_level = out.meta.intensity;
                entry.mu_e = mu_e;
                if (!opts.out_dir.empty()) {
                    entry.path = out.meta.actor + "_" + out.meta.content_id + "_" + emo + "_i" +
                                 std::to_string(entry.intensity_level) + ".emov";
                    save_sequence((std::filesystem::path(opts.out_dir) / entry.path).string(), out);
                }
                man.index.push_back(entry);
                if (opts.keep_in_memory) res.sequences.push_back(std::move(out));
            }
        }
    }

    if (man.index.size() != man.expected_count())
        throw ContractError("synth: manifest count " + std::to_string(man.index.size()) +
                            " does not match |A||C||E||I| = " + std::to_string(man.expected_count()));
    return res;
}

inline void save_manifest(const std::string& path, const CorpusManifest& man) {
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot write '" + path + "'");
    out << man.to_json().dump(2) << '\n';
}

inline CorpusManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ContractError("manifest: invalid JSON in '" + path + "': " + e.what());
    }
    return CorpusManifest::from_json(j);
}

}  // namespace desd
