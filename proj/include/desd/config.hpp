#pragma once

// Run configuration: one strict JSON document. Unknown keys are rejected at
// every level as config errors; every field has a documented default except
// the seed, which train/synth subcommands require explicitly.

#include <fstream>
#include <optional>

#include <desd/classifier.hpp>
#include <desd/emogen.hpp>
#include <desd/metrics.hpp>
#include <desd/model.hpp>
#include <desd/synthetic.hpp>
#include <json.hpp>

namespace desd {

struct RunConfig {
    // mesh
    std::string mesh_source = "grid"; // grid | icosphere | obj
    int mesh_rows = 16, mesh_cols = 14;
    int mesh_subdivisions = 2;
    std::string mesh_obj_path;

    ModelConfig model;
    CorpusConfig corpus;

    // train
    double train_lr = 1e-3;
    int train_batch = 32;
    int train_epochs = 200;
    std::optional<uint64_t> seed;
    bool train_weighted_loss = true;
    bool train_zero_cat = false;

    // synth
    std::vector<std::string> synth_emotions;
    std::vector<double> synth_mu_e_levels = {0.5, 1.0, 1.5};
    double synth_mu_t = 1.0;

    // eval
    MetricAgg metric_agg = MetricAgg::Mean;
    double eval_tau = 0.10;

    // emo-gen
    EmoGenConfig gen;
    double gen_lr = 1e-3;
    int gen_epochs = 20;
    int gen_batch = 32;

    // classifier (used by the ablation harness)
    ClassifierConfig classifier;

    // paths
    std::string out_dir = "out";
    std::string corpus_dir;
    std::string checkpoint;
    std::string gen_checkpoint;
    std::string manifest;

    std::string config_hash; // of the canonical JSON, filled at load

    std::pair<MeshTopology, VertexField> build_mesh() const {
        if (mesh_source == "grid") return make_face_grid(mesh_rows, mesh_cols);
        if (mesh_source == "icosphere") return make_icosphere(mesh_subdivisions);
        if (mesh_source == "obj") {
            if (mesh_obj_path.empty()) throw ConfigError("mesh.obj_path required for source 'obj'");
            return load_obj(mesh_obj_path);
        }
        throw ConfigError("mesh.source must be grid, icosphere or obj, got '" + mesh_source + "'");
    }

    uint64_t require_seed(const char* what) const {
        if (!seed)
            throw ConfigError(std::string(what) + " requires a seed (train.seed or --seed)");
        return *seed;
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key '" + where + "." + it.key() + "'");
    }
}

template <class T>
void get_to(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
    detail::check_keys(j, "",
                       {"mesh", "model", "train", "corpus", "synth", "eval", "gen", "classifier",
                        "paths"});
    RunConfig cfg;

    if (j.contains("mesh")) {
        const auto& m = j["mesh"];
        detail::check_keys(m, "mesh", {"source", "rows", "cols", "subdivisions", "obj_path"});
        detail::get_to(m, "source", cfg.mesh_source);
        detail::get_to(m, "rows", cfg.mesh_rows);
        detail::get_to(m, "cols", cfg.mesh_cols);
        detail::get_to(m, "subdivisions", cfg.mesh_subdivisions);
        detail::get_to(m, "obj_path", cfg.mesh_obj_path);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        detail::check_keys(m, "model",
                           {"latent_dim", "channels", "spiral_length", "levels", "single_encoder"});
        detail::get_to(m, "latent_dim", cfg.model.latent_dim);
        detail::get_to(m, "channels", cfg.model.channels);
        detail::get_to(m, "spiral_length", cfg.model.spiral_length);
        detail::get_to(m, "levels", cfg.model.factors);
        detail::get_to(m, "single_encoder", cfg.model.single_encoder);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        detail::check_keys(t, "train",
                           {"lr", "batch", "epochs", "seed", "weighted_loss", "zero_cat_training"});
        detail::get_to(t, "lr", cfg.train_lr);
        detail::get_to(t, "batch", cfg.train_batch);
        detail::get_to(t, "epochs", cfg.train_epochs);
        if (t.contains("seed")) cfg.seed = t["seed"].get<uint64_t>();
        detail::get_to(t, "weighted_loss", cfg.train_weighted_loss);
        detail::get_to(t, "zero_cat_training", cfg.train_zero_cat);
    }
    if (j.contains("corpus")) {
        const auto& c = j["corpus"];
        detail::check_keys(c, "corpus",
                           {"n_actors", "n_contents", "n_expressions", "frames_per_seq", "fps",
                            "variant", "feature_bands"});
        detail::get_to(c, "n_actors", cfg.corpus.n_actors);
        detail::get_to(c, "n_contents", cfg.corpus.n_contents);
        detail::get_to(c, "n_expressions", cfg.corpus.n_expressions);
        detail::get_to(c, "frames_per_seq", cfg.corpus.frames_per_seq);
        detail::get_to(c, "fps", cfg.corpus.fps);
        detail::get_to(c, "variant", cfg.corpus.variant);
        detail::get_to(c, "feature_bands", cfg.corpus.feature_bands);
    }
    if (j.contains("synth")) {
        const auto& s = j["synth"];
        detail::check_keys(s, "synth", {"emotions", "mu_e_levels", "mu_t"});
        detail::get_to(s, "emotions", cfg.synth_emotions);
        detail::get_to(s, "mu_e_levels", cfg.synth_mu_e_levels);
        detail::get_to(s, "mu_t", cfg.synth_mu_t);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        detail::check_keys(e, "eval", {"metric_agg", "tau"});
        if (e.contains("metric_agg")) cfg.metric_agg = metric_agg_from_string(e["metric_agg"]);
        detail::get_to(e, "tau", cfg.eval_tau);
    }
    // derived defaults; gen.feature_dim may still be overridden below
    cfg.gen.n_emotions = cfg.corpus.n_expressions;
    cfg.gen.feature_dim = cfg.corpus.feature_bands;
    if (j.contains("gen")) {
        const auto& g = j["gen"];
        detail::check_keys(g, "gen",
                           {"feature_dim", "label_embed_dim", "hidden", "layers", "channels",
                            "levels", "spiral_length", "lr", "epochs", "batch"});
        detail::get_to(g, "feature_dim", cfg.gen.feature_dim);
        detail::get_to(g, "label_embed_dim", cfg.gen.label_embed_dim);
        detail::get_to(g, "hidden", cfg.gen.hidden);
        detail::get_to(g, "layers", cfg.gen.layers);
        detail::get_to(g, "channels", cfg.gen.channels);
        detail::get_to(g, "levels", cfg.gen.factors);
        detail::get_to(g, "spiral_length", cfg.gen.spiral_length);
        detail::get_to(g, "lr", cfg.gen_lr);
        detail::get_to(g, "epochs", cfg.gen_epochs);
        detail::get_to(g, "batch", cfg.gen_batch);
    }
    if (j.contains("classifier")) {
        const auto& c = j["classifier"];
        detail::check_keys(c, "classifier",
                           {"channels", "levels", "spiral_length", "hidden", "lr", "batch",
                            "epochs"});
        detail::get_to(c, "channels", cfg.classifier.channels);
        detail::get_to(c, "levels", cfg.classifier.factors);
        detail::get_to(c, "spiral_length", cfg.classifier.spiral_length);
        detail::get_to(c, "hidden", cfg.classifier.hidden);
        detail::get_to(c, "lr", cfg.classifier.lr);
        detail::get_to(c, "batch", cfg.classifier.batch);
        detail::get_to(c, "epochs", cfg.classifier.epochs);
    }
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        detail::check_keys(p, "paths",
                           {"out_dir", "corpus_dir", "checkpoint", "gen_checkpoint", "manifest"});
        detail::get_to(p, "out_dir", cfg.out_dir);
        detail::get_to(p, "corpus_dir", cfg.corpus_dir);
        detail::get_to(p, "checkpoint", cfg.checkpoint);
        detail::get_to(p, "gen_checkpoint", cfg.gen_checkpoint);
        detail::get_to(p, "manifest", cfg.manifest);
    }

    cfg.config_hash = hash_hex(fnv1a(j.dump()));
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
    }
    return parse_config(j);
}

}  // namespace desd
