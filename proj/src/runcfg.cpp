#include "redirtrans/runcfg.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace rdt::cfg {

namespace {
std::string fmt_num(double v) { return format_value(v); }
}  // namespace

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t pos = 0;
        int v = std::stoi(item, &pos);
        while (pos < item.size() && std::isspace(static_cast<unsigned char>(item[pos]))) ++pos;
        if (pos != item.size())
            throw std::invalid_argument(what + ": bad list entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument(what + ": empty list");
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

world::WorldSpec world_spec(Config& cfg) {
    world::WorldSpec s;
    s.K = static_cast<int>(cfg.get_i64("world.K", s.K));
    s.D = static_cast<int>(cfg.get_i64("world.D", s.D));
    s.image_side = static_cast<int>(cfg.get_i64("world.image_side", s.image_side));
    s.cond_range = static_cast<float>(cfg.get_f64("world.cond_range", s.cond_range));
    s.id_feature_dim = static_cast<int>(cfg.get_i64("world.id_feature_dim", s.id_feature_dim));
    s.master_seed = cfg.get_u64("world.master_seed", s.master_seed);
    s.gaze_layers = parse_int_list(cfg.get_str("world.gaze_layers", join_ints(s.gaze_layers)),
                                   "world.gaze_layers");
    s.head_layers = parse_int_list(cfg.get_str("world.head_layers", join_ints(s.head_layers)),
                                   "world.head_layers");
    return s;
}

void record_world_spec(Config& cfg, const world::WorldSpec& s) {
    cfg.set("world.K", std::to_string(s.K));
    cfg.set("world.D", std::to_string(s.D));
    cfg.set("world.image_side", std::to_string(s.image_side));
    cfg.set("world.cond_range", fmt_num(s.cond_range));
    cfg.set("world.id_feature_dim", std::to_string(s.id_feature_dim));
    cfg.set("world.master_seed", std::to_string(s.master_seed));
    cfg.set("world.gaze_layers", join_ints(s.gaze_layers));
    cfg.set("world.head_layers", join_ints(s.head_layers));
}

DatasetKeys dataset_keys(Config& cfg, const std::string& prefix, int def_identities,
                         int def_per_identity, uint64_t def_seed) {
    DatasetKeys k;
    k.path = cfg.get_str(prefix + ".path", "");
    k.identities = static_cast<int>(cfg.get_i64(prefix + ".identities", def_identities));
    k.per_identity = static_cast<int>(cfg.get_i64(prefix + ".per_identity", def_per_identity));
    k.seed = cfg.get_u64(prefix + ".seed", def_seed);
    return k;
}

void record_dataset_keys(Config& cfg, const std::string& prefix, const DatasetKeys& k) {
    if (!k.path.empty()) {
        cfg.set(prefix + ".path", k.path);
        return;
    }
    cfg.set(prefix + ".identities", std::to_string(k.identities));
    cfg.set(prefix + ".per_identity", std::to_string(k.per_identity));
    cfg.set(prefix + ".seed", std::to_string(k.seed));
}

world::Dataset materialize_dataset(const DatasetKeys& k, const world::World& w) {
    if (!k.path.empty()) return world::read_dataset(k.path, w.spec);
    return world::sample_dataset(w, k.identities, k.per_identity, k.seed);
}

train::TrainConfig train_config(Config& cfg) {
    train::TrainConfig t;
    std::string mode = cfg.get_str("train.mode", "layerwise");
    if (mode == "layerwise") t.mode = redir::Mode::kLayerwise;
    else if (mode == "flat") t.mode = redir::Mode::kFlat;
    else throw std::invalid_argument("train.mode must be 'layerwise' or 'flat', got '" + mode + "'");
    std::string labels = cfg.get_str("train.labels", "pseudo");
    if (labels == "pseudo") t.label_source = train::TrainConfig::Labels::kPseudo;
    else if (labels == "truth") t.label_source = train::TrainConfig::Labels::kTruth;
    else
        throw std::invalid_argument("train.labels must be 'pseudo' or 'truth', got '" + labels +
                                    "'");
    t.batch_size = static_cast<int>(cfg.get_i64("train.batch_size", t.batch_size));
    t.epochs = static_cast<int>(cfg.get_i64("train.epochs", t.epochs));
    t.lr0 = cfg.get_f64("train.lr0", t.lr0);
    t.decay = cfg.get_f64("train.decay", t.decay);
    t.decay_every = static_cast<int>(cfg.get_i64("train.decay_every", t.decay_every));
    t.clip_norm = cfg.get_f64("train.clip_norm", t.clip_norm);
    t.seed = cfg.get_u64("train.seed", t.seed);
    t.eval_every = static_cast<int>(cfg.get_i64("train.eval_every", t.eval_every));
    t.weights.rec = cfg.get_f64("loss.rec", t.weights.rec);
    t.weights.perc = cfg.get_f64("loss.perc", t.weights.perc);
    t.weights.att = cfg.get_f64("loss.att", t.weights.att);
    t.weights.id = cfg.get_f64("loss.id", t.weights.id);
    t.weights.lab = cfg.get_f64("loss.lab", t.weights.lab);
    t.weights.emb = cfg.get_f64("loss.emb", t.weights.emb);
    t.weights.prob = cfg.get_f64("loss.prob", t.weights.prob);
    return t;
}

void record_train_config(Config& cfg, const train::TrainConfig& t) {
    cfg.set("train.mode", t.mode == redir::Mode::kLayerwise ? "layerwise" : "flat");
    cfg.set("train.labels",
            t.label_source == train::TrainConfig::Labels::kPseudo ? "pseudo" : "truth");
    cfg.set("train.batch_size", std::to_string(t.batch_size));
    cfg.set("train.epochs", std::to_string(t.epochs));
    cfg.set("train.lr0", fmt_num(t.lr0));
    cfg.set("train.decay", fmt_num(t.decay));
    cfg.set("train.decay_every", std::to_string(t.decay_every));
    cfg.set("train.clip_norm", fmt_num(t.clip_norm));
    cfg.set("train.seed", std::to_string(t.seed));
    cfg.set("train.eval_every", std::to_string(t.eval_every));
    cfg.set("loss.rec", fmt_num(t.weights.rec));
    cfg.set("loss.perc", fmt_num(t.weights.perc));
    cfg.set("loss.att", fmt_num(t.weights.att));
    cfg.set("loss.id", fmt_num(t.weights.id));
    cfg.set("loss.lab", fmt_num(t.weights.lab));
    cfg.set("loss.emb", fmt_num(t.weights.emb));
    cfg.set("loss.prob", fmt_num(t.weights.prob));
}

world::EstimatorTrainConfig estimator_config(Config& cfg, const std::string& prefix) {
    world::EstimatorTrainConfig e;
    e.epochs = static_cast<int>(cfg.get_i64(prefix + ".epochs", e.epochs));
    e.batch = static_cast<int>(cfg.get_i64(prefix + ".batch", e.batch));
    e.lr = cfg.get_f64(prefix + ".lr", e.lr);
    e.decay = cfg.get_f64(prefix + ".decay", e.decay);
    e.clip_norm = cfg.get_f64(prefix + ".clip_norm", e.clip_norm);
    e.seed = cfg.get_u64(prefix + ".seed", e.seed);
    return e;
}

void record_estimator_config(Config& cfg, const std::string& prefix,
                             const world::EstimatorTrainConfig& e) {
    cfg.set(prefix + ".epochs", std::to_string(e.epochs));
    cfg.set(prefix + ".batch", std::to_string(e.batch));
    cfg.set(prefix + ".lr", fmt_num(e.lr));
    cfg.set(prefix + ".decay", fmt_num(e.decay));
    cfg.set(prefix + ".clip_norm", fmt_num(e.clip_norm));
    cfg.set(prefix + ".seed", std::to_string(e.seed));
}

}  // namespace rdt::cfg
