#pragma once

#include <string>

#include "redirtrans/config.hpp"
#include "redirtrans/trainer.hpp"
#include "redirtrans/world.hpp"

namespace rdt::cfg {

// Bindings from dotted config keys to the typed run structs. Every reader
// starts from the struct's built-in defaults and overrides only the keys
// present, so a minimal file stays minimal; the record_* writers push the
// effective values back into the Config for the run-directory echo.

// Shortest round-trippable decimal for config echoes and CSV cells.
std::string format_value(double v);

// "1,2,3" <-> {1,2,3}; throws std::invalid_argument naming `what` on junk.
std::vector<int> parse_int_list(const std::string& s, const std::string& what);
std::string join_ints(const std::vector<int>& v);

// world.K, world.D, world.image_side, world.cond_range, world.id_feature_dim,
// world.master_seed, world.gaze_layers, world.head_layers (comma lists).
world::WorldSpec world_spec(Config& cfg);
void record_world_spec(Config& cfg, const world::WorldSpec& s);

// <prefix>.path (load an .rdtd) or <prefix>.identities / .per_identity /
// .seed (generate).
struct DatasetKeys {
    std::string path;
    int identities = 0;
    int per_identity = 0;
    uint64_t seed = 0;
};

DatasetKeys dataset_keys(Config& cfg, const std::string& prefix, int def_identities,
                         int def_per_identity, uint64_t def_seed);
void record_dataset_keys(Config& cfg, const std::string& prefix, const DatasetKeys& k);
world::Dataset materialize_dataset(const DatasetKeys& k, const world::World& w);

// train.mode, train.labels, train.batch_size, train.epochs, train.lr0,
// train.decay, train.decay_every, train.clip_norm, train.seed,
// train.eval_every, loss.{rec,perc,att,id,lab,emb,prob}.
train::TrainConfig train_config(Config& cfg);
void record_train_config(Config& cfg, const train::TrainConfig& t);

// <prefix>.epochs, .batch, .lr, .decay, .clip_norm, .seed.
world::EstimatorTrainConfig estimator_config(Config& cfg, const std::string& prefix);
void record_estimator_config(Config& cfg, const std::string& prefix,
                             const world::EstimatorTrainConfig& e);

}  // namespace rdt::cfg
