#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "train.hpp"
#include "vit.hpp"

namespace privit::runner {

// thrown for malformed configs / flags; maps to exit code 2
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// maps to exit code 3
struct nonconvergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// maps to exit code 4
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Everything one run needs. Default values are the desk-scale setup: a
// 2-layer, d=16, H=2 model over 16x16 synthetic images, which runs a full
// search plus finetune in minutes on one core.
struct RunConfig {
    vit::ModelConfig      model;
    train::SearchConfig   search;
    train::PretrainConfig pretrain;

    std::string data_kind          = "synthetic";  // synthetic | cifar10
    int         data_classes       = 2;
    int         data_per_class     = 100;
    int         data_per_class_test = 100;
    std::string data_path;  // cifar10 batch directory or file

    uint64_t    seed = 1;
    std::string out_dir = "out";
    std::string teacher_path;

    std::vector<int> sweep_gelu_budgets;
    std::vector<int> sweep_softmax_budgets;
    int              sweep_workers = 1;

    std::vector<std::string> ablate_variants = {"squared", "scale", "uniform"};
    std::string              cost_overrides_path;

    std::set<std::string> explicit_keys;  // keys set via file or flag

    bool is_set(const std::string & key) const { return explicit_keys.count(key) > 0; }
};

// `key = value` per line, '#' starts a comment. Unknown keys are errors.
RunConfig load_run_config(const std::string & path);

// Applies one key/value pair (same key space as the file format).
void apply_override(RunConfig & cfg, const std::string & key, const std::string & value);

// Resolves strategy-derived knobs and validates. Call after all overrides.
void finalize(RunConfig & cfg);

// Budget defaults used when the config never sets them: 25% of each mask.
void default_budgets(RunConfig & cfg);

}  // namespace privit::runner
