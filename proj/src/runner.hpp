#pragma once

#include <string>
#include <string_view>

#include "config.hpp"
#include "data.hpp"
#include "latency.hpp"
#include "train.hpp"

namespace privit::runner {

// Deterministic per-purpose seed streams derived from the run seed.
uint64_t derive_seed(uint64_t seed, std::string_view tag);

struct Datasets {
    data::DatasetSplit train;
    data::DatasetSplit test;
};
Datasets load_datasets(const RunConfig & cfg);

struct RunSummary {
    std::string label;
    bool   converged     = true;
    int    search_epochs = 0;
    int    gelu_count    = 0;
    int    softmax_count = 0;
    double latency_reluops = 0.0;
    double train_accuracy  = 0.0;
    double test_accuracy   = 0.0;
    double teacher_test_accuracy = -1.0;  // -1 when trained without a teacher
    std::string checkpoint_path;
};

// Trains the fully nonlinear teacher and writes teacher.pvit,
// pretrain_history.csv and summary.csv under cfg.out_dir.
RunSummary cmd_pretrain(const RunConfig & cfg);

// Full pipeline: search, finetune, then census/latency/accuracy reports.
// Writes model.pvit, history.csv, finetune_history.csv, census.csv,
// latency.csv, per_class_accuracy.csv and summary.csv under cfg.out_dir.
// Throws nonconvergence_error (history preserved on disk) if the budgets
// are not met within search.max_epochs.
RunSummary cmd_search(const RunConfig & cfg);

// Layer-wise Taylorization baseline: GELUs of the last k layers replaced by
// identity, all softmaxes kept, then finetuned. Same outputs as cmd_search.
RunSummary cmd_baseline_layerwise(const RunConfig & cfg, int k);

struct SweepOutcome {
    int cells_ok     = 0;
    int cells_failed = 0;
    std::string sweep_csv;
    std::string pareto_csv;
};

// Grid of (gelu budget, softmax budget) cells; failed cells are recorded
// and the sweep continues. Cells run on sweep_workers threads.
SweepOutcome cmd_sweep(const RunConfig & cfg);

// Runs the search once per Taylor variant at identical budgets and seed.
std::string cmd_ablate_attention(const RunConfig & cfg);

// Per-layer active vs base nonlinearity counts of a binarized checkpoint.
void report_distribution(const std::string & checkpoint_path, const std::string & out_csv);

// Census -> ReLU-op estimate for a binarized checkpoint; returns the total.
double latency_report(const std::string & checkpoint_path, const std::string & overrides_csv,
                      const std::string & out_csv);

// Reads two per-class accuracy CSVs (class,accuracy) and reports
// (max, mean, variance) of a-b; optionally writes them as CSV.
train::DegradationStats degrade_stats_files(const std::string & csv_a, const std::string & csv_b,
                                            const std::string & out_csv);

// label,latency_reluops,accuracy in; same plus on_frontier out.
void pareto_csv_file(const std::string & in_csv, const std::string & out_csv);

}  // namespace privit::runner
