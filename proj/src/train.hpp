#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "rng.hpp"
#include "vit.hpp"

namespace privit::train {

// Adam / AdamW. Weight decay, when nonzero, is applied in the decoupled
// form (theta <- theta - lr*wd*theta) before the moment update.
class Adam {
  public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::string & name, std::vector<double> & value,
              const std::vector<double> & grad, double lr, double weight_decay = 0.0);

  private:
    struct Slot {
        std::vector<double> m, v;
        int64_t             t = 0;
    };
    double beta1_, beta2_, eps_;
    std::map<std::string, Slot> slots_;
};

// cosine annealing from lr0 to 0 across `total` epochs; lr(0) = lr0
double cosine_lr(double lr0, int epoch, int total);

struct LossParts {
    ad::Tensor total;  // ce + L1 penalties on the trainable masks
    ad::Tensor ce;
};

// Cross-entropy plus lambda_g*|C|_1 + lambda_s*|S|_1. Callers pass lambda 0
// for frozen or dropped masks, which removes both the penalty and its
// gradient; with both lambdas zero the total is the cross-entropy node
// itself. The loss value never depends on whether gradients are tracked.
LossParts privit_loss(ad::Tensor logits, const std::vector<int> & labels, ad::Tensor c_mask,
                      ad::Tensor s_mask, double lambda_g, double lambda_s);

struct SearchConfig {
    double lambda_g_init = 3e-5;
    double lambda_s_init = 3e-5;
    double kappa         = 1.1;   // penalty scheduling factor
    int    gelu_budget    = 0;    // G
    int    softmax_budget = 0;    // S
    double epsilon        = 1e-3;
    int    gelu_improve_min    = 2;
    int    softmax_improve_min = 200;
    int    strategy            = 5;
    bool   kd_enabled     = true;
    double kd_temperature = 4.0;
    int    warmup_epochs  = 5;
    int    max_epochs     = 300;
    int    finetune_epochs = 50;
    double weight_lr    = 1e-3;
    double switch_lr    = 1e-2;
    double finetune_lr  = 1e-3;
    double weight_decay = 1e-4;
    int    batch_size   = 32;

    // strategy-controlled knobs
    bool early_binarize       = true;   // binarize at freeze vs after the loop
    bool increment_on_increase = false;  // bump lambda on count increase
                                         // instead of insufficient decrease

    void validate() const;
};

// Appendix strategies S1..S5; returns cfg with the strategy knobs applied.
SearchConfig apply_strategy(SearchConfig cfg, int strategy);

struct SearchState {
    double lambda_g = 0.0;
    double lambda_s = 0.0;
    int    lowest_gelu_count    = 0;
    int    lowest_softmax_count = 0;
    bool   c_budget_met = false;
    bool   s_budget_met = false;
    int    epoch = 0;
    // previous epoch's counts, for the increment-on-increase strategies
    int prev_gelu_count    = -1;
    int prev_softmax_count = -1;
};

struct EpochStats {
    int    epoch = 0;
    double train_loss = 0.0;  // ce + penalties + kd
    double ce_loss    = 0.0;
    double kd_loss    = 0.0;
    int    gelu_count    = 0;
    int    softmax_count = 0;
    double lambda_g = 0.0;
    double lambda_s = 0.0;
    bool   c_frozen = false;
    bool   s_frozen = false;
};

// One pass over the penalty schedule: bump lambdas per the configured
// condition (guarded by the budget flags), then fold the current counts
// into the lowest counts.
void schedule_penalties(SearchState & st, int gelu_count, int softmax_count,
                        const SearchConfig & cfg);

struct SearchResult {
    bool                   converged = false;
    SearchState            state;
    std::vector<EpochStats> history;
};

// The search loop: per epoch one optimizer pass over the data minimizing
// ce + L1 penalties (+ KD), then count, schedule, and per-mask budget
// checks. Masks whose budget is met are binarized (or, for the
// late-binarization strategies, dropped from training and binarized once
// the loop exits) and never trained again. Non-convergence within
// max_epochs returns converged=false with the history intact.
SearchResult privit_search(vit::Model & model, vit::Model * teacher,
                           const data::DatasetSplit & train_data, const SearchConfig & cfg,
                           Rng & rng);

// Post-search finetuning: AdamW over weights only with cosine annealing,
// KD kept if enabled. Both masks must be frozen and exactly binary.
std::vector<EpochStats> finetune(vit::Model & model, vit::Model * teacher,
                                 const data::DatasetSplit & train_data, const SearchConfig & cfg,
                                 Rng & rng);

// Zeroes the GELU switches of the last k MLP layers, keeps S all ones, and
// freezes both masks.
void layerwise_taylorize_baseline(vit::Model & model, int k);

struct PretrainConfig {
    int    max_epochs = 200;
    double lr         = 1e-3;
    double target_accuracy = 0.995;  // early stop once train accuracy reaches this
    int    batch_size = 32;
};

struct PretrainResult {
    int    epochs_run = 0;
    double final_train_accuracy = 0.0;
    std::vector<EpochStats> history;
    std::vector<double>     accuracy_history;  // train accuracy per epoch
};

// Plain supervised training of the fully nonlinear model (all switches 1).
PretrainResult pretrain(vit::Model & model, const data::DatasetSplit & train_data,
                        const PretrainConfig & cfg, Rng & rng);

// --- evaluation helpers ---------------------------------------------------

double accuracy(vit::Model & m, const data::DatasetSplit & split, int batch = 64);
std::vector<double> per_class_accuracy(vit::Model & m, const data::DatasetSplit & split,
                                       int batch = 64);

// (max, mean, population variance) of a-b over classes
struct DegradationStats {
    double max_diff  = 0.0;
    double mean_diff = 0.0;
    double variance  = 0.0;
};
DegradationStats degradation_stats(const std::vector<double> & per_class_a,
                                   const std::vector<double> & per_class_b);

}  // namespace privit::train
