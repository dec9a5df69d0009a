#pragma once

#include <string>
#include <vector>

#include "vit.hpp"

namespace privit::latency {

// Nonlinearity kinds the cost model knows about. scale_attn_row and
// uniform_attn_row are linear maps and carry zero garbled-circuit cost.
enum class CostTag {
    softmax,
    layernorm,
    gelu,
    square,
    relu_softmax,
    scale_attn_row,
    uniform_attn_row,
};

const char * cost_tag_name(CostTag tag);
CostTag      cost_tag_from_name(const std::string & name);

struct CostTable {
    struct Anchor {
        CostTag tag;
        int     n;        // vector length the anchor was measured at
        double  reluops;  // cost normalized to one scalar ReLU
    };
    std::vector<Anchor> anchors;

    // adds or replaces an anchor; the entry then satisfies exact lookups
    // and lifts the extrapolation limit around its length
    void set_anchor(CostTag tag, int n, double reluops);
};

// Benchmarked garbled-circuit anchors, normalized to one ReLU op.
CostTable builtin_cost_table();

// Parses override rows `tag,n,reluops` (header required) into the table.
void load_cost_overrides(CostTable & table, const std::string & csv_path);

// Exact anchor if present. Otherwise: gelu costs are per element (anchor at
// n=1 times n), scale/uniform rows cost 0, and the remaining tags scale
// proportionally in n from the nearest anchor — an estimate by
// construction. Proportional extrapolation beyond 4x every anchor length
// is refused with an error naming the missing anchor.
double cost_of(CostTag tag, int n, const CostTable & table);

struct NonlinearityCensus {
    struct LayerCounts {
        int       softmax_rows = 0;  // exact softmax attention rows
        int       squared_rows = 0;  // Taylorized rows by variant
        int       scale_rows   = 0;
        int       uniform_rows = 0;
        int       layernorms    = 0;  // applications, 2 per token
        long long gelu_elements = 0;  // pointwise GELU applications
    };
    std::vector<LayerCounts> layers;
    int final_layernorms = 0;  // pre-classifier layernorm, one per token
    int attn_row_len     = 0;  // vector length of one attention row (N)
    int layernorm_len    = 0;  // vector length of one layernorm (d)
};

// Counts the surviving nonlinearities of a binarized model. Throws if
// either mask is not yet binarized.
NonlinearityCensus census_of_model(const vit::ModelConfig & cfg, const vit::SwitchSet & sw);

struct LatencyBreakdown {
    double total     = 0.0;
    double softmax   = 0.0;
    double layernorm = 0.0;
    double gelu      = 0.0;
    double square    = 0.0;
    double scale     = 0.0;
    double uniform   = 0.0;
};

// Weighted sum of census counts and unit costs, in ReLU ops.
LatencyBreakdown latency_estimate(const NonlinearityCensus & census, const CostTable & table);

struct ParetoPoint {
    double      latency  = 0.0;  // ReLU ops
    double      accuracy = 0.0;  // fraction in [0,1]
    std::string label;
};

// Maximal set under (latency <=, accuracy >=) dominance, sorted by latency
// ascending; exact duplicates keep the first label in lexicographic order.
std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint> & points);

}  // namespace privit::latency
