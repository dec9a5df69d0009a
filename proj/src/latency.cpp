#include "latency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace privit::latency {

const char * cost_tag_name(CostTag tag) {
    switch (tag) {
        case CostTag::softmax:
            return "softmax";
        case CostTag::layernorm:
            return "layernorm";
        case CostTag::gelu:
            return "gelu";
        case CostTag::square:
            return "square";
        case CostTag::relu_softmax:
            return "relu_softmax";
        case CostTag::scale_attn_row:
            return "scale_attn_row";
        case CostTag::uniform_attn_row:
            return "uniform_attn_row";
    }
    return "?";
}

CostTag cost_tag_from_name(const std::string & name) {
    for (CostTag tag : {CostTag::softmax, CostTag::layernorm, CostTag::gelu, CostTag::square,
                        CostTag::relu_softmax, CostTag::scale_attn_row, CostTag::uniform_attn_row}) {
        if (name == cost_tag_name(tag)) {
            return tag;
        }
    }
    throw std::invalid_argument("unknown cost tag '" + name + "'");
}

void CostTable::set_anchor(CostTag tag, int n, double reluops) {
    if (n < 1) {
        throw std::invalid_argument("cost anchor length must be >= 1");
    }
    for (Anchor & a : anchors) {
        if (a.tag == tag && a.n == n) {
            a.reluops = reluops;
            return;
        }
    }
    anchors.push_back({tag, n, reluops});
}

CostTable builtin_cost_table() {
    CostTable t;
    t.anchors = {
        {CostTag::softmax, 197, 18586.0},
        {CostTag::layernorm, 192, 6504.0},
        {CostTag::layernorm, 256, 8614.0},
        {CostTag::gelu, 1, 270.0},
        {CostTag::square, 197, 3248.0},
        {CostTag::relu_softmax, 257, 4428.0},
        {CostTag::relu_softmax, 65, 1133.0},
    };
    return t;
}

void load_cost_overrides(CostTable & table, const std::string & csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw std::runtime_error("cannot open cost override file '" + csv_path + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("tag,n,reluops", 0) != 0) {
        throw std::runtime_error("cost override file '" + csv_path +
                                 "' must start with header 'tag,n,reluops'");
    }
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string tag_s, n_s, cost_s;
        if (!std::getline(ss, tag_s, ',') || !std::getline(ss, n_s, ',') ||
            !std::getline(ss, cost_s)) {
            throw std::runtime_error(csv_path + ":" + std::to_string(line_no) + ": bad row '" +
                                     line + "'");
        }
        table.set_anchor(cost_tag_from_name(tag_s), std::stoi(n_s), std::stod(cost_s));
    }
}

double cost_of(CostTag tag, int n, const CostTable & table) {
    if (n < 1) {
        throw std::invalid_argument("cost_of: vector length must be >= 1");
    }
    for (const CostTable::Anchor & a : table.anchors) {
        if (a.tag == tag && a.n == n) {
            return a.reluops;
        }
    }
    if (tag == CostTag::scale_attn_row || tag == CostTag::uniform_attn_row) {
        return 0.0;  // linear maps, nothing to garble
    }
    // gather this tag's anchors
    const CostTable::Anchor * nearest = nullptr;
    int max_len = 0;
    for (const CostTable::Anchor & a : table.anchors) {
        if (a.tag != tag) {
            continue;
        }
        max_len = std::max(max_len, a.n);
        if (!nearest || std::abs(a.n - n) < std::abs(nearest->n - n) ||
            (std::abs(a.n - n) == std::abs(nearest->n - n) && a.n < nearest->n)) {
            nearest = &a;
        }
    }
    if (!nearest) {
        throw std::invalid_argument(std::string("cost_of: no anchor for tag '") +
                                    cost_tag_name(tag) + "'");
    }
    if (tag == CostTag::gelu) {
        // pointwise: the n=1 anchor priced per element
        return nearest->reluops / nearest->n * n;
    }
    if (n > 4 * max_len) {
        throw std::invalid_argument(std::string("cost_of: refusing to extrapolate '") +
                                    cost_tag_name(tag) + "' to n=" + std::to_string(n) +
                                    " (largest anchor is n=" + std::to_string(max_len) +
                                    "); add a cost-table override for this length");
    }
    return nearest->reluops * static_cast<double>(n) / nearest->n;
}

NonlinearityCensus census_of_model(const vit::ModelConfig & cfg, const vit::SwitchSet & sw) {
    if (!sw.c_frozen || !sw.s_frozen) {
        throw std::logic_error("census_of_model: switches must be binarized first");
    }
    const int n = cfg.num_tokens();
    const int per_layer_c = cfg.gelu_switch_count() / cfg.num_layers;
    const int per_layer_s = cfg.softmax_switch_count() / cfg.num_layers;

    NonlinearityCensus census;
    census.attn_row_len  = n;
    census.layernorm_len = cfg.embed_dim;
    census.layers.resize(static_cast<size_t>(cfg.num_layers));
    for (int li = 0; li < cfg.num_layers; ++li) {
        auto & lc = census.layers[static_cast<size_t>(li)];
        for (int i = 0; i < per_layer_s; ++i) {
            const bool exact = sw.s[static_cast<size_t>(li * per_layer_s + i)] > sw.epsilon;
            if (exact) {
                ++lc.softmax_rows;
            } else {
                switch (cfg.taylor_variant) {
                    case vit::AttnVariant::squared:
                        ++lc.squared_rows;
                        break;
                    case vit::AttnVariant::scale:
                        ++lc.scale_rows;
                        break;
                    case vit::AttnVariant::uniform:
                        ++lc.uniform_rows;
                        break;
                }
            }
        }
        long long active_c = 0;
        for (int i = 0; i < per_layer_c; ++i) {
            if (sw.c[static_cast<size_t>(li * per_layer_c + i)] > sw.epsilon) {
                ++active_c;
            }
        }
        lc.gelu_elements = cfg.gelu_granularity == vit::GeluGranularity::per_token
                               ? active_c * cfg.mlp_dim
                               : active_c;
        lc.layernorms = 2 * n;  // one application per token before attention and MLP
    }
    census.final_layernorms = n;
    return census;
}

LatencyBreakdown latency_estimate(const NonlinearityCensus & census, const CostTable & table) {
    LatencyBreakdown out;
    // unit costs resolved lazily so empty categories never demand an anchor
    auto unit = [&table](CostTag tag, int n) { return cost_of(tag, n, table); };
    long long softmax_rows = 0, squared_rows = 0, scale_rows = 0, uniform_rows = 0;
    long long layernorms = census.final_layernorms, gelu_elements = 0;
    for (const auto & lc : census.layers) {
        softmax_rows += lc.softmax_rows;
        squared_rows += lc.squared_rows;
        scale_rows += lc.scale_rows;
        uniform_rows += lc.uniform_rows;
        layernorms += lc.layernorms;
        gelu_elements += lc.gelu_elements;
    }
    if (softmax_rows > 0) {
        out.softmax = static_cast<double>(softmax_rows) * unit(CostTag::softmax, census.attn_row_len);
    }
    if (squared_rows > 0) {
        out.square = static_cast<double>(squared_rows) * unit(CostTag::square, census.attn_row_len);
    }
    if (scale_rows > 0) {
        out.scale = static_cast<double>(scale_rows) * unit(CostTag::scale_attn_row, census.attn_row_len);
    }
    if (uniform_rows > 0) {
        out.uniform =
            static_cast<double>(uniform_rows) * unit(CostTag::uniform_attn_row, census.attn_row_len);
    }
    if (layernorms > 0) {
        out.layernorm = static_cast<double>(layernorms) * unit(CostTag::layernorm, census.layernorm_len);
    }
    if (gelu_elements > 0) {
        out.gelu = static_cast<double>(gelu_elements) * unit(CostTag::gelu, 1);
    }
    out.total = out.softmax + out.square + out.scale + out.uniform + out.layernorm + out.gelu;
    return out;
}

std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint> & points) {
    if (points.empty()) {
        throw std::invalid_argument("pareto_frontier: empty input");
    }
    std::vector<size_t> order(points.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&points](size_t a, size_t b) {
        const ParetoPoint & pa = points[a];
        const ParetoPoint & pb = points[b];
        if (pa.latency != pb.latency) {
            return pa.latency < pb.latency;
        }
        if (pa.accuracy != pb.accuracy) {
            return pa.accuracy > pb.accuracy;
        }
        return pa.label < pb.label;
    });
    std::vector<ParetoPoint> out;
    double best_accuracy = -1.0;
    for (size_t idx : order) {
        if (points[idx].accuracy > best_accuracy) {
            out.push_back(points[idx]);
            best_accuracy = points[idx].accuracy;
        }
    }
    return out;
}

}  // namespace privit::latency
