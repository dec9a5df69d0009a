#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace privit::vit {

inline constexpr double k_layernorm_eps = 1e-5;

enum class GeluGranularity : int32_t { per_token = 0, per_element = 1 };
enum class AttnVariant : int32_t { squared = 0, scale = 1, uniform = 2 };

const char *  attn_variant_name(AttnVariant v);
AttnVariant   attn_variant_from_name(const std::string & name);

struct ModelConfig {
    int num_layers  = 2;
    int embed_dim   = 16;  // d
    int mlp_dim     = 32;  // m
    int num_heads   = 2;   // H
    int image_size  = 16;
    int patch_size  = 4;
    int num_classes = 2;
    int channels    = 1;

    GeluGranularity gelu_granularity = GeluGranularity::per_token;
    AttnVariant     taylor_variant   = AttnVariant::squared;

    int num_patches() const {
        const int side = image_size / patch_size;
        return side * side;
    }
    int num_tokens() const { return num_patches() + 1; }  // + class token
    int head_dim() const { return embed_dim / num_heads; }
    int patch_dim() const { return patch_size * patch_size * channels; }

    int gelu_switch_count() const {
        const int per_layer = gelu_granularity == GeluGranularity::per_token
                                  ? num_tokens()
                                  : num_tokens() * mlp_dim;
        return num_layers * per_layer;
    }
    int softmax_switch_count() const { return num_layers * num_heads * num_tokens(); }

    // per-layer GELU applications / attention rows of the unswitched model
    int gelu_elements_per_layer() const { return num_tokens() * mlp_dim; }
    int softmax_rows_per_layer() const { return num_heads * num_tokens(); }

    void validate() const;  // throws std::invalid_argument
};

// The auxiliary switch collections. c gates GELUs, s gates attention rows.
// frozen masks hold exact {0,1} entries and are excluded from training.
struct SwitchSet {
    std::vector<double> c;
    std::vector<double> s;
    double              epsilon  = 1e-3;
    bool                c_frozen = false;
    bool                s_frozen = false;

    static SwitchSet ones(const ModelConfig & cfg);
};

struct ActiveCounts {
    int gelu    = 0;
    int softmax = 0;
};

// entries strictly greater than epsilon, per mask
ActiveCounts count_active(const SwitchSet & sw);

enum class MaskSel { c, s, both };

// Threshold the selected masks to {0,1} and freeze them. Re-binarizing a
// frozen mask is a no-op.
void binarize(SwitchSet & sw, MaskSel which);

struct ModelParams {
    struct Layer {
        std::vector<double> ln1_g, ln1_b;      // [d]
        std::vector<double> wq, wk, wv, wo;    // [d x d]
        std::vector<double> ln2_g, ln2_b;      // [d]
        std::vector<double> w1;                // [d x m]
        std::vector<double> w2;                // [m x d]
    };

    std::vector<double> patch_w;    // [patch_dim x d]
    std::vector<double> cls_token;  // [1 x d]
    std::vector<double> pos_embed;  // [N x d]
    std::vector<Layer>  layers;
    std::vector<double> ln_f_g, ln_f_b;  // [d]
    std::vector<double> head_w;          // [d x C]

    static ModelParams init(const ModelConfig & cfg, Rng & rng);
};

// Stable iteration order over all weight arrays; shared by the optimizer,
// the checkpoint format and leaf construction.
struct NamedArray {
    std::string           name;
    std::vector<double> * data;
};
std::vector<NamedArray> named_params(ModelParams & p);

struct Model {
    ModelConfig cfg;
    ModelParams params;
    SwitchSet   switches;

    static Model create(const ModelConfig & cfg, uint64_t seed);
};

// --- graph construction ---------------------------------------------------

struct AttnLeaves {
    ad::Tensor wq, wk, wv, wo;
};

struct LayerLeaves {
    ad::Tensor ln1_g, ln1_b;
    AttnLeaves attn;
    ad::Tensor ln2_g, ln2_b;
    ad::Tensor w1, w2;
};

struct Leaves {
    ad::Tensor patch_w, cls_token, pos_embed;
    std::vector<LayerLeaves> layers;
    ad::Tensor ln_f_g, ln_f_b, head_w;
    ad::Tensor c, s;  // whole masks, constants when frozen

    std::vector<ad::Tensor> weight_order;  // aligned with named_params()
};

Leaves make_leaves(ad::Graph & g, Model & m, bool train_weights, bool train_c, bool train_s);

// Pointers to the structured weight leaves in named_params() order, so a
// caller can swap an individual leaf (e.g. for gradient checking).
std::vector<ad::Tensor *> leaf_slots(Leaves & lv);

// c * gelu(x) + (1-c) * x. x is [N x m]; c_gate is [N] for per-token
// granularity or [N*m] flat for per-element.
ad::Tensor switched_gelu(ad::Tensor x, ad::Tensor c_gate, GeluGranularity granularity);

// Attention over one layer's tokens; heads are split from the projection
// columns, outputs concatenated and passed through wo.
ad::Tensor squared_attention(ad::Tensor x, const AttnLeaves & w, int num_heads);
ad::Tensor scale_attention(ad::Tensor x, const AttnLeaves & w, int num_heads);
ad::Tensor uniform_attention(ad::Tensor x, const AttnLeaves & w, int num_heads);

// Row-wise blend s_i * softmax_row + (1-s_i) * taylor_row, per head. The
// softmax branch scales logits by 1/sqrt(head_dim) before the softmax; the
// Taylor branch is the configured variant and applies no such scaling.
// s_slice holds this layer's switches, head-major [H*N].
ad::Tensor switched_attention(ad::Tensor x, ad::Tensor s_slice, const AttnLeaves & w, int num_heads,
                              AttnVariant variant);

// Patch order: patch rows top-to-bottom, patches left-to-right within a row;
// within a patch, pixels row-major with channels innermost.
std::vector<double> patchify(const ModelConfig & cfg, const double * image);

// images: batch-flattened [B x image_size x image_size x channels] in [0,1].
// Returns logits [B x num_classes].
ad::Tensor forward_logits(ad::Graph & g, const ModelConfig & cfg, const Leaves & lv,
                          const std::vector<double> & images, int batch);

// Value-only forward (no gradient bookkeeping) for evaluation and teachers.
std::vector<double> eval_logits(Model & m, const std::vector<double> & images, int batch);

}  // namespace privit::vit
