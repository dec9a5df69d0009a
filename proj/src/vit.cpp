#include "vit.hpp"

#include <cmath>
#include <stdexcept>

namespace privit::vit {

using ad::Tensor;

const char * attn_variant_name(AttnVariant v) {
    switch (v) {
        case AttnVariant::squared:
            return "squared";
        case AttnVariant::scale:
            return "scale";
        case AttnVariant::uniform:
            return "uniform";
    }
    return "?";
}

AttnVariant attn_variant_from_name(const std::string & name) {
    if (name == "squared") {
        return AttnVariant::squared;
    }
    if (name == "scale") {
        return AttnVariant::scale;
    }
    if (name == "uniform") {
        return AttnVariant::uniform;
    }
    throw std::invalid_argument("unknown attention variant '" + name +
                                "' (expected squared|scale|uniform)");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string & msg) { throw std::invalid_argument("config: " + msg); };
    if (num_layers < 1) {
        fail("num_layers must be >= 1");
    }
    if (embed_dim < 1 || mlp_dim < 1 || num_heads < 1 || num_classes < 1 || channels < 1) {
        fail("dimensions must be positive");
    }
    if (embed_dim % num_heads != 0) {
        fail("embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " +
             std::to_string(num_heads));
    }
    if (image_size < 1 || patch_size < 1 || image_size % patch_size != 0) {
        fail("patch_size " + std::to_string(patch_size) + " must divide image_size " +
             std::to_string(image_size));
    }
}

SwitchSet SwitchSet::ones(const ModelConfig & cfg) {
    SwitchSet sw;
    sw.c.assign(static_cast<size_t>(cfg.gelu_switch_count()), 1.0);
    sw.s.assign(static_cast<size_t>(cfg.softmax_switch_count()), 1.0);
    return sw;
}

ActiveCounts count_active(const SwitchSet & sw) {
    ActiveCounts out;
    for (double v : sw.c) {
        if (v > sw.epsilon) {
            ++out.gelu;
        }
    }
    for (double v : sw.s) {
        if (v > sw.epsilon) {
            ++out.softmax;
        }
    }
    return out;
}

void binarize(SwitchSet & sw, MaskSel which) {
    if ((which == MaskSel::c || which == MaskSel::both) && !sw.c_frozen) {
        for (double & v : sw.c) {
            v = v > sw.epsilon ? 1.0 : 0.0;
        }
        sw.c_frozen = true;
    }
    if ((which == MaskSel::s || which == MaskSel::both) && !sw.s_frozen) {
        for (double & v : sw.s) {
            v = v > sw.epsilon ? 1.0 : 0.0;
        }
        sw.s_frozen = true;
    }
}

ModelParams ModelParams::init(const ModelConfig & cfg, Rng & rng) {
    ModelParams p;
    const int d = cfg.embed_dim;
    auto gauss = [&rng](std::vector<double> & v, size_t n, double stddev) {
        v.resize(n);
        for (double & x : v) {
            x = rng.normal(0.0, stddev);
        }
    };
    p.layers.resize(static_cast<size_t>(cfg.num_layers));
    // draws happen in named_params order so a seed pins every weight
    gauss(p.patch_w, static_cast<size_t>(cfg.patch_dim()) * d, 0.02);
    gauss(p.cls_token, static_cast<size_t>(d), 0.02);
    gauss(p.pos_embed, static_cast<size_t>(cfg.num_tokens()) * d, 0.02);
    for (auto & layer : p.layers) {
        layer.ln1_g.assign(static_cast<size_t>(d), 1.0);
        layer.ln1_b.assign(static_cast<size_t>(d), 0.0);
        gauss(layer.wq, static_cast<size_t>(d) * d, 0.02);
        gauss(layer.wk, static_cast<size_t>(d) * d, 0.02);
        gauss(layer.wv, static_cast<size_t>(d) * d, 0.02);
        gauss(layer.wo, static_cast<size_t>(d) * d, 0.02);
        layer.ln2_g.assign(static_cast<size_t>(d), 1.0);
        layer.ln2_b.assign(static_cast<size_t>(d), 0.0);
        gauss(layer.w1, static_cast<size_t>(d) * cfg.mlp_dim, 0.02);
        gauss(layer.w2, static_cast<size_t>(cfg.mlp_dim) * d, 0.02);
    }
    p.ln_f_g.assign(static_cast<size_t>(d), 1.0);
    p.ln_f_b.assign(static_cast<size_t>(d), 0.0);
    gauss(p.head_w, static_cast<size_t>(d) * cfg.num_classes, 0.02);
    return p;
}

std::vector<NamedArray> named_params(ModelParams & p) {
    std::vector<NamedArray> out;
    out.push_back({"patch_w", &p.patch_w});
    out.push_back({"cls_token", &p.cls_token});
    out.push_back({"pos_embed", &p.pos_embed});
    for (size_t i = 0; i < p.layers.size(); ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        auto & l = p.layers[i];
        out.push_back({pre + "ln1_g", &l.ln1_g});
        out.push_back({pre + "ln1_b", &l.ln1_b});
        out.push_back({pre + "wq", &l.wq});
        out.push_back({pre + "wk", &l.wk});
        out.push_back({pre + "wv", &l.wv});
        out.push_back({pre + "wo", &l.wo});
        out.push_back({pre + "ln2_g", &l.ln2_g});
        out.push_back({pre + "ln2_b", &l.ln2_b});
        out.push_back({pre + "w1", &l.w1});
        out.push_back({pre + "w2", &l.w2});
    }
    out.push_back({"ln_f_g", &p.ln_f_g});
    out.push_back({"ln_f_b", &p.ln_f_b});
    out.push_back({"head_w", &p.head_w});
    return out;
}

Model Model::create(const ModelConfig & cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Model m;
    m.cfg      = cfg;
    m.params   = ModelParams::init(cfg, rng);
    m.switches = SwitchSet::ones(cfg);
    return m;
}

Leaves make_leaves(ad::Graph & g, Model & m, bool train_weights, bool train_c, bool train_s) {
    Leaves lv;
    const ModelConfig & cfg = m.cfg;
    const int d = cfg.embed_dim;

    auto leaf = [&](std::vector<double> & data, std::vector<int> shape) {
        Tensor t = g.input(std::move(shape), data, train_weights);
        lv.weight_order.push_back(t);
        return t;
    };

    lv.patch_w   = leaf(m.params.patch_w, {cfg.patch_dim(), d});
    lv.cls_token = leaf(m.params.cls_token, {1, d});
    lv.pos_embed = leaf(m.params.pos_embed, {cfg.num_tokens(), d});
    lv.layers.resize(m.params.layers.size());
    for (size_t i = 0; i < m.params.layers.size(); ++i) {
        auto & src = m.params.layers[i];
        auto & dst = lv.layers[i];
        dst.ln1_g   = leaf(src.ln1_g, {d});
        dst.ln1_b   = leaf(src.ln1_b, {d});
        dst.attn.wq = leaf(src.wq, {d, d});
        dst.attn.wk = leaf(src.wk, {d, d});
        dst.attn.wv = leaf(src.wv, {d, d});
        dst.attn.wo = leaf(src.wo, {d, d});
        dst.ln2_g   = leaf(src.ln2_g, {d});
        dst.ln2_b   = leaf(src.ln2_b, {d});
        dst.w1      = leaf(src.w1, {d, cfg.mlp_dim});
        dst.w2      = leaf(src.w2, {cfg.mlp_dim, d});
    }
    lv.ln_f_g = leaf(m.params.ln_f_g, {d});
    lv.ln_f_b = leaf(m.params.ln_f_b, {d});
    lv.head_w = leaf(m.params.head_w, {d, cfg.num_classes});

    // frozen masks never carry gradients or penalties
    lv.c = g.input({static_cast<int>(m.switches.c.size())}, m.switches.c,
                   train_c && !m.switches.c_frozen);
    lv.s = g.input({static_cast<int>(m.switches.s.size())}, m.switches.s,
                   train_s && !m.switches.s_frozen);
    return lv;
}

std::vector<ad::Tensor *> leaf_slots(Leaves & lv) {
    std::vector<ad::Tensor *> out = {&lv.patch_w, &lv.cls_token, &lv.pos_embed};
    for (auto & l : lv.layers) {
        out.push_back(&l.ln1_g);
        out.push_back(&l.ln1_b);
        out.push_back(&l.attn.wq);
        out.push_back(&l.attn.wk);
        out.push_back(&l.attn.wv);
        out.push_back(&l.attn.wo);
        out.push_back(&l.ln2_g);
        out.push_back(&l.ln2_b);
        out.push_back(&l.w1);
        out.push_back(&l.w2);
    }
    out.push_back(&lv.ln_f_g);
    out.push_back(&lv.ln_f_b);
    out.push_back(&lv.head_w);
    return out;
}

ad::Tensor switched_gelu(Tensor x, Tensor c_gate, GeluGranularity granularity) {
    const int n = x.rows();
    const int m = x.cols();
    Tensor gate;
    if (granularity == GeluGranularity::per_token) {
        if (c_gate.numel() != n) {
            throw std::invalid_argument("switched_gelu: expected one switch per token");
        }
        gate = ad::repeat_cols(c_gate, m);
    } else {
        if (c_gate.numel() != n * m) {
            throw std::invalid_argument("switched_gelu: expected one switch per element");
        }
        gate = ad::reshape(c_gate, {n, m});
    }
    return ad::add(ad::mul(gate, ad::gelu(x)), ad::mul(ad::affine(gate, -1.0, 1.0), x));
}

namespace {

enum class AttnMode { pure_taylor, switched };

// Builds the full attention block. For each head the [N x N] weight matrix is
// either the Taylor variant alone or a per-row blend of softmax and Taylor.
Tensor attention_block(Tensor x, const AttnLeaves & w, int num_heads, AttnVariant variant,
                       AttnMode mode, Tensor s_slice) {
    const int n  = x.rows();
    const int d  = x.cols();
    const int dh = d / num_heads;

    Tensor q = ad::matmul(x, w.wq);
    Tensor k = ad::matmul(x, w.wk);
    Tensor v = ad::matmul(x, w.wv);

    std::vector<Tensor> head_out;
    head_out.reserve(static_cast<size_t>(num_heads));
    for (int h = 0; h < num_heads; ++h) {
        Tensor qh = ad::cols(q, h * dh, (h + 1) * dh);
        Tensor kh = ad::cols(k, h * dh, (h + 1) * dh);
        Tensor vh = ad::cols(v, h * dh, (h + 1) * dh);

        Tensor raw = ad::matmul(qh, ad::transpose(kh));  // [n x n]

        Tensor taylor;
        switch (variant) {
            case AttnVariant::squared:
                taylor = ad::affine(ad::square(raw), 1.0 / n, 0.0);
                break;
            case AttnVariant::scale:
                taylor = ad::affine(raw, 1.0 / n, 0.0);
                break;
            case AttnVariant::uniform:
                taylor = x.node->graph->constant(
                    {n, n}, std::vector<double>(static_cast<size_t>(n) * n, 1.0 / n));
                break;
        }

        Tensor weights;
        if (mode == AttnMode::pure_taylor) {
            weights = taylor;
        } else {
            Tensor soft = ad::softmax_rows(ad::affine(raw, 1.0 / std::sqrt(static_cast<double>(dh)), 0.0));
            Tensor sh   = ad::slice(s_slice, h * n, n);
            Tensor sm   = ad::repeat_cols(sh, n);
            weights     = ad::add(ad::mul(sm, soft), ad::mul(ad::affine(sm, -1.0, 1.0), taylor));
        }
        head_out.push_back(ad::matmul(weights, vh));
    }
    Tensor merged = num_heads == 1 ? head_out[0] : ad::concat_cols(head_out);
    return ad::matmul(merged, w.wo);
}

}  // namespace

Tensor squared_attention(Tensor x, const AttnLeaves & w, int num_heads) {
    return attention_block(x, w, num_heads, AttnVariant::squared, AttnMode::pure_taylor, {});
}

Tensor scale_attention(Tensor x, const AttnLeaves & w, int num_heads) {
    return attention_block(x, w, num_heads, AttnVariant::scale, AttnMode::pure_taylor, {});
}

Tensor uniform_attention(Tensor x, const AttnLeaves & w, int num_heads) {
    return attention_block(x, w, num_heads, AttnVariant::uniform, AttnMode::pure_taylor, {});
}

Tensor switched_attention(Tensor x, Tensor s_slice, const AttnLeaves & w, int num_heads,
                          AttnVariant variant) {
    if (s_slice.numel() != num_heads * x.rows()) {
        throw std::invalid_argument("switched_attention: expected one switch per head per row");
    }
    return attention_block(x, w, num_heads, variant, AttnMode::switched, s_slice);
}

std::vector<double> patchify(const ModelConfig & cfg, const double * image) {
    const int side = cfg.image_size / cfg.patch_size;
    const int ps   = cfg.patch_size;
    const int ch   = cfg.channels;
    std::vector<double> out(static_cast<size_t>(cfg.num_patches()) * cfg.patch_dim());
    size_t at = 0;
    for (int py = 0; py < side; ++py) {
        for (int px = 0; px < side; ++px) {
            for (int y = 0; y < ps; ++y) {
                for (int x = 0; x < ps; ++x) {
                    for (int c = 0; c < ch; ++c) {
                        const int iy = py * ps + y;
                        const int ix = px * ps + x;
                        out[at++] = image[(static_cast<size_t>(iy) * cfg.image_size + ix) * ch + c];
                    }
                }
            }
        }
    }
    return out;
}

Tensor forward_logits(ad::Graph & g, const ModelConfig & cfg, const Leaves & lv,
                      const std::vector<double> & images, int batch) {
    const size_t image_len = static_cast<size_t>(cfg.image_size) * cfg.image_size * cfg.channels;
    if (images.size() != image_len * static_cast<size_t>(batch)) {
        throw std::invalid_argument("forward_logits: image buffer size does not match batch");
    }
    const int per_layer_c = cfg.gelu_switch_count() / cfg.num_layers;
    const int per_layer_s = cfg.softmax_switch_count() / cfg.num_layers;

    std::vector<Tensor> logit_rows;
    logit_rows.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        Tensor patches = g.constant({cfg.num_patches(), cfg.patch_dim()},
                                    patchify(cfg, images.data() + image_len * static_cast<size_t>(b)));
        Tensor embedded = ad::matmul(patches, lv.patch_w);
        Tensor x = ad::add(ad::concat_rows({lv.cls_token, embedded}), lv.pos_embed);

        for (int li = 0; li < cfg.num_layers; ++li) {
            const LayerLeaves & lw = lv.layers[static_cast<size_t>(li)];
            Tensor h1 = ad::layernorm_rows(x, lw.ln1_g, lw.ln1_b, k_layernorm_eps);
            Tensor s_slice = ad::slice(lv.s, li * per_layer_s, per_layer_s);
            x = ad::add(x, switched_attention(h1, s_slice, lw.attn, cfg.num_heads,
                                              cfg.taylor_variant));

            Tensor h2 = ad::layernorm_rows(x, lw.ln2_g, lw.ln2_b, k_layernorm_eps);
            Tensor c_slice = ad::slice(lv.c, li * per_layer_c, per_layer_c);
            Tensor act = switched_gelu(ad::matmul(h2, lw.w1), c_slice, cfg.gelu_granularity);
            x = ad::add(x, ad::matmul(act, lw.w2));
        }

        Tensor xf = ad::layernorm_rows(x, lv.ln_f_g, lv.ln_f_b, k_layernorm_eps);
        logit_rows.push_back(ad::matmul(ad::rows(xf, 0, 1), lv.head_w));
    }
    return batch == 1 ? logit_rows[0] : ad::concat_rows(logit_rows);
}

std::vector<double> eval_logits(Model & m, const std::vector<double> & images, int batch) {
    ad::Graph g;
    Leaves    lv     = make_leaves(g, m, false, false, false);
    Tensor    logits = forward_logits(g, m.cfg, lv, images, batch);
    return logits.value();
}

}  // namespace privit::vit
