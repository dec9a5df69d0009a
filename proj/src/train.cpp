#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace privit::train {

using ad::Graph;
using ad::Tensor;
using vit::Model;

void Adam::step(const std::string & name, std::vector<double> & value,
                const std::vector<double> & grad, double lr, double weight_decay) {
    if (value.size() != grad.size()) {
        throw std::invalid_argument("Adam::step: value/grad size mismatch for " + name);
    }
    Slot & slot = slots_[name];
    if (slot.m.empty()) {
        slot.m.assign(value.size(), 0.0);
        slot.v.assign(value.size(), 0.0);
    }
    slot.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.t));
    for (size_t i = 0; i < value.size(); ++i) {
        if (weight_decay != 0.0) {
            value[i] -= lr * weight_decay * value[i];
        }
        slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * grad[i];
        slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * grad[i] * grad[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        value[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
}

double cosine_lr(double lr0, int epoch, int total) {
    if (total <= 0) {
        return lr0;
    }
    return lr0 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * epoch / total));
}

void SearchConfig::validate() const {
    if (kappa <= 1.0) {
        throw std::invalid_argument("search config: kappa must be > 1");
    }
    if (gelu_budget < 0 || softmax_budget < 0) {
        throw std::invalid_argument("search config: budgets must be >= 0");
    }
    if (kd_temperature <= 0.0) {
        throw std::invalid_argument("search config: kd_temperature must be > 0");
    }
    if (strategy < 1 || strategy > 5) {
        throw std::invalid_argument("search config: strategy must be in 1..5");
    }
    if (batch_size < 1 || max_epochs < 0 || finetune_epochs < 0 || warmup_epochs < 0) {
        throw std::invalid_argument("search config: bad epoch/batch settings");
    }
}

SearchConfig apply_strategy(SearchConfig cfg, int strategy) {
    if (strategy < 1 || strategy > 5) {
        throw std::invalid_argument("apply_strategy: strategy must be in 1..5");
    }
    cfg.strategy      = strategy;
    cfg.lambda_s_init = cfg.lambda_g_init;
    switch (strategy) {
        case 1:
            cfg.finetune_epochs       = 10;
            cfg.early_binarize        = false;
            cfg.increment_on_increase = false;
            break;
        case 2:
            cfg.finetune_epochs       = 10;
            cfg.early_binarize        = false;
            cfg.increment_on_increase = true;
            break;
        case 3:
            cfg.finetune_epochs       = 10;
            cfg.early_binarize        = false;
            cfg.increment_on_increase = true;
            cfg.lambda_s_init         = 20.0 * cfg.lambda_g_init;
            break;
        case 4:
            cfg.finetune_epochs       = 10;
            cfg.early_binarize        = true;
            cfg.increment_on_increase = true;
            break;
        case 5:
            cfg.finetune_epochs       = 50;
            cfg.early_binarize        = true;
            cfg.increment_on_increase = false;
            break;
    }
    return cfg;
}

void schedule_penalties(SearchState & st, int gelu_count, int softmax_count,
                        const SearchConfig & cfg) {
    bool bump_g, bump_s;
    if (cfg.increment_on_increase) {
        bump_g = st.prev_gelu_count >= 0 && gelu_count > st.prev_gelu_count;
        bump_s = st.prev_softmax_count >= 0 && softmax_count > st.prev_softmax_count;
    } else {
        bump_g = (st.lowest_gelu_count - gelu_count) < cfg.gelu_improve_min;
        bump_s = (st.lowest_softmax_count - softmax_count) < cfg.softmax_improve_min;
    }
    if (bump_g && !st.c_budget_met) {
        st.lambda_g *= cfg.kappa;
    }
    if (bump_s && !st.s_budget_met) {
        st.lambda_s *= cfg.kappa;
    }
    st.lowest_gelu_count    = std::min(st.lowest_gelu_count, gelu_count);
    st.lowest_softmax_count = std::min(st.lowest_softmax_count, softmax_count);
    st.prev_gelu_count      = gelu_count;
    st.prev_softmax_count   = softmax_count;
}

LossParts privit_loss(Tensor logits, const std::vector<int> & labels, Tensor c_mask,
                      Tensor s_mask, double lambda_g, double lambda_s) {
    LossParts parts;
    parts.ce    = ad::cross_entropy(logits, labels);
    parts.total = parts.ce;
    if (c_mask.defined() && lambda_g != 0.0) {
        parts.total = ad::add(parts.total, ad::affine(ad::abs_sum(c_mask), lambda_g, 0.0));
    }
    if (s_mask.defined() && lambda_s != 0.0) {
        parts.total = ad::add(parts.total, ad::affine(ad::abs_sum(s_mask), lambda_s, 0.0));
    }
    return parts;
}

namespace {

struct BatchLoss {
    double total = 0.0;
    double ce    = 0.0;
    double kd    = 0.0;
};

// One optimizer pass over the whole split in shuffled order.
BatchLoss run_epoch(Model & model, Model * teacher, const data::DatasetSplit & split, Adam & opt,
                    bool train_c, bool train_s, double lambda_g, double lambda_s, bool use_kd,
                    double kd_temperature, double weight_lr, double switch_lr, double weight_decay,
                    int batch_size, Rng & rng) {
    std::vector<int> order(static_cast<size_t>(split.count()));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    const size_t img_len = split.image_len();
    BatchLoss    sums;
    int          batches = 0;
    for (int start = 0; start < split.count(); start += batch_size) {
        const int bsz = std::min(batch_size, split.count() - start);
        std::vector<double> images(img_len * static_cast<size_t>(bsz));
        std::vector<int>    labels(static_cast<size_t>(bsz));
        for (int i = 0; i < bsz; ++i) {
            const int src = order[static_cast<size_t>(start + i)];
            std::copy_n(split.image(src), img_len, images.begin() + img_len * static_cast<size_t>(i));
            labels[static_cast<size_t>(i)] = split.labels[static_cast<size_t>(src)];
        }

        Graph  g;
        vit::Leaves lv = vit::make_leaves(g, model, true, train_c, train_s);
        Tensor logits  = vit::forward_logits(g, model.cfg, lv, images, bsz);
        // frozen or dropped masks carry no penalty
        const double lam_g = lv.c.node->requires_grad ? lambda_g : 0.0;
        const double lam_s = lv.s.node->requires_grad ? lambda_s : 0.0;
        LossParts parts = privit_loss(logits, labels, lv.c, lv.s, lam_g, lam_s);
        Tensor ce       = parts.ce;
        Tensor total    = parts.total;
        double kd_value = 0.0;
        if (use_kd && teacher) {
            const std::vector<double> t_logits = vit::eval_logits(*teacher, images, bsz);
            Tensor kd = ad::kd_div(logits, t_logits, kd_temperature);
            kd_value  = kd.scalar();
            total     = ad::add(total, kd);
        }
        g.backward(total);

        const auto named = vit::named_params(model.params);
        for (size_t i = 0; i < named.size(); ++i) {
            opt.step(named[i].name, *named[i].data, lv.weight_order[i].grad(), weight_lr,
                     weight_decay);
        }
        if (lv.c.node->requires_grad) {
            opt.step("mask.c", model.switches.c, lv.c.grad(), switch_lr);
        }
        if (lv.s.node->requires_grad) {
            opt.step("mask.s", model.switches.s, lv.s.grad(), switch_lr);
        }

        sums.total += total.scalar();
        sums.ce += ce.scalar();
        sums.kd += kd_value;
        ++batches;
    }
    if (batches > 0) {
        sums.total /= batches;
        sums.ce /= batches;
        sums.kd /= batches;
    }
    return sums;
}

}  // namespace

SearchResult privit_search(Model & model, Model * teacher, const data::DatasetSplit & train_data,
                           const SearchConfig & cfg, Rng & rng) {
    cfg.validate();
    model.switches.epsilon = cfg.epsilon;

    SearchResult res;
    SearchState & st = res.state;
    st.lambda_g = cfg.lambda_g_init;
    st.lambda_s = cfg.lambda_s_init;
    {
        const vit::ActiveCounts counts = vit::count_active(model.switches);
        st.lowest_gelu_count    = counts.gelu;
        st.lowest_softmax_count = counts.softmax;
    }
    // late-binarization strategies stop training a mask at budget but keep
    // it real-valued until the loop exits
    bool c_dropped = model.switches.c_frozen;
    bool s_dropped = model.switches.s_frozen;
    st.c_budget_met = model.switches.c_frozen;
    st.s_budget_met = model.switches.s_frozen;

    Adam opt;
    while (!(st.c_budget_met && st.s_budget_met)) {
        if (st.epoch >= cfg.max_epochs) {
            res.converged = false;
            return res;
        }
        const BatchLoss loss =
            run_epoch(model, teacher, train_data, opt, !c_dropped, !s_dropped, st.lambda_g,
                      st.lambda_s, cfg.kd_enabled, cfg.kd_temperature, cfg.weight_lr,
                      cfg.switch_lr, 0.0, cfg.batch_size, rng);
        const vit::ActiveCounts counts = vit::count_active(model.switches);

        const bool in_warmup = st.epoch < cfg.warmup_epochs;
        if (!in_warmup) {
            schedule_penalties(st, counts.gelu, counts.softmax, cfg);
            if (counts.gelu <= cfg.gelu_budget && !st.c_budget_met) {
                if (cfg.early_binarize) {
                    vit::binarize(model.switches, vit::MaskSel::c);
                }
                c_dropped       = true;
                st.c_budget_met = true;
            }
            if (counts.softmax <= cfg.softmax_budget && !st.s_budget_met) {
                if (cfg.early_binarize) {
                    vit::binarize(model.switches, vit::MaskSel::s);
                }
                s_dropped       = true;
                st.s_budget_met = true;
            }
        } else {
            // warmup: no scheduling or binarization, but counts still seed
            // the lowest counts
            st.lowest_gelu_count    = std::min(st.lowest_gelu_count, counts.gelu);
            st.lowest_softmax_count = std::min(st.lowest_softmax_count, counts.softmax);
            st.prev_gelu_count      = counts.gelu;
            st.prev_softmax_count   = counts.softmax;
        }

        EpochStats row;
        row.epoch         = st.epoch;
        row.train_loss    = loss.total;
        row.ce_loss       = loss.ce;
        row.kd_loss       = loss.kd;
        row.gelu_count    = counts.gelu;
        row.softmax_count = counts.softmax;
        row.lambda_g      = st.lambda_g;
        row.lambda_s      = st.lambda_s;
        row.c_frozen      = model.switches.c_frozen;
        row.s_frozen      = model.switches.s_frozen;
        res.history.push_back(row);
        ++st.epoch;
    }
    // late binarization happens once the loop has satisfied both budgets
    vit::binarize(model.switches, vit::MaskSel::both);
    res.converged = true;
    return res;
}

std::vector<EpochStats> finetune(Model & model, Model * teacher,
                                 const data::DatasetSplit & train_data, const SearchConfig & cfg,
                                 Rng & rng) {
    if (!model.switches.c_frozen || !model.switches.s_frozen) {
        throw std::logic_error("finetune: both switch masks must be frozen");
    }
    for (const auto & mask : {model.switches.c, model.switches.s}) {
        for (double v : mask) {
            if (v != 0.0 && v != 1.0) {
                throw std::logic_error("finetune: frozen masks must be exactly binary");
            }
        }
    }
    Adam opt;
    std::vector<EpochStats> history;
    for (int epoch = 0; epoch < cfg.finetune_epochs; ++epoch) {
        const double lr = cosine_lr(cfg.finetune_lr, epoch, cfg.finetune_epochs);
        const BatchLoss loss =
            run_epoch(model, teacher, train_data, opt, false, false, 0.0, 0.0, cfg.kd_enabled,
                      cfg.kd_temperature, lr, 0.0, cfg.weight_decay, cfg.batch_size, rng);
        EpochStats row;
        row.epoch      = epoch;
        row.train_loss = loss.total;
        row.ce_loss    = loss.ce;
        row.kd_loss    = loss.kd;
        const vit::ActiveCounts counts = vit::count_active(model.switches);
        row.gelu_count    = counts.gelu;
        row.softmax_count = counts.softmax;
        row.c_frozen      = true;
        row.s_frozen      = true;
        history.push_back(row);
    }
    return history;
}

void layerwise_taylorize_baseline(Model & model, int k) {
    const int layers = model.cfg.num_layers;
    if (k < 0 || k > layers) {
        throw std::out_of_range("layerwise_taylorize_baseline: k=" + std::to_string(k) +
                                " outside [0," + std::to_string(layers) + "]");
    }
    if (model.switches.c_frozen || model.switches.s_frozen) {
        throw std::logic_error("layerwise_taylorize_baseline: masks already frozen");
    }
    const int per_layer = model.cfg.gelu_switch_count() / layers;
    std::fill(model.switches.c.begin(), model.switches.c.end(), 1.0);
    std::fill(model.switches.s.begin(), model.switches.s.end(), 1.0);
    for (int li = layers - k; li < layers; ++li) {
        std::fill_n(model.switches.c.begin() + static_cast<size_t>(li) * per_layer, per_layer, 0.0);
    }
    vit::binarize(model.switches, vit::MaskSel::both);
}

PretrainResult pretrain(Model & model, const data::DatasetSplit & train_data,
                        const PretrainConfig & cfg, Rng & rng) {
    Adam opt;
    PretrainResult res;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const BatchLoss loss = run_epoch(model, nullptr, train_data, opt, false, false, 0.0, 0.0,
                                         false, 1.0, cfg.lr, 0.0, 0.0, cfg.batch_size, rng);
        res.epochs_run = epoch + 1;
        EpochStats row;
        row.epoch      = epoch;
        row.train_loss = loss.total;
        row.ce_loss    = loss.ce;
        res.history.push_back(row);
        res.final_train_accuracy = accuracy(model, train_data);
        res.accuracy_history.push_back(res.final_train_accuracy);
        if (res.final_train_accuracy >= cfg.target_accuracy) {
            break;
        }
    }
    return res;
}

double accuracy(Model & m, const data::DatasetSplit & split, int batch) {
    int hits = 0;
    const size_t img_len = split.image_len();
    for (int start = 0; start < split.count(); start += batch) {
        const int bsz = std::min(batch, split.count() - start);
        std::vector<double> images(img_len * static_cast<size_t>(bsz));
        for (int i = 0; i < bsz; ++i) {
            std::copy_n(split.image(start + i), img_len,
                        images.begin() + img_len * static_cast<size_t>(i));
        }
        const std::vector<double> logits = vit::eval_logits(m, images, bsz);
        const int c = m.cfg.num_classes;
        for (int i = 0; i < bsz; ++i) {
            const double * row = logits.data() + static_cast<size_t>(i) * c;
            int best = 0;
            for (int j = 1; j < c; ++j) {
                if (row[j] > row[best]) {
                    best = j;
                }
            }
            if (best == split.labels[static_cast<size_t>(start + i)]) {
                ++hits;
            }
        }
    }
    return split.count() ? static_cast<double>(hits) / split.count() : 0.0;
}

std::vector<double> per_class_accuracy(Model & m, const data::DatasetSplit & split, int batch) {
    std::vector<int> hits(static_cast<size_t>(split.num_classes), 0);
    std::vector<int> totals(static_cast<size_t>(split.num_classes), 0);
    const size_t img_len = split.image_len();
    for (int start = 0; start < split.count(); start += batch) {
        const int bsz = std::min(batch, split.count() - start);
        std::vector<double> images(img_len * static_cast<size_t>(bsz));
        for (int i = 0; i < bsz; ++i) {
            std::copy_n(split.image(start + i), img_len,
                        images.begin() + img_len * static_cast<size_t>(i));
        }
        const std::vector<double> logits = vit::eval_logits(m, images, bsz);
        const int c = m.cfg.num_classes;
        for (int i = 0; i < bsz; ++i) {
            const double * row = logits.data() + static_cast<size_t>(i) * c;
            int best = 0;
            for (int j = 1; j < c; ++j) {
                if (row[j] > row[best]) {
                    best = j;
                }
            }
            const int label = split.labels[static_cast<size_t>(start + i)];
            ++totals[static_cast<size_t>(label)];
            if (best == label) {
                ++hits[static_cast<size_t>(label)];
            }
        }
    }
    std::vector<double> out(static_cast<size_t>(split.num_classes), 0.0);
    for (int cls = 0; cls < split.num_classes; ++cls) {
        if (totals[static_cast<size_t>(cls)] > 0) {
            out[static_cast<size_t>(cls)] =
                static_cast<double>(hits[static_cast<size_t>(cls)]) / totals[static_cast<size_t>(cls)];
        }
    }
    return out;
}

DegradationStats degradation_stats(const std::vector<double> & per_class_a,
                                   const std::vector<double> & per_class_b) {
    if (per_class_a.size() != per_class_b.size()) {
        throw std::invalid_argument("degradation_stats: length mismatch, " +
                                    std::to_string(per_class_a.size()) + " vs " +
                                    std::to_string(per_class_b.size()));
    }
    if (per_class_a.empty()) {
        throw std::invalid_argument("degradation_stats: empty input");
    }
    DegradationStats out;
    const size_t n = per_class_a.size();
    std::vector<double> diff(n);
    for (size_t i = 0; i < n; ++i) {
        diff[i] = per_class_a[i] - per_class_b[i];
    }
    out.max_diff  = *std::max_element(diff.begin(), diff.end());
    out.mean_diff = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double d : diff) {
        var += (d - out.mean_diff) * (d - out.mean_diff);
    }
    out.variance = var / static_cast<double>(n);
    return out;
}

}  // namespace privit::train
