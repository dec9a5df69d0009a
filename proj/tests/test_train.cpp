#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "train.hpp"

using namespace privit;
using namespace privit::train;
using ad::Graph;
using ad::Tensor;
using vit::Model;
using vit::ModelConfig;

namespace {

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.num_layers  = 1;
    cfg.embed_dim   = 8;
    cfg.mlp_dim     = 16;
    cfg.num_heads   = 2;
    cfg.image_size  = 8;
    cfg.patch_size  = 4;
    cfg.num_classes = 2;
    return cfg;
}

data::DatasetSplit micro_data(uint64_t seed = 51) {
    return data::gen_synthetic(2, 16, 8, seed);
}

}  // namespace

TEST_CASE("adam first step and zero-gradient behaviour") {
    Adam opt;
    std::vector<double> theta = {1.0};

    // zero gradient, zero moments: parameter untouched
    opt.step("w", theta, {0.0}, 0.1);
    CHECK(theta[0] == 1.0);

    // constant unit gradient: first update is ~lr (bias-corrected m=v=1)
    Adam opt2;
    std::vector<double> theta2 = {1.0};
    opt2.step("w", theta2, {1.0}, 0.1);
    CHECK(theta2[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-7));

    // decoupled decay with zero gradient: theta <- 0.99 theta
    Adam opt3;
    std::vector<double> theta3 = {1.0};
    opt3.step("w", theta3, {0.0}, 0.1, 0.1);  // lr*wd = 0.01
    CHECK(theta3[0] == doctest::Approx(0.99).epsilon(1e-12));
}

TEST_CASE("cosine annealing") {
    CHECK(cosine_lr(0.4, 0, 10) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(cosine_lr(0.4, 5, 10) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(cosine_lr(0.4, 10, 10) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("privit loss arithmetic") {
    Graph g;
    Tensor logits = g.input({1, 2}, {0.0, 0.0}, true);
    Tensor c = g.input({2}, {1.0, 1.0}, true);
    Tensor s = g.input({1}, {1.0}, true);

    // zero penalties: the total IS the cross-entropy node
    LossParts plain = privit_loss(logits, {0}, c, s, 0.0, 0.0);
    CHECK(plain.total.node == plain.ce.node);

    // ce + 0.1*2 + 0.1*1
    LossParts pen = privit_loss(logits, {0}, c, s, 0.1, 0.1);
    CHECK(pen.total.scalar() ==
          doctest::Approx(std::log(2.0) + 0.3).epsilon(1e-12));

    // the penalty adds exactly lambda*sign(c) to a switch gradient
    Graph g2;
    Tensor logits2 = g2.input({1, 2}, {0.3, -0.2}, false);
    Tensor c2 = g2.input({3}, {0.5, -0.25, 0.75}, true);
    Tensor s2 = g2.input({1}, {1.0}, false);
    LossParts lp = privit_loss(logits2, {0}, c2, s2, 0.07, 0.0);
    g2.backward(lp.total);
    CHECK(c2.grad()[0] == doctest::Approx(0.07).epsilon(1e-12));
    CHECK(c2.grad()[1] == doctest::Approx(-0.07).epsilon(1e-12));
    CHECK(c2.grad()[2] == doctest::Approx(0.07).epsilon(1e-12));
}

TEST_CASE("schedule_penalties follows the homotopy rules") {
    SearchConfig cfg;
    cfg.gelu_improve_min    = 2;
    cfg.softmax_improve_min = 200;
    cfg.kappa               = 1.1;

    SearchState st;
    st.lambda_g             = 1.0;
    st.lambda_s             = 1.0;
    st.lowest_gelu_count    = 100;
    st.lowest_softmax_count = 1000;

    // improvement of exactly 1 (< 2): bump lambda_g
    schedule_penalties(st, 99, 500, cfg);
    CHECK(st.lambda_g == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(st.lowest_gelu_count == 99);
    // softmax improved by 500 >= 200: lambda_s held
    CHECK(st.lambda_s == 1.0);
    CHECK(st.lowest_softmax_count == 500);

    // improvement of 9 >= 2: lambda_g held, lowest updated
    SearchState st2;
    st2.lambda_g          = 1.0;
    st2.lambda_s          = 1.0;
    st2.lowest_gelu_count = 100;
    st2.lowest_softmax_count = 0;
    schedule_penalties(st2, 90, 0, cfg);
    CHECK(st2.lambda_g == 1.0);
    CHECK(st2.lowest_gelu_count == 90);

    // a met softmax budget freezes lambda_s forever
    SearchState st3;
    st3.lambda_g             = 1.0;
    st3.lambda_s             = 1.0;
    st3.s_budget_met         = true;
    st3.lowest_gelu_count    = 10;
    st3.lowest_softmax_count = 10;
    schedule_penalties(st3, 10, 10, cfg);
    CHECK(st3.lambda_s == 1.0);
    CHECK(st3.lambda_g == doctest::Approx(1.1).epsilon(1e-12));

    // symmetric guard: a met gelu budget freezes lambda_g
    SearchState st4 = st3;
    st4.s_budget_met = false;
    st4.c_budget_met = true;
    st4.lambda_g = st4.lambda_s = 1.0;
    schedule_penalties(st4, 10, 10, cfg);
    CHECK(st4.lambda_g == 1.0);
    CHECK(st4.lambda_s == doctest::Approx(1.1).epsilon(1e-12));

    // increment-on-increase variant bumps only when the count rises
    SearchConfig inc = cfg;
    inc.increment_on_increase = true;
    SearchState st5;
    st5.lambda_g = st5.lambda_s = 1.0;
    st5.lowest_gelu_count = st5.lowest_softmax_count = 100;
    st5.prev_gelu_count = 50;
    st5.prev_softmax_count = 50;
    schedule_penalties(st5, 60, 40, inc);
    CHECK(st5.lambda_g == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(st5.lambda_s == 1.0);
}

TEST_CASE("apply_strategy knob table") {
    SearchConfig base;
    base.lambda_g_init = 3e-5;
    base.lambda_s_init = 3e-5;

    SearchConfig s5 = apply_strategy(base, 5);
    CHECK(s5.finetune_epochs == 50);
    CHECK(s5.early_binarize);
    CHECK_FALSE(s5.increment_on_increase);
    CHECK(s5.lambda_s_init == s5.lambda_g_init);

    SearchConfig s3 = apply_strategy(base, 3);
    CHECK(s3.lambda_s_init == doctest::Approx(20.0 * s3.lambda_g_init).epsilon(1e-12));
    CHECK_FALSE(s3.early_binarize);
    CHECK(s3.increment_on_increase);
    CHECK(s3.finetune_epochs == 10);

    SearchConfig s1 = apply_strategy(base, 1);
    CHECK(s1.finetune_epochs == 10);
    CHECK_FALSE(s1.early_binarize);
    CHECK_FALSE(s1.increment_on_increase);

    CHECK_THROWS_AS(apply_strategy(base, 0), std::invalid_argument);
    CHECK_THROWS_AS(apply_strategy(base, 6), std::invalid_argument);
}

TEST_CASE("search with budgets at totals terminates right after warmup") {
    ModelConfig cfg = micro_config();
    Model model = Model::create(cfg, 9);
    data::DatasetSplit ds = micro_data();

    SearchConfig sc;
    sc.gelu_budget    = cfg.gelu_switch_count();
    sc.softmax_budget = cfg.softmax_switch_count();
    sc.kd_enabled     = false;
    sc.warmup_epochs  = 5;
    sc.max_epochs     = 50;
    Rng rng(1);
    SearchResult res = privit_search(model, nullptr, ds, sc, rng);

    CHECK(res.converged);
    CHECK(res.state.epoch == sc.warmup_epochs + 1);
    CHECK(model.switches.c_frozen);
    CHECK(model.switches.s_frozen);
    for (double v : model.switches.c) {
        CHECK(v == 1.0);
    }
    for (double v : model.switches.s) {
        CHECK(v == 1.0);
    }
    CHECK(static_cast<int>(res.history.size()) == res.state.epoch);
}

TEST_CASE("search postconditions at a tight budget") {
    ModelConfig cfg = micro_config();
    Model model = Model::create(cfg, 9);
    data::DatasetSplit ds = micro_data();

    SearchConfig sc;
    sc.gelu_budget    = cfg.gelu_switch_count() / 4;
    sc.softmax_budget = cfg.softmax_switch_count() / 4;
    sc.kd_enabled     = false;
    sc.max_epochs     = 200;
    sc.kappa          = 1.2;
    sc.switch_lr      = 0.03;
    Rng rng(2);
    SearchResult res = privit_search(model, nullptr, ds, sc, rng);

    REQUIRE(res.converged);
    const vit::ActiveCounts counts = vit::count_active(model.switches);
    CHECK(counts.gelu <= sc.gelu_budget);
    CHECK(counts.softmax <= sc.softmax_budget);
    CHECK(model.switches.c_frozen);
    CHECK(model.switches.s_frozen);
    for (double v : model.switches.c) {
        CHECK((v == 0.0 || v == 1.0));
    }
    for (double v : model.switches.s) {
        CHECK((v == 0.0 || v == 1.0));
    }

    // lambda stays non-decreasing, every bump exactly kappa, final value a
    // power of kappa; lowest counts never increase
    double lam_g = sc.lambda_g_init, lam_s = sc.lambda_s_init;
    int low_g = cfg.gelu_switch_count(), low_s = cfg.softmax_switch_count();
    int seen_g = low_g, seen_s = low_s;
    for (const EpochStats & row : res.history) {
        CHECK(row.lambda_g >= lam_g);
        if (row.lambda_g > lam_g) {
            CHECK(row.lambda_g == doctest::Approx(lam_g * sc.kappa).epsilon(1e-12));
        }
        lam_g = row.lambda_g;
        CHECK(row.lambda_s >= lam_s);
        if (row.lambda_s > lam_s) {
            CHECK(row.lambda_s == doctest::Approx(lam_s * sc.kappa).epsilon(1e-12));
        }
        lam_s = row.lambda_s;
        seen_g = std::min(seen_g, row.gelu_count);
        seen_s = std::min(seen_s, row.softmax_count);
        CHECK(seen_g <= low_g);
        CHECK(seen_s <= low_s);
        low_g = seen_g;
        low_s = seen_s;
    }
    const double ratio_g = res.state.lambda_g / sc.lambda_g_init;
    const double k_power = std::log(ratio_g) / std::log(sc.kappa);
    CHECK(std::fabs(k_power - std::round(k_power)) < 1e-9);
}

TEST_CASE("search degenerates to a plain trainer when penalties vanish") {
    ModelConfig cfg = micro_config();
    data::DatasetSplit ds = micro_data();

    SearchConfig sc;
    sc.lambda_g_init  = 0.0;
    sc.lambda_s_init  = 0.0;
    sc.kappa          = 1.1;
    sc.gelu_budget    = cfg.gelu_switch_count();
    sc.softmax_budget = cfg.softmax_switch_count();
    sc.kd_enabled     = false;
    sc.warmup_epochs  = 5;
    sc.max_epochs     = 20;

    Model model = Model::create(cfg, 33);
    Rng rng(4);
    SearchResult res = privit_search(model, nullptr, ds, sc, rng);
    REQUIRE(res.converged);

    // reference: a bare epoch loop over the same trainables (weights and
    // both masks), cross-entropy only, same shuffles, no search machinery
    Model ref = Model::create(cfg, 33);
    Rng ref_rng(4);
    Adam opt;
    std::vector<double> ref_losses;
    for (int epoch = 0; epoch < res.state.epoch; ++epoch) {
        std::vector<int> order(static_cast<size_t>(ds.count()));
        std::iota(order.begin(), order.end(), 0);
        ref_rng.shuffle(order);
        double loss_sum = 0.0;
        int    batches  = 0;
        for (int start = 0; start < ds.count(); start += sc.batch_size) {
            const int bsz = std::min(sc.batch_size, ds.count() - start);
            std::vector<double> images(ds.image_len() * static_cast<size_t>(bsz));
            std::vector<int>    labels(static_cast<size_t>(bsz));
            for (int i = 0; i < bsz; ++i) {
                const int src = order[static_cast<size_t>(start + i)];
                std::copy_n(ds.image(src), ds.image_len(),
                            images.begin() + ds.image_len() * static_cast<size_t>(i));
                labels[static_cast<size_t>(i)] = ds.labels[static_cast<size_t>(src)];
            }
            Graph g;
            vit::Leaves lv  = vit::make_leaves(g, ref, true, true, true);
            Tensor      ce  = ad::cross_entropy(vit::forward_logits(g, cfg, lv, images, bsz),
                                                labels);
            g.backward(ce);
            auto named = vit::named_params(ref.params);
            for (size_t i = 0; i < named.size(); ++i) {
                opt.step(named[i].name, *named[i].data, lv.weight_order[i].grad(), sc.weight_lr);
            }
            opt.step("mask.c", ref.switches.c, lv.c.grad(), sc.switch_lr);
            opt.step("mask.s", ref.switches.s, lv.s.grad(), sc.switch_lr);
            loss_sum += ce.scalar();
            ++batches;
        }
        ref_losses.push_back(loss_sum / batches);
    }
    REQUIRE(ref_losses.size() == res.history.size());
    for (size_t i = 0; i < ref_losses.size(); ++i) {
        CHECK(std::fabs(ref_losses[i] - res.history[i].train_loss) < 1e-9);
    }
}

TEST_CASE("non-convergence keeps the history") {
    ModelConfig cfg = micro_config();
    Model model = Model::create(cfg, 5);
    data::DatasetSplit ds = micro_data();

    SearchConfig sc;
    sc.gelu_budget    = 0;
    sc.softmax_budget = 0;
    sc.kd_enabled     = false;
    sc.max_epochs     = 3;
    sc.warmup_epochs  = 5;
    Rng rng(6);
    SearchResult res = privit_search(model, nullptr, ds, sc, rng);
    CHECK_FALSE(res.converged);
    CHECK(res.history.size() == 3);
    CHECK_FALSE(model.switches.c_frozen);
}

TEST_CASE("finetune contract") {
    ModelConfig cfg = micro_config();
    data::DatasetSplit ds = micro_data();
    SearchConfig sc;
    sc.kd_enabled      = false;
    sc.finetune_epochs = 2;

    // unfrozen masks are rejected
    Model loose = Model::create(cfg, 8);
    Rng rng(3);
    CHECK_THROWS_AS(finetune(loose, nullptr, ds, sc, rng), std::logic_error);

    // frozen but non-binary masks are rejected
    Model shady = Model::create(cfg, 8);
    shady.switches.c_frozen = true;
    shady.switches.s_frozen = true;
    shady.switches.c[0]     = 0.5;
    CHECK_THROWS_AS(finetune(shady, nullptr, ds, sc, rng), std::logic_error);

    // 0 epochs: weights and switches bit-identical
    Model fixed = Model::create(cfg, 8);
    vit::binarize(fixed.switches, vit::MaskSel::both);
    Model before = fixed;
    SearchConfig none = sc;
    none.finetune_epochs = 0;
    CHECK(finetune(fixed, nullptr, ds, none, rng).empty());
    CHECK(fixed.params.head_w == before.params.head_w);
    CHECK(fixed.switches.c == before.switches.c);

    // real finetune leaves frozen masks bitwise untouched
    Model tuned = Model::create(cfg, 8);
    for (size_t i = 0; i < tuned.switches.c.size(); i += 2) {
        tuned.switches.c[i] = 0.0;  // mixed mask
    }
    vit::binarize(tuned.switches, vit::MaskSel::both);
    const std::vector<double> c_before = tuned.switches.c;
    const std::vector<double> s_before = tuned.switches.s;
    const std::vector<double> w_before = tuned.params.head_w;
    Rng rng2(123);
    const auto hist = finetune(tuned, nullptr, ds, sc, rng2);
    CHECK(hist.size() == 2);
    CHECK(tuned.switches.c == c_before);
    CHECK(tuned.switches.s == s_before);
    CHECK(tuned.params.head_w != w_before);
}

TEST_CASE("layerwise taylorize baseline") {
    ModelConfig cfg;
    cfg.num_layers  = 2;
    cfg.embed_dim   = 8;
    cfg.mlp_dim     = 16;
    cfg.num_heads   = 2;
    cfg.image_size  = 8;
    cfg.patch_size  = 4;
    cfg.num_classes = 2;

    Model untouched = Model::create(cfg, 2);
    layerwise_taylorize_baseline(untouched, 0);
    CHECK(vit::count_active(untouched.switches).gelu == cfg.gelu_switch_count());
    CHECK(untouched.switches.c_frozen);

    Model all = Model::create(cfg, 2);
    layerwise_taylorize_baseline(all, cfg.num_layers);
    CHECK(vit::count_active(all.switches).gelu == 0);
    CHECK(vit::count_active(all.switches).softmax == cfg.softmax_switch_count());

    Model one = Model::create(cfg, 2);
    layerwise_taylorize_baseline(one, 1);
    // per-token granularity: one full layer stays active
    CHECK(vit::count_active(one.switches).gelu == cfg.num_tokens());
    // zeros land on the last layer
    for (int i = 0; i < cfg.num_tokens(); ++i) {
        CHECK(one.switches.c[static_cast<size_t>(i)] == 1.0);
        CHECK(one.switches.c[static_cast<size_t>(cfg.num_tokens() + i)] == 0.0);
    }

    Model bad = Model::create(cfg, 2);
    CHECK_THROWS_AS(layerwise_taylorize_baseline(bad, 3), std::out_of_range);
    CHECK_THROWS_AS(layerwise_taylorize_baseline(bad, -1), std::out_of_range);
    Model frozen = Model::create(cfg, 2);
    vit::binarize(frozen.switches, vit::MaskSel::both);
    CHECK_THROWS_AS(layerwise_taylorize_baseline(frozen, 1), std::logic_error);
}

TEST_CASE("degradation stats") {
    DegradationStats same = degradation_stats({0.5, 0.25}, {0.5, 0.25});
    CHECK(same.max_diff == 0.0);
    CHECK(same.mean_diff == 0.0);
    CHECK(same.variance == 0.0);

    DegradationStats st = degradation_stats({1.0, 0.5}, {0.9, 0.5});
    CHECK(st.max_diff == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(st.mean_diff == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(st.variance == doctest::Approx(0.0025).epsilon(1e-12));

    CHECK_THROWS_AS(degradation_stats({1.0}, {0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(degradation_stats({}, {}), std::invalid_argument);
}

TEST_CASE("kd loss keeps the teacher fixed and nonnegative during training") {
    ModelConfig cfg = micro_config();
    data::DatasetSplit ds = micro_data();
    Model teacher = Model::create(cfg, 20);
    vit::binarize(teacher.switches, vit::MaskSel::both);
    const std::vector<double> teacher_bits = teacher.params.head_w;

    Model student = teacher;
    student.switches = vit::SwitchSet::ones(cfg);
    SearchConfig sc;
    sc.gelu_budget    = cfg.gelu_switch_count();
    sc.softmax_budget = cfg.softmax_switch_count();
    sc.kd_enabled     = true;
    sc.max_epochs     = 8;
    Rng rng(30);
    SearchResult res = privit_search(student, &teacher, ds, sc, rng);
    REQUIRE(res.converged);
    for (const EpochStats & row : res.history) {
        CHECK(row.kd_loss >= 0.0);
    }
    CHECK(teacher.params.head_w == teacher_bits);
}
