#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "privit/privit.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    std::string path;
    explicit TempDir(std::string p) : path(std::move(p)) { fs::remove_all(path); }
    ~TempDir() { fs::remove_all(path); }
};

privit_run_config * micro_config(const char * out_dir) {
    privit_run_config * cfg = privit_config_default();
    REQUIRE(cfg);
    auto set = [&](const char * k, const char * v) {
        REQUIRE(privit_config_set(cfg, k, v) == PRIVIT_OK);
    };
    set("model.layers", "1");
    set("model.embed_dim", "8");
    set("model.mlp_dim", "16");
    set("model.heads", "2");
    set("model.image_size", "8");
    set("model.patch_size", "4");
    set("data.per_class", "16");
    set("data.per_class_test", "8");
    set("search.kd", "off");
    set("search.max_epochs", "40");
    set("search.finetune_epochs", "1");
    set("search.budget_gelu", "5");
    set("search.budget_softmax", "10");
    set("pretrain.max_epochs", "4");
    set("run.out_dir", out_dir);
    return cfg;
}

}  // namespace

TEST_CASE("status strings and config errors") {
    CHECK(std::strcmp(privit_status_str(PRIVIT_OK), "ok") == 0);
    CHECK(std::strcmp(privit_status_str(PRIVIT_ERR_NONCONVERGENCE), "non-convergence") == 0);

    privit_run_config * cfg = privit_config_default();
    REQUIRE(cfg);
    CHECK(privit_config_set(cfg, "model.layers", "2") == PRIVIT_OK);
    CHECK(privit_config_set(cfg, "no.such.key", "1") == PRIVIT_ERR_CONFIG);
    CHECK(std::string(privit_last_error()).find("no.such.key") != std::string::npos);
    CHECK(privit_config_set(nullptr, "model.layers", "2") == PRIVIT_ERR_CONFIG);
    privit_config_free(cfg);

    CHECK(privit_config_load("missing_config_file.txt") == nullptr);
    CHECK(std::string(privit_last_error()).find("missing_config_file.txt") != std::string::npos);
}

TEST_CASE("config file loading") {
    const std::string path = "capi_config_test.txt";
    {
        std::ofstream out(path);
        out << "model.layers = 1\nrun.seed = 9\n";
    }
    privit_run_config * cfg = privit_config_load(path.c_str());
    REQUIRE(cfg);
    privit_config_free(cfg);
    std::remove(path.c_str());
}

TEST_CASE("cost table queries") {
    privit_cost_table * table = privit_cost_table_builtin();
    REQUIRE(table);
    double v = 0;
    CHECK(privit_cost_of(table, "softmax", 197, &v) == PRIVIT_OK);
    CHECK(v == 18586.0);
    CHECK(privit_cost_of(table, "gelu", 3, &v) == PRIVIT_OK);
    CHECK(v == 810.0);
    CHECK(privit_cost_of(table, "bogus", 10, &v) == PRIVIT_ERR_CONFIG);
    CHECK(privit_cost_of(table, "softmax", 100000, &v) == PRIVIT_ERR_CONFIG);

    const std::string path = "capi_overrides_test.csv";
    {
        std::ofstream out(path);
        out << "tag,n,reluops\nsoftmax,100000,1\n";
    }
    CHECK(privit_cost_table_load_overrides(table, path.c_str()) == PRIVIT_OK);
    CHECK(privit_cost_of(table, "softmax", 100000, &v) == PRIVIT_OK);
    CHECK(v == 1.0);
    CHECK(privit_cost_table_load_overrides(table, "no_file.csv") == PRIVIT_ERR_IO);
    std::remove(path.c_str());
    privit_cost_table_free(table);
}

TEST_CASE("degradation stats array call") {
    const double a[] = {1.0, 0.5};
    const double b[] = {0.9, 0.5};
    double mx = 0, mean = 0, var = 0;
    CHECK(privit_degradation_stats(a, b, 2, &mx, &mean, &var) == PRIVIT_OK);
    CHECK(mx == doctest::Approx(0.1));
    CHECK(mean == doctest::Approx(0.05));
    CHECK(var == doctest::Approx(0.0025));
    CHECK(privit_degradation_stats(nullptr, b, 2, &mx, &mean, &var) == PRIVIT_ERR_CONFIG);
    CHECK(privit_degradation_stats(a, b, 0, &mx, &mean, &var) == PRIVIT_ERR_CONFIG);
}

TEST_CASE("pareto csv through the api") {
    const std::string in  = "capi_pareto_in.csv";
    const std::string out = "capi_pareto_out.csv";
    {
        std::ofstream f(in);
        f << "label,latency_reluops,accuracy\nx,10,0.9\ny,9,0.95\n";
    }
    CHECK(privit_pareto_csv(in.c_str(), out.c_str()) == PRIVIT_OK);
    CHECK(fs::exists(out));
    CHECK(privit_pareto_csv("missing.csv", out.c_str()) == PRIVIT_ERR_IO);
    CHECK(privit_pareto_csv(nullptr, out.c_str()) == PRIVIT_ERR_CONFIG);
    std::remove(in.c_str());
    std::remove(out.c_str());
}

TEST_CASE("full pipeline through the shared library") {
    TempDir tmp("capi_out");
    privit_run_config * cfg = micro_config("capi_out/teacher");

    privit_run_summary summary{};
    REQUIRE(privit_run_pretrain(cfg, &summary) == PRIVIT_OK);
    CHECK(summary.search_epochs >= 1);
    CHECK(fs::exists("capi_out/teacher/teacher.pvit"));

    REQUIRE(privit_config_set(cfg, "run.teacher", "capi_out/teacher/teacher.pvit") == PRIVIT_OK);
    REQUIRE(privit_config_set(cfg, "search.kd", "on") == PRIVIT_OK);
    REQUIRE(privit_config_set(cfg, "run.out_dir", "capi_out/search") == PRIVIT_OK);
    REQUIRE(privit_run_search(cfg, &summary) == PRIVIT_OK);
    CHECK(summary.converged == 1);
    CHECK(summary.gelu_count <= 5);
    CHECK(summary.softmax_count <= 10);
    CHECK(summary.teacher_test_accuracy >= 0.0);

    // the checkpoint round-trips through the model handle
    privit_model * model = privit_model_load("capi_out/search/model.pvit");
    REQUIRE(model);
    int gelu = -1, softmax = -1;
    CHECK(privit_model_active_counts(model, &gelu, &softmax) == PRIVIT_OK);
    CHECK(gelu == summary.gelu_count);
    CHECK(softmax == summary.softmax_count);
    CHECK(privit_model_save(model, "capi_out/copy.pvit") == PRIVIT_OK);
    privit_model * copy = privit_model_load("capi_out/copy.pvit");
    REQUIRE(copy);
    privit_model_free(copy);

    privit_cost_table * table = privit_cost_table_builtin();
    double total = 0;
    CHECK(privit_latency_estimate(model, table, "capi_out/latency.csv", &total) == PRIVIT_OK);
    CHECK(total == doctest::Approx(summary.latency_reluops));
    CHECK(fs::exists("capi_out/latency.csv"));

    CHECK(privit_report_distribution(model, "capi_out/dist.csv") == PRIVIT_OK);
    CHECK(fs::exists("capi_out/dist.csv"));
    privit_cost_table_free(table);
    privit_model_free(model);

    // layerwise baseline through the API
    REQUIRE(privit_config_set(cfg, "run.out_dir", "capi_out/baseline") == PRIVIT_OK);
    REQUIRE(privit_run_layerwise_baseline(cfg, 1, &summary) == PRIVIT_OK);
    CHECK(summary.gelu_count == 0);

    // unloadable checkpoints fail cleanly
    CHECK(privit_model_load("capi_out/no_model.pvit") == nullptr);
    CHECK(std::string(privit_last_error()).size() > 0);

    privit_config_free(cfg);
}

TEST_CASE("nonconvergence maps to its status code") {
    TempDir tmp("capi_out_nc");
    privit_run_config * cfg = micro_config("capi_out_nc");
    REQUIRE(privit_config_set(cfg, "search.budget_gelu", "0") == PRIVIT_OK);
    REQUIRE(privit_config_set(cfg, "search.budget_softmax", "0") == PRIVIT_OK);
    REQUIRE(privit_config_set(cfg, "search.max_epochs", "3") == PRIVIT_OK);
    privit_run_summary summary{};
    CHECK(privit_run_search(cfg, &summary) == PRIVIT_ERR_NONCONVERGENCE);
    privit_config_free(cfg);
}
