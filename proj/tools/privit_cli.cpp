// privit command line. Talks to the core exclusively through the C API in
// privit/privit.h; exit codes: 0 ok, 2 config error, 3 non-convergence,
// 4 i/o error.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "privit/privit.h"

namespace {

struct ConfigDeleter {
    void operator()(privit_run_config * c) const { privit_config_free(c); }
};
using ConfigPtr = std::unique_ptr<privit_run_config, ConfigDeleter>;

struct ModelDeleter {
    void operator()(privit_model * m) const { privit_model_free(m); }
};
using ModelPtr = std::unique_ptr<privit_model, ModelDeleter>;

struct TableDeleter {
    void operator()(privit_cost_table * t) const { privit_cost_table_free(t); }
};
using TablePtr = std::unique_ptr<privit_cost_table, TableDeleter>;

int exit_code(privit_status status) {
    switch (status) {
        case PRIVIT_OK:
            return 0;
        case PRIVIT_ERR_CONFIG:
            return 2;
        case PRIVIT_ERR_NONCONVERGENCE:
            return 3;
        case PRIVIT_ERR_IO:
            return 4;
        case PRIVIT_ERR_INTERNAL:
            return 1;
    }
    return 1;
}

int fail(privit_status status) {
    std::fprintf(stderr, "privit: %s: %s\n", privit_status_str(status), privit_last_error());
    return exit_code(status);
}

// shared flags applied on top of the config file
struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::string teacher;
    uint64_t    seed = 0;
    bool        seed_set = false;
    int         budget_gelu    = -1;
    int         budget_softmax = -1;
    std::string variant;
    bool        no_kd    = false;
    int         strategy = 0;
};

void add_common(CLI::App * cmd, CommonOpts & o) {
    cmd->add_option("--config", o.config_path, "run config file (key = value lines)");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "run seed")->each([&o](const std::string &) {
        o.seed_set = true;
    });
    cmd->add_option("--teacher", o.teacher, "teacher checkpoint path");
    cmd->add_option("--budget-gelu", o.budget_gelu, "GELU switch budget");
    cmd->add_option("--budget-softmax", o.budget_softmax, "softmax switch budget");
    cmd->add_option("--variant", o.variant, "Taylor attention variant (squared|scale|uniform)");
    cmd->add_flag("--no-kd", o.no_kd, "disable knowledge distillation");
    cmd->add_option("--strategy", o.strategy, "penalty/finetune strategy (1..5)")
        ->check(CLI::Range(1, 5));
}

ConfigPtr build_config(const CommonOpts & o, privit_status & status) {
    ConfigPtr cfg;
    if (!o.config_path.empty()) {
        cfg.reset(privit_config_load(o.config_path.c_str()));
        if (!cfg) {
            status = PRIVIT_ERR_IO;
            return cfg;
        }
    } else {
        cfg.reset(privit_config_default());
    }
    auto set = [&](const char * key, const std::string & value) {
        if (status != PRIVIT_OK) {
            return;
        }
        status = privit_config_set(cfg.get(), key, value.c_str());
    };
    status = PRIVIT_OK;
    if (!o.out_dir.empty()) {
        set("run.out_dir", o.out_dir);
    }
    if (o.seed_set) {
        set("run.seed", std::to_string(o.seed));
    }
    if (!o.teacher.empty()) {
        set("run.teacher", o.teacher);
    }
    if (o.budget_gelu >= 0) {
        set("search.budget_gelu", std::to_string(o.budget_gelu));
    }
    if (o.budget_softmax >= 0) {
        set("search.budget_softmax", std::to_string(o.budget_softmax));
    }
    if (!o.variant.empty()) {
        set("model.taylor_variant", o.variant);
    }
    if (o.no_kd) {
        set("search.kd", "off");
    }
    if (o.strategy > 0) {
        set("search.strategy", std::to_string(o.strategy));
    }
    if (status != PRIVIT_OK) {
        cfg.reset();
    }
    return cfg;
}

void print_summary(const privit_run_summary & s) {
    std::printf("converged=%d epochs=%d gelu_count=%d softmax_count=%d latency_reluops=%.0f "
                "latency_m=%.4f train_acc=%.4f test_acc=%.4f",
                s.converged, s.search_epochs, s.gelu_count, s.softmax_count, s.latency_reluops,
                s.latency_reluops / 1e6, s.train_accuracy, s.test_accuracy);
    if (s.teacher_test_accuracy >= 0.0) {
        std::printf(" teacher_test_acc=%.4f", s.teacher_test_accuracy);
    }
    std::printf("\n");
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"switched vision transformers with an MPC latency cost model"};
    app.require_subcommand(1);

    CommonOpts pretrain_opts, search_opts, sweep_opts, ablate_opts, baseline_opts;

    CLI::App * cmd_pretrain = app.add_subcommand("pretrain", "train the fully nonlinear teacher");
    add_common(cmd_pretrain, pretrain_opts);

    CLI::App * cmd_search = app.add_subcommand("search", "switch search + binarize + finetune");
    add_common(cmd_search, search_opts);

    CLI::App * cmd_sweep = app.add_subcommand("sweep", "grid sweep over (GELU, softmax) budgets");
    add_common(cmd_sweep, sweep_opts);
    std::vector<int> sweep_gelu, sweep_softmax;
    cmd_sweep->add_option("--gelu-grid", sweep_gelu, "GELU budgets to sweep");
    cmd_sweep->add_option("--softmax-grid", sweep_softmax, "softmax budgets to sweep");
    int sweep_workers = 0;
    cmd_sweep->add_option("--workers", sweep_workers, "parallel sweep workers");

    CLI::App * cmd_ablate = app.add_subcommand("ablate-attn", "compare Taylor attention variants");
    add_common(cmd_ablate, ablate_opts);
    std::vector<std::string> ablate_variants;
    cmd_ablate->add_option("--variants", ablate_variants, "variants to compare");

    CLI::App * cmd_baseline =
        app.add_subcommand("baseline", "layer-wise Taylorization baseline");
    add_common(cmd_baseline, baseline_opts);
    int baseline_layers = 0;
    cmd_baseline->add_option("--layers", baseline_layers, "number of trailing layers to Taylorize")
        ->required();

    CLI::App * cmd_report = app.add_subcommand("report-dist", "per-layer nonlinearity counts");
    std::string report_model, report_out = "distribution.csv";
    cmd_report->add_option("--model", report_model, "binarized checkpoint")->required();
    cmd_report->add_option("--out", report_out, "output CSV");

    CLI::App * cmd_degrade =
        app.add_subcommand("degrade-stats", "per-class accuracy degradation between two runs");
    std::string degrade_a, degrade_b, degrade_out;
    cmd_degrade->add_option("--a", degrade_a, "per-class accuracy CSV (class,accuracy)")->required();
    cmd_degrade->add_option("--b", degrade_b, "per-class accuracy CSV to subtract")->required();
    cmd_degrade->add_option("--out", degrade_out, "optional output CSV");

    CLI::App * cmd_latency = app.add_subcommand("latency", "ReLU-op estimate for a checkpoint");
    std::string latency_model, latency_overrides, latency_out;
    cmd_latency->add_option("--model", latency_model, "binarized checkpoint")->required();
    cmd_latency->add_option("--cost-table", latency_overrides, "cost override CSV (tag,n,reluops)");
    cmd_latency->add_option("--out", latency_out, "breakdown CSV");

    CLI::App * cmd_pareto = app.add_subcommand("pareto", "Pareto frontier of a run table");
    std::string pareto_in, pareto_out;
    cmd_pareto->add_option("--in", pareto_in, "CSV with label,latency_reluops,accuracy")->required();
    cmd_pareto->add_option("--out", pareto_out, "output CSV")->required();

    CLI11_PARSE(app, argc, argv);

    privit_status status = PRIVIT_OK;

    if (cmd_pretrain->parsed()) {
        ConfigPtr cfg = build_config(pretrain_opts, status);
        if (!cfg) {
            return fail(status);
        }
        privit_run_summary summary{};
        status = privit_run_pretrain(cfg.get(), &summary);
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        print_summary(summary);
        return 0;
    }

    if (cmd_search->parsed()) {
        ConfigPtr cfg = build_config(search_opts, status);
        if (!cfg) {
            return fail(status);
        }
        privit_run_summary summary{};
        status = privit_run_search(cfg.get(), &summary);
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        print_summary(summary);
        return 0;
    }

    if (cmd_sweep->parsed()) {
        ConfigPtr cfg = build_config(sweep_opts, status);
        if (!cfg) {
            return fail(status);
        }
        auto join = [](const std::vector<int> & v) {
            std::string out;
            for (size_t i = 0; i < v.size(); ++i) {
                if (i) {
                    out += ',';
                }
                out += std::to_string(v[i]);
            }
            return out;
        };
        if (!sweep_gelu.empty()) {
            status = privit_config_set(cfg.get(), "sweep.gelu_budgets", join(sweep_gelu).c_str());
        }
        if (status == PRIVIT_OK && !sweep_softmax.empty()) {
            status =
                privit_config_set(cfg.get(), "sweep.softmax_budgets", join(sweep_softmax).c_str());
        }
        if (status == PRIVIT_OK && sweep_workers > 0) {
            status = privit_config_set(cfg.get(), "sweep.workers",
                                       std::to_string(sweep_workers).c_str());
        }
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        int ok = 0, failed = 0;
        status = privit_run_sweep(cfg.get(), &ok, &failed);
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        std::printf("sweep: %d cells ok, %d failed\n", ok, failed);
        return 0;
    }

    if (cmd_ablate->parsed()) {
        ConfigPtr cfg = build_config(ablate_opts, status);
        if (!cfg) {
            return fail(status);
        }
        if (!ablate_variants.empty()) {
            std::string joined;
            for (size_t i = 0; i < ablate_variants.size(); ++i) {
                if (i) {
                    joined += ',';
                }
                joined += ablate_variants[i];
            }
            status = privit_config_set(cfg.get(), "ablate.variants", joined.c_str());
            if (status != PRIVIT_OK) {
                return fail(status);
            }
        }
        status = privit_run_ablate_attention(cfg.get());
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        std::printf("ablate: done\n");
        return 0;
    }

    if (cmd_baseline->parsed()) {
        ConfigPtr cfg = build_config(baseline_opts, status);
        if (!cfg) {
            return fail(status);
        }
        privit_run_summary summary{};
        status = privit_run_layerwise_baseline(cfg.get(), baseline_layers, &summary);
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        print_summary(summary);
        return 0;
    }

    if (cmd_report->parsed()) {
        ModelPtr model(privit_model_load(report_model.c_str()));
        if (!model) {
            return fail(PRIVIT_ERR_IO);
        }
        status = privit_report_distribution(model.get(), report_out.c_str());
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        std::printf("wrote %s\n", report_out.c_str());
        return 0;
    }

    if (cmd_degrade->parsed()) {
        // files hold class,accuracy rows; read them here so the C API stays
        // array-based
        auto read = [](const std::string & path, std::vector<double> & out) {
            std::FILE * f = std::fopen(path.c_str(), "r");
            if (!f) {
                return false;
            }
            char line[512];
            bool first = true;
            while (std::fgets(line, sizeof(line), f)) {
                if (first) {
                    first = false;
                    continue;
                }
                double cls, acc;
                if (std::sscanf(line, "%lf,%lf", &cls, &acc) == 2) {
                    out.push_back(acc);
                }
            }
            std::fclose(f);
            return true;
        };
        std::vector<double> a, b;
        if (!read(degrade_a, a) || !read(degrade_b, b)) {
            std::fprintf(stderr, "privit: i/o error: cannot read per-class accuracy files\n");
            return 4;
        }
        if (a.size() != b.size() || a.empty()) {
            std::fprintf(stderr, "privit: config error: per-class files disagree on class count\n");
            return 2;
        }
        double mx = 0, mean = 0, var = 0;
        status = privit_degradation_stats(a.data(), b.data(), a.size(), &mx, &mean, &var);
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        std::printf("max_diff=%.6f mean_diff=%.6f variance=%.8f\n", mx, mean, var);
        if (!degrade_out.empty()) {
            std::FILE * f = std::fopen(degrade_out.c_str(), "w");
            if (!f) {
                std::fprintf(stderr, "privit: i/o error: cannot write '%s'\n", degrade_out.c_str());
                return 4;
            }
            std::fprintf(f, "max_diff,mean_diff,variance\n%.17g,%.17g,%.17g\n", mx, mean, var);
            std::fclose(f);
        }
        return 0;
    }

    if (cmd_latency->parsed()) {
        ModelPtr model(privit_model_load(latency_model.c_str()));
        if (!model) {
            return fail(PRIVIT_ERR_IO);
        }
        TablePtr table(privit_cost_table_builtin());
        if (!latency_overrides.empty()) {
            status = privit_cost_table_load_overrides(table.get(), latency_overrides.c_str());
            if (status != PRIVIT_OK) {
                return fail(status);
            }
        }
        double total = 0.0;
        status = privit_latency_estimate(model.get(), table.get(),
                                         latency_out.empty() ? nullptr : latency_out.c_str(),
                                         &total);
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        std::printf("latency_reluops=%.0f latency_m=%.4f\n", total, total / 1e6);
        return 0;
    }

    if (cmd_pareto->parsed()) {
        status = privit_pareto_csv(pareto_in.c_str(), pareto_out.c_str());
        if (status != PRIVIT_OK) {
            return fail(status);
        }
        std::printf("wrote %s\n", pareto_out.c_str());
        return 0;
    }

    return 0;
}
