#include "privit/privit.h"

#include <exception>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "latency.hpp"
#include "runner.hpp"

namespace {

thread_local std::string g_last_error;

privit_status map_exception() {
    try {
        throw;
    } catch (const privit::runner::config_error & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_CONFIG;
    } catch (const privit::runner::nonconvergence_error & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_NONCONVERGENCE;
    } catch (const privit::runner::io_error & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_IO;
    } catch (const std::invalid_argument & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_CONFIG;
    } catch (const std::out_of_range & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_CONFIG;
    } catch (const std::exception & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return PRIVIT_ERR_INTERNAL;
    }
}

void fill_summary(privit_run_summary * out, const privit::runner::RunSummary & s) {
    if (!out) {
        return;
    }
    out->converged             = s.converged ? 1 : 0;
    out->search_epochs         = s.search_epochs;
    out->gelu_count            = s.gelu_count;
    out->softmax_count         = s.softmax_count;
    out->latency_reluops       = s.latency_reluops;
    out->train_accuracy        = s.train_accuracy;
    out->test_accuracy         = s.test_accuracy;
    out->teacher_test_accuracy = s.teacher_test_accuracy;
}

}  // namespace

struct privit_run_config {
    privit::runner::RunConfig cfg;
};

struct privit_model {
    privit::vit::Model model;
};

struct privit_cost_table {
    privit::latency::CostTable table;
};

extern "C" {

const char * privit_status_str(privit_status status) {
    switch (status) {
        case PRIVIT_OK:
            return "ok";
        case PRIVIT_ERR_INTERNAL:
            return "internal error";
        case PRIVIT_ERR_CONFIG:
            return "config error";
        case PRIVIT_ERR_NONCONVERGENCE:
            return "non-convergence";
        case PRIVIT_ERR_IO:
            return "i/o error";
    }
    return "?";
}

const char * privit_last_error(void) {
    return g_last_error.c_str();
}

privit_run_config * privit_config_default(void) {
    return new privit_run_config{};
}

privit_run_config * privit_config_load(const char * path) {
    if (!path) {
        g_last_error = "privit_config_load: path is NULL";
        return nullptr;
    }
    try {
        auto * out = new privit_run_config{};
        out->cfg   = privit::runner::load_run_config(path);
        return out;
    } catch (...) {
        map_exception();
        return nullptr;
    }
}

privit_status privit_config_set(privit_run_config * cfg, const char * key, const char * value) {
    if (!cfg || !key || !value) {
        g_last_error = "privit_config_set: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::apply_override(cfg->cfg, key, value);
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

void privit_config_free(privit_run_config * cfg) {
    delete cfg;
}

privit_status privit_run_pretrain(privit_run_config * cfg, privit_run_summary * out) {
    if (!cfg) {
        g_last_error = "privit_run_pretrain: cfg is NULL";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::RunConfig rc = cfg->cfg;
        privit::runner::finalize(rc);
        fill_summary(out, privit::runner::cmd_pretrain(rc));
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_run_search(privit_run_config * cfg, privit_run_summary * out) {
    if (!cfg) {
        g_last_error = "privit_run_search: cfg is NULL";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::RunConfig rc = cfg->cfg;
        privit::runner::finalize(rc);
        fill_summary(out, privit::runner::cmd_search(rc));
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_run_sweep(privit_run_config * cfg, int * out_cells_ok,
                               int * out_cells_failed) {
    if (!cfg) {
        g_last_error = "privit_run_sweep: cfg is NULL";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::RunConfig rc = cfg->cfg;
        privit::runner::finalize(rc);
        const privit::runner::SweepOutcome outcome = privit::runner::cmd_sweep(rc);
        if (out_cells_ok) {
            *out_cells_ok = outcome.cells_ok;
        }
        if (out_cells_failed) {
            *out_cells_failed = outcome.cells_failed;
        }
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_run_ablate_attention(privit_run_config * cfg) {
    if (!cfg) {
        g_last_error = "privit_run_ablate_attention: cfg is NULL";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::RunConfig rc = cfg->cfg;
        privit::runner::finalize(rc);
        privit::runner::cmd_ablate_attention(rc);
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_run_layerwise_baseline(privit_run_config * cfg, int k,
                                            privit_run_summary * out) {
    if (!cfg) {
        g_last_error = "privit_run_layerwise_baseline: cfg is NULL";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::RunConfig rc = cfg->cfg;
        privit::runner::finalize(rc);
        fill_summary(out, privit::runner::cmd_baseline_layerwise(rc, k));
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_model * privit_model_load(const char * path) {
    if (!path) {
        g_last_error = "privit_model_load: path is NULL";
        return nullptr;
    }
    try {
        auto * out = new privit_model{};
        try {
            out->model = privit::vit::load_checkpoint(path);
        } catch (...) {
            delete out;
            throw;
        }
        return out;
    } catch (const std::runtime_error & e) {
        g_last_error = e.what();
        return nullptr;
    }
}

privit_status privit_model_save(const privit_model * model, const char * path) {
    if (!model || !path) {
        g_last_error = "privit_model_save: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::vit::save_checkpoint(model->model, path);
        return PRIVIT_OK;
    } catch (const std::exception & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_IO;
    }
}

void privit_model_free(privit_model * model) {
    delete model;
}

privit_status privit_model_active_counts(const privit_model * model, int * out_gelu,
                                         int * out_softmax) {
    if (!model) {
        g_last_error = "privit_model_active_counts: model is NULL";
        return PRIVIT_ERR_CONFIG;
    }
    const privit::vit::ActiveCounts counts = privit::vit::count_active(model->model.switches);
    if (out_gelu) {
        *out_gelu = counts.gelu;
    }
    if (out_softmax) {
        *out_softmax = counts.softmax;
    }
    return PRIVIT_OK;
}

privit_cost_table * privit_cost_table_builtin(void) {
    return new privit_cost_table{privit::latency::builtin_cost_table()};
}

privit_status privit_cost_table_load_overrides(privit_cost_table * table, const char * csv_path) {
    if (!table || !csv_path) {
        g_last_error = "privit_cost_table_load_overrides: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::latency::load_cost_overrides(table->table, csv_path);
        return PRIVIT_OK;
    } catch (const std::invalid_argument & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_CONFIG;
    } catch (const std::exception & e) {
        g_last_error = e.what();
        return PRIVIT_ERR_IO;
    }
}

privit_status privit_cost_of(const privit_cost_table * table, const char * tag, int n,
                             double * out_reluops) {
    if (!table || !tag || !out_reluops) {
        g_last_error = "privit_cost_of: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        *out_reluops = privit::latency::cost_of(privit::latency::cost_tag_from_name(tag), n,
                                                table->table);
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

void privit_cost_table_free(privit_cost_table * table) {
    delete table;
}

privit_status privit_latency_estimate(const privit_model * model, const privit_cost_table * table,
                                      const char * out_csv, double * out_reluops) {
    if (!model || !table) {
        g_last_error = "privit_latency_estimate: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        const auto census =
            privit::latency::census_of_model(model->model.cfg, model->model.switches);
        const auto lb = privit::latency::latency_estimate(census, table->table);
        if (out_reluops) {
            *out_reluops = lb.total;
        }
        if (out_csv) {
            FILE * f = fopen(out_csv, "w");
            if (!f) {
                g_last_error = std::string("cannot write '") + out_csv + "'";
                return PRIVIT_ERR_IO;
            }
            fprintf(f, "category,reluops\n");
            fprintf(f, "softmax,%.17g\n", lb.softmax);
            fprintf(f, "square,%.17g\n", lb.square);
            fprintf(f, "scale,%.17g\n", lb.scale);
            fprintf(f, "uniform,%.17g\n", lb.uniform);
            fprintf(f, "layernorm,%.17g\n", lb.layernorm);
            fprintf(f, "gelu,%.17g\n", lb.gelu);
            fprintf(f, "total,%.17g\n", lb.total);
            fclose(f);
        }
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_report_distribution(const privit_model * model, const char * out_csv) {
    if (!model || !out_csv) {
        g_last_error = "privit_report_distribution: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        const auto census =
            privit::latency::census_of_model(model->model.cfg, model->model.switches);
        FILE * f = fopen(out_csv, "w");
        if (!f) {
            g_last_error = std::string("cannot write '") + out_csv + "'";
            return PRIVIT_ERR_IO;
        }
        fprintf(f, "layer,gelu_active,gelu_base,softmax_active,softmax_base\n");
        for (size_t li = 0; li < census.layers.size(); ++li) {
            fprintf(f, "%zu,%lld,%d,%d,%d\n", li, census.layers[li].gelu_elements,
                    model->model.cfg.gelu_elements_per_layer(), census.layers[li].softmax_rows,
                    model->model.cfg.softmax_rows_per_layer());
        }
        fclose(f);
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_degradation_stats(const double * acc_a, const double * acc_b, size_t n,
                                       double * out_max, double * out_mean,
                                       double * out_variance) {
    if (!acc_a || !acc_b) {
        g_last_error = "privit_degradation_stats: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        const std::vector<double> a(acc_a, acc_a + n);
        const std::vector<double> b(acc_b, acc_b + n);
        const privit::train::DegradationStats st = privit::train::degradation_stats(a, b);
        if (out_max) {
            *out_max = st.max_diff;
        }
        if (out_mean) {
            *out_mean = st.mean_diff;
        }
        if (out_variance) {
            *out_variance = st.variance;
        }
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

privit_status privit_pareto_csv(const char * in_csv, const char * out_csv) {
    if (!in_csv || !out_csv) {
        g_last_error = "privit_pareto_csv: NULL argument";
        return PRIVIT_ERR_CONFIG;
    }
    try {
        privit::runner::pareto_csv_file(in_csv, out_csv);
        return PRIVIT_OK;
    } catch (...) {
        return map_exception();
    }
}

}  // extern "C"
