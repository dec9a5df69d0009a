#include "runner.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "checkpoint.hpp"
#include "csv.hpp"

namespace privit::runner {

namespace fs = std::filesystem;

uint64_t derive_seed(uint64_t seed, std::string_view tag) {
    // FNV-1a over the tag, then a splitmix64 finalizer
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

std::ofstream open_out(const std::string & path) {
    std::ofstream out(path);
    if (!out) {
        throw io_error("cannot write '" + path + "'");
    }
    return out;
}

void ensure_dir(const std::string & dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw io_error("cannot create directory '" + dir + "': " + ec.message());
    }
}

void write_history_csv(const std::string & path, const std::vector<train::EpochStats> & history) {
    std::ofstream out = open_out(path);
    out << "epoch,train_loss,ce_loss,kd_loss,gelu_count,softmax_count,lambda_g,lambda_s,"
           "c_frozen,s_frozen\n";
    for (const auto & row : history) {
        out << row.epoch << ',' << fmt_double(row.train_loss) << ',' << fmt_double(row.ce_loss)
            << ',' << fmt_double(row.kd_loss) << ',' << row.gelu_count << ',' << row.softmax_count
            << ',' << fmt_double(row.lambda_g) << ',' << fmt_double(row.lambda_s) << ','
            << (row.c_frozen ? 1 : 0) << ',' << (row.s_frozen ? 1 : 0) << '\n';
    }
}

void write_census_csv(const std::string & path, const latency::NonlinearityCensus & census) {
    std::ofstream out = open_out(path);
    out << "layer,softmax_rows,squared_rows,scale_rows,uniform_rows,layernorms,gelu_elements\n";
    for (size_t li = 0; li < census.layers.size(); ++li) {
        const auto & lc = census.layers[li];
        out << li << ',' << lc.softmax_rows << ',' << lc.squared_rows << ',' << lc.scale_rows
            << ',' << lc.uniform_rows << ',' << lc.layernorms << ',' << lc.gelu_elements << '\n';
    }
    out << "final,0,0,0,0," << census.final_layernorms << ",0\n";
}

bool has_exact_anchor(const latency::CostTable & table, latency::CostTag tag, int n) {
    for (const auto & a : table.anchors) {
        if (a.tag == tag && a.n == n) {
            return true;
        }
    }
    return false;
}

void write_latency_csv(const std::string & path, const latency::NonlinearityCensus & census,
                       const latency::LatencyBreakdown & lb, const latency::CostTable & table) {
    std::ofstream out = open_out(path);
    out << "category,reluops,basis\n";
    auto basis = [&](latency::CostTag tag, int n) {
        if (tag == latency::CostTag::scale_attn_row || tag == latency::CostTag::uniform_attn_row) {
            return "linear";
        }
        return has_exact_anchor(table, tag, n) ? "anchor" : "estimate";
    };
    out << "softmax," << fmt_double(lb.softmax) << ','
        << basis(latency::CostTag::softmax, census.attn_row_len) << '\n';
    out << "square," << fmt_double(lb.square) << ','
        << basis(latency::CostTag::square, census.attn_row_len) << '\n';
    out << "scale," << fmt_double(lb.scale) << ",linear\n";
    out << "uniform," << fmt_double(lb.uniform) << ",linear\n";
    out << "layernorm," << fmt_double(lb.layernorm) << ','
        << basis(latency::CostTag::layernorm, census.layernorm_len) << '\n';
    out << "gelu," << fmt_double(lb.gelu) << ','
        << basis(latency::CostTag::gelu, 1) << '\n';
    out << "total," << fmt_double(lb.total) << ",\n";
}

void write_summary_csv(const std::string & path, const RunSummary & s, const RunConfig & cfg) {
    std::ofstream out = open_out(path);
    out << "label,seed,budget_gelu,budget_softmax,gelu_count,softmax_count,latency_reluops,"
           "latency_m,train_accuracy,test_accuracy,teacher_test_accuracy,search_epochs,"
           "converged\n";
    out << s.label << ',' << cfg.seed << ',' << cfg.search.gelu_budget << ','
        << cfg.search.softmax_budget << ',' << s.gelu_count << ',' << s.softmax_count << ','
        << fmt_double(s.latency_reluops) << ',' << fmt_double(s.latency_reluops / 1e6) << ','
        << fmt_double(s.train_accuracy) << ',' << fmt_double(s.test_accuracy) << ','
        << fmt_double(s.teacher_test_accuracy) << ',' << s.search_epochs << ','
        << (s.converged ? 1 : 0) << '\n';
}

void write_per_class_csv(const std::string & path, const std::vector<double> & acc) {
    std::ofstream out = open_out(path);
    out << "class,accuracy\n";
    for (size_t i = 0; i < acc.size(); ++i) {
        out << i << ',' << fmt_double(acc[i]) << '\n';
    }
}

latency::CostTable table_for(const RunConfig & cfg) {
    latency::CostTable table = latency::builtin_cost_table();
    if (!cfg.cost_overrides_path.empty()) {
        try {
            latency::load_cost_overrides(table, cfg.cost_overrides_path);
        } catch (const std::runtime_error & e) {
            throw io_error(e.what());
        }
    }
    return table;
}

bool same_model_config(const vit::ModelConfig & a, const vit::ModelConfig & b) {
    return a.num_layers == b.num_layers && a.embed_dim == b.embed_dim && a.mlp_dim == b.mlp_dim &&
           a.num_heads == b.num_heads && a.image_size == b.image_size &&
           a.patch_size == b.patch_size && a.num_classes == b.num_classes &&
           a.channels == b.channels && a.gelu_granularity == b.gelu_granularity;
}

vit::Model load_teacher(const RunConfig & cfg) {
    vit::Model teacher;
    try {
        teacher = vit::load_checkpoint(cfg.teacher_path);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    if (!same_model_config(teacher.cfg, cfg.model)) {
        throw config_error("teacher checkpoint '" + cfg.teacher_path +
                           "' does not match the configured model architecture");
    }
    return teacher;
}

// census + latency + accuracy reports shared by search and the baseline
RunSummary finish_run(const RunConfig & cfg, vit::Model & model, vit::Model * teacher,
                      const Datasets & ds, const std::string & label, bool converged,
                      int search_epochs) {
    const latency::CostTable table = table_for(cfg);
    const latency::NonlinearityCensus census = latency::census_of_model(model.cfg, model.switches);
    const latency::LatencyBreakdown lb = latency::latency_estimate(census, table);
    const vit::ActiveCounts counts = vit::count_active(model.switches);

    RunSummary s;
    s.label           = label;
    s.converged       = converged;
    s.search_epochs   = search_epochs;
    s.gelu_count      = counts.gelu;
    s.softmax_count   = counts.softmax;
    s.latency_reluops = lb.total;
    s.train_accuracy  = train::accuracy(model, ds.train);
    s.test_accuracy   = train::accuracy(model, ds.test);
    if (teacher) {
        s.teacher_test_accuracy = train::accuracy(*teacher, ds.test);
    }
    s.checkpoint_path = cfg.out_dir + "/model.pvit";

    try {
        vit::save_checkpoint(model, s.checkpoint_path);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    write_census_csv(cfg.out_dir + "/census.csv", census);
    write_latency_csv(cfg.out_dir + "/latency.csv", census, lb, table);
    write_per_class_csv(cfg.out_dir + "/per_class_accuracy.csv",
                        train::per_class_accuracy(model, ds.test));
    write_summary_csv(cfg.out_dir + "/summary.csv", s, cfg);
    return s;
}

}  // namespace

Datasets load_datasets(const RunConfig & cfg) {
    Datasets ds;
    if (cfg.data_kind == "synthetic") {
        ds.train = data::gen_synthetic(cfg.data_classes, cfg.data_per_class, cfg.model.image_size,
                                       derive_seed(cfg.seed, "data.train"));
        ds.test  = data::gen_synthetic(cfg.data_classes, cfg.data_per_class_test,
                                       cfg.model.image_size, derive_seed(cfg.seed, "data.test"));
        return ds;
    }
    // cifar10: train from data_batch_*.bin, test from test_batch.bin when
    // present, otherwise a differently-seeded subset of the train batches
    std::string train_path = cfg.data_path;
    std::string test_path  = cfg.data_path;
    bool        have_test_file = false;
    try {
        if (fs::is_directory(cfg.data_path)) {
            if (fs::exists(fs::path(cfg.data_path) / "test_batch.bin")) {
                test_path      = (fs::path(cfg.data_path) / "test_batch.bin").string();
                have_test_file = true;
            }
        }
        const int resize = cfg.model.image_size == 32 ? 0 : cfg.model.image_size;
        ds.train = data::load_cifar10_subset(train_path, cfg.data_per_class,
                                             derive_seed(cfg.seed, "data.train"), resize);
        ds.test  = data::load_cifar10_subset(have_test_file ? test_path : train_path,
                                             cfg.data_per_class_test,
                                             derive_seed(cfg.seed, "data.test"), resize);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    return ds;
}

RunSummary cmd_pretrain(const RunConfig & cfg) {
    ensure_dir(cfg.out_dir);
    const Datasets ds = load_datasets(cfg);

    vit::Model model = vit::Model::create(cfg.model, derive_seed(cfg.seed, "init"));
    Rng rng(derive_seed(cfg.seed, "pretrain"));
    const train::PretrainResult res = train::pretrain(model, ds.train, cfg.pretrain, rng);

    // a finished teacher is a frozen, fully nonlinear model
    vit::binarize(model.switches, vit::MaskSel::both);

    RunSummary s;
    s.label          = "pretrain";
    s.search_epochs  = res.epochs_run;
    s.train_accuracy = res.final_train_accuracy;
    s.test_accuracy  = train::accuracy(model, ds.test);
    const vit::ActiveCounts counts = vit::count_active(model.switches);
    s.gelu_count      = counts.gelu;
    s.softmax_count   = counts.softmax;
    s.checkpoint_path = cfg.out_dir + "/teacher.pvit";
    try {
        vit::save_checkpoint(model, s.checkpoint_path);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }

    {
        std::ofstream out = open_out(cfg.out_dir + "/pretrain_history.csv");
        out << "epoch,train_loss,train_accuracy\n";
        for (size_t i = 0; i < res.history.size(); ++i) {
            out << res.history[i].epoch << ',' << fmt_double(res.history[i].train_loss) << ','
                << fmt_double(i < res.accuracy_history.size() ? res.accuracy_history[i] : 0.0)
                << '\n';
        }
    }
    write_summary_csv(cfg.out_dir + "/summary.csv", s, cfg);
    return s;
}

RunSummary cmd_search(const RunConfig & cfg) {
    ensure_dir(cfg.out_dir);
    const Datasets ds = load_datasets(cfg);

    vit::Model   teacher;
    vit::Model * teacher_ptr = nullptr;
    if (!cfg.teacher_path.empty()) {
        teacher     = load_teacher(cfg);
        teacher_ptr = &teacher;
    }
    if (cfg.search.kd_enabled && !teacher_ptr) {
        throw config_error("knowledge distillation needs a teacher checkpoint; "
                           "set run.teacher or disable search.kd");
    }

    vit::Model model;
    if (teacher_ptr) {
        model          = teacher;  // student starts from the teacher weights
        model.switches = vit::SwitchSet::ones(cfg.model);
    } else {
        model = vit::Model::create(cfg.model, derive_seed(cfg.seed, "init"));
    }

    Rng search_rng(derive_seed(cfg.seed, "search"));
    train::SearchResult sr = train::privit_search(model, teacher_ptr, ds.train, cfg.search,
                                                  search_rng);
    write_history_csv(cfg.out_dir + "/history.csv", sr.history);
    if (!sr.converged) {
        throw nonconvergence_error("search did not meet budgets within " +
                                   std::to_string(cfg.search.max_epochs) +
                                   " epochs; history preserved at " + cfg.out_dir +
                                   "/history.csv");
    }

    Rng finetune_rng(derive_seed(cfg.seed, "finetune"));
    const std::vector<train::EpochStats> ft =
        train::finetune(model, teacher_ptr, ds.train, cfg.search, finetune_rng);
    write_history_csv(cfg.out_dir + "/finetune_history.csv", ft);

    return finish_run(cfg, model, teacher_ptr, ds, "search", true, sr.state.epoch);
}

RunSummary cmd_baseline_layerwise(const RunConfig & cfg, int k) {
    ensure_dir(cfg.out_dir);
    const Datasets ds = load_datasets(cfg);

    vit::Model   teacher;
    vit::Model * teacher_ptr = nullptr;
    if (!cfg.teacher_path.empty()) {
        teacher     = load_teacher(cfg);
        teacher_ptr = &teacher;
    }
    if (cfg.search.kd_enabled && !teacher_ptr) {
        throw config_error("knowledge distillation needs a teacher checkpoint; "
                           "set run.teacher or disable search.kd");
    }

    vit::Model model;
    if (teacher_ptr) {
        model          = teacher;
        model.switches = vit::SwitchSet::ones(cfg.model);
    } else {
        model = vit::Model::create(cfg.model, derive_seed(cfg.seed, "init"));
    }
    model.switches.epsilon = cfg.search.epsilon;
    try {
        train::layerwise_taylorize_baseline(model, k);
    } catch (const std::out_of_range & e) {
        throw config_error(e.what());
    }

    Rng finetune_rng(derive_seed(cfg.seed, "finetune"));
    const std::vector<train::EpochStats> ft =
        train::finetune(model, teacher_ptr, ds.train, cfg.search, finetune_rng);
    write_history_csv(cfg.out_dir + "/finetune_history.csv", ft);

    return finish_run(cfg, model, teacher_ptr, ds, "layerwise_k" + std::to_string(k), true, 0);
}

SweepOutcome cmd_sweep(const RunConfig & cfg) {
    if (cfg.sweep_gelu_budgets.empty() || cfg.sweep_softmax_budgets.empty()) {
        throw config_error("sweep needs sweep.gelu_budgets and sweep.softmax_budgets");
    }
    ensure_dir(cfg.out_dir);

    struct Cell {
        int g = 0, s = 0;
        std::string label;
        RunSummary  summary;
        std::string error;
        bool        ok = false;
    };
    std::vector<Cell> cells;
    for (int g : cfg.sweep_gelu_budgets) {
        for (int s : cfg.sweep_softmax_budgets) {
            Cell c;
            c.g     = g;
            c.s     = s;
            c.label = "g" + std::to_string(g) + "_s" + std::to_string(s);
            cells.push_back(std::move(c));
        }
    }

    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) {
                return;
            }
            Cell & cell = cells[i];
            RunConfig cell_cfg = cfg;
            cell_cfg.search.gelu_budget    = cell.g;
            cell_cfg.search.softmax_budget = cell.s;
            cell_cfg.out_dir = cfg.out_dir + "/" + cell.label;
            try {
                cell.summary = cmd_search(cell_cfg);
                cell.ok      = true;
            } catch (const std::exception & e) {
                cell.error = e.what();
            }
        }
    };
    const int n_workers = std::max(1, std::min<int>(cfg.sweep_workers,
                                                    static_cast<int>(cells.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<size_t>(n_workers));
        for (int i = 0; i < n_workers; ++i) {
            threads.emplace_back(worker);
        }
        for (auto & t : threads) {
            t.join();
        }
    }

    SweepOutcome outcome;
    outcome.sweep_csv  = cfg.out_dir + "/sweep.csv";
    outcome.pareto_csv = cfg.out_dir + "/pareto.csv";
    {
        std::ofstream out = open_out(outcome.sweep_csv);
        out << "label,budget_gelu,budget_softmax,latency_reluops,accuracy,status\n";
        for (const Cell & cell : cells) {
            if (cell.ok) {
                out << cell.label << ',' << cell.g << ',' << cell.s << ','
                    << fmt_double(cell.summary.latency_reluops) << ','
                    << fmt_double(cell.summary.test_accuracy) << ",ok\n";
            } else {
                out << cell.label << ',' << cell.g << ',' << cell.s << ",,,failed\n";
            }
        }
    }
    std::vector<latency::ParetoPoint> points;
    for (const Cell & cell : cells) {
        if (cell.ok) {
            ++outcome.cells_ok;
            points.push_back({cell.summary.latency_reluops, cell.summary.test_accuracy,
                              cell.label});
        } else {
            ++outcome.cells_failed;
        }
    }
    {
        std::ofstream out = open_out(outcome.pareto_csv);
        out << "label,latency_reluops,accuracy,on_frontier\n";
        if (!points.empty()) {
            const std::vector<latency::ParetoPoint> frontier = latency::pareto_frontier(points);
            for (const auto & p : points) {
                bool on = false;
                for (const auto & fp : frontier) {
                    if (fp.label == p.label) {
                        on = true;
                        break;
                    }
                }
                out << p.label << ',' << fmt_double(p.latency) << ',' << fmt_double(p.accuracy)
                    << ',' << (on ? 1 : 0) << '\n';
            }
        }
    }
    return outcome;
}

std::string cmd_ablate_attention(const RunConfig & cfg) {
    if (cfg.ablate_variants.empty()) {
        throw config_error("ablate needs at least one variant");
    }
    ensure_dir(cfg.out_dir);
    const std::string csv_path = cfg.out_dir + "/ablate.csv";
    std::ofstream out = open_out(csv_path);
    out << "variant,budget_gelu,budget_softmax,latency_reluops,test_accuracy,status\n";
    for (const std::string & name : cfg.ablate_variants) {
        RunConfig vcfg = cfg;
        try {
            vcfg.model.taylor_variant = vit::attn_variant_from_name(name);
        } catch (const std::invalid_argument & e) {
            throw config_error(e.what());
        }
        vcfg.out_dir = cfg.out_dir + "/" + name;
        try {
            const RunSummary s = cmd_search(vcfg);
            out << name << ',' << vcfg.search.gelu_budget << ',' << vcfg.search.softmax_budget
                << ',' << fmt_double(s.latency_reluops) << ',' << fmt_double(s.test_accuracy)
                << ",ok\n";
        } catch (const std::exception &) {
            out << name << ',' << vcfg.search.gelu_budget << ',' << vcfg.search.softmax_budget
                << ",,,failed\n";
        }
    }
    return csv_path;
}

void report_distribution(const std::string & checkpoint_path, const std::string & out_csv) {
    vit::Model model;
    try {
        model = vit::load_checkpoint(checkpoint_path);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    const latency::NonlinearityCensus census =
        latency::census_of_model(model.cfg, model.switches);

    std::ofstream out = open_out(out_csv);
    out << "layer,gelu_active,gelu_base,softmax_active,softmax_base\n";
    for (size_t li = 0; li < census.layers.size(); ++li) {
        out << li << ',' << census.layers[li].gelu_elements << ','
            << model.cfg.gelu_elements_per_layer() << ',' << census.layers[li].softmax_rows << ','
            << model.cfg.softmax_rows_per_layer() << '\n';
    }
}

double latency_report(const std::string & checkpoint_path, const std::string & overrides_csv,
                      const std::string & out_csv) {
    vit::Model model;
    try {
        model = vit::load_checkpoint(checkpoint_path);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    latency::CostTable table = latency::builtin_cost_table();
    if (!overrides_csv.empty()) {
        try {
            latency::load_cost_overrides(table, overrides_csv);
        } catch (const std::runtime_error & e) {
            throw io_error(e.what());
        }
    }
    const latency::NonlinearityCensus census =
        latency::census_of_model(model.cfg, model.switches);
    const latency::LatencyBreakdown lb = latency::latency_estimate(census, table);
    if (!out_csv.empty()) {
        write_latency_csv(out_csv, census, lb, table);
    }
    return lb.total;
}

namespace {

std::vector<double> read_per_class_csv(const std::string & path) {
    std::string header;
    std::vector<std::vector<std::string>> rows;
    try {
        rows = read_csv(path, &header);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    if (header.rfind("class,accuracy", 0) != 0) {
        throw io_error("'" + path + "' must start with header 'class,accuracy'");
    }
    std::vector<double> acc;
    for (const auto & row : rows) {
        if (row.size() < 2) {
            throw io_error("'" + path + "': malformed row");
        }
        acc.push_back(std::stod(row[1]));
    }
    return acc;
}

}  // namespace

train::DegradationStats degrade_stats_files(const std::string & csv_a, const std::string & csv_b,
                                            const std::string & out_csv) {
    const std::vector<double> a = read_per_class_csv(csv_a);
    const std::vector<double> b = read_per_class_csv(csv_b);
    train::DegradationStats st;
    try {
        st = train::degradation_stats(a, b);
    } catch (const std::invalid_argument & e) {
        throw config_error(e.what());
    }
    if (!out_csv.empty()) {
        std::ofstream out = open_out(out_csv);
        out << "max_diff,mean_diff,variance\n";
        out << fmt_double(st.max_diff) << ',' << fmt_double(st.mean_diff) << ','
            << fmt_double(st.variance) << '\n';
    }
    return st;
}

void pareto_csv_file(const std::string & in_csv, const std::string & out_csv) {
    std::string header;
    std::vector<std::vector<std::string>> rows;
    try {
        rows = read_csv(in_csv, &header);
    } catch (const std::runtime_error & e) {
        throw io_error(e.what());
    }
    if (header.rfind("label,latency_reluops,accuracy", 0) != 0) {
        throw io_error("'" + in_csv + "' must start with header 'label,latency_reluops,accuracy'");
    }
    std::vector<latency::ParetoPoint> points;
    for (const auto & row : rows) {
        if (row.size() < 3) {
            throw io_error("'" + in_csv + "': malformed row");
        }
        points.push_back({std::stod(row[1]), std::stod(row[2]), row[0]});
    }
    if (points.empty()) {
        throw config_error("pareto: no points in '" + in_csv + "'");
    }
    const std::vector<latency::ParetoPoint> frontier = latency::pareto_frontier(points);
    std::ofstream out = open_out(out_csv);
    out << "label,latency_reluops,accuracy,on_frontier\n";
    for (const auto & p : points) {
        bool on = false;
        for (const auto & fp : frontier) {
            if (fp.label == p.label && fp.latency == p.latency && fp.accuracy == p.accuracy) {
                on = true;
                break;
            }
        }
        out << p.label << ',' << fmt_double(p.latency) << ',' << fmt_double(p.accuracy) << ','
            << (on ? 1 : 0) << '\n';
    }
}

}  // namespace privit::runner
