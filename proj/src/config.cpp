#include "config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace privit::runner {

namespace {

std::string trim(const std::string & s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) {
        return "";
    }
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string & key, const std::string & value) {
    try {
        size_t pos = 0;
        const int v = std::stoi(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument("");
        }
        return v;
    } catch (const std::exception &) {
        throw config_error("config key '" + key + "': '" + value + "' is not an integer");
    }
}

uint64_t parse_u64(const std::string & key, const std::string & value) {
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument("");
        }
        return v;
    } catch (const std::exception &) {
        throw config_error("config key '" + key + "': '" + value + "' is not an unsigned integer");
    }
}

double parse_double(const std::string & key, const std::string & value) {
    try {
        size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument("");
        }
        return v;
    } catch (const std::exception &) {
        throw config_error("config key '" + key + "': '" + value + "' is not a number");
    }
}

bool parse_bool(const std::string & key, const std::string & value) {
    if (value == "true" || value == "on" || value == "1" || value == "yes") {
        return true;
    }
    if (value == "false" || value == "off" || value == "0" || value == "no") {
        return false;
    }
    throw config_error("config key '" + key + "': '" + value + "' is not a boolean");
}

std::vector<int> parse_int_list(const std::string & key, const std::string & value) {
    std::vector<int> out;
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_int(key, trim(item)));
    }
    if (out.empty()) {
        throw config_error("config key '" + key + "': empty list");
    }
    return out;
}

}  // namespace

void apply_override(RunConfig & cfg, const std::string & key, const std::string & value) {
    auto & m = cfg.model;
    auto & s = cfg.search;
    if (key == "model.layers") {
        m.num_layers = parse_int(key, value);
    } else if (key == "model.embed_dim") {
        m.embed_dim = parse_int(key, value);
    } else if (key == "model.mlp_dim") {
        m.mlp_dim = parse_int(key, value);
    } else if (key == "model.heads") {
        m.num_heads = parse_int(key, value);
    } else if (key == "model.image_size") {
        m.image_size = parse_int(key, value);
    } else if (key == "model.patch_size") {
        m.patch_size = parse_int(key, value);
    } else if (key == "model.classes") {
        m.num_classes = parse_int(key, value);
    } else if (key == "model.channels") {
        m.channels = parse_int(key, value);
    } else if (key == "model.gelu_granularity") {
        if (value == "token") {
            m.gelu_granularity = vit::GeluGranularity::per_token;
        } else if (value == "element") {
            m.gelu_granularity = vit::GeluGranularity::per_element;
        } else {
            throw config_error("model.gelu_granularity must be token|element, got '" + value + "'");
        }
    } else if (key == "model.taylor_variant") {
        try {
            m.taylor_variant = vit::attn_variant_from_name(value);
        } catch (const std::invalid_argument & e) {
            throw config_error(e.what());
        }
    } else if (key == "search.lambda_g") {
        s.lambda_g_init = parse_double(key, value);
    } else if (key == "search.lambda_s") {
        s.lambda_s_init = parse_double(key, value);
    } else if (key == "search.kappa") {
        s.kappa = parse_double(key, value);
    } else if (key == "search.budget_gelu") {
        s.gelu_budget = parse_int(key, value);
    } else if (key == "search.budget_softmax") {
        s.softmax_budget = parse_int(key, value);
    } else if (key == "search.epsilon") {
        s.epsilon = parse_double(key, value);
    } else if (key == "search.gelu_improve_min") {
        s.gelu_improve_min = parse_int(key, value);
    } else if (key == "search.softmax_improve_min") {
        s.softmax_improve_min = parse_int(key, value);
    } else if (key == "search.strategy") {
        s.strategy = parse_int(key, value);
    } else if (key == "search.kd") {
        s.kd_enabled = parse_bool(key, value);
    } else if (key == "search.kd_temperature") {
        s.kd_temperature = parse_double(key, value);
    } else if (key == "search.warmup_epochs") {
        s.warmup_epochs = parse_int(key, value);
    } else if (key == "search.max_epochs") {
        s.max_epochs = parse_int(key, value);
    } else if (key == "search.finetune_epochs") {
        s.finetune_epochs = parse_int(key, value);
    } else if (key == "search.weight_lr") {
        s.weight_lr = parse_double(key, value);
    } else if (key == "search.switch_lr") {
        s.switch_lr = parse_double(key, value);
    } else if (key == "search.finetune_lr") {
        s.finetune_lr = parse_double(key, value);
    } else if (key == "search.weight_decay") {
        s.weight_decay = parse_double(key, value);
    } else if (key == "search.batch_size") {
        s.batch_size = parse_int(key, value);
    } else if (key == "pretrain.max_epochs") {
        cfg.pretrain.max_epochs = parse_int(key, value);
    } else if (key == "pretrain.lr") {
        cfg.pretrain.lr = parse_double(key, value);
    } else if (key == "pretrain.target_accuracy") {
        cfg.pretrain.target_accuracy = parse_double(key, value);
    } else if (key == "pretrain.batch_size") {
        cfg.pretrain.batch_size = parse_int(key, value);
    } else if (key == "data.kind") {
        if (value != "synthetic" && value != "cifar10") {
            throw config_error("data.kind must be synthetic|cifar10, got '" + value + "'");
        }
        cfg.data_kind = value;
    } else if (key == "data.classes") {
        cfg.data_classes = parse_int(key, value);
    } else if (key == "data.per_class") {
        cfg.data_per_class = parse_int(key, value);
    } else if (key == "data.per_class_test") {
        cfg.data_per_class_test = parse_int(key, value);
    } else if (key == "data.path") {
        cfg.data_path = value;
    } else if (key == "run.seed") {
        cfg.seed = parse_u64(key, value);
    } else if (key == "run.out_dir") {
        cfg.out_dir = value;
    } else if (key == "run.teacher") {
        cfg.teacher_path = value;
    } else if (key == "run.cost_overrides") {
        cfg.cost_overrides_path = value;
    } else if (key == "sweep.gelu_budgets") {
        cfg.sweep_gelu_budgets = parse_int_list(key, value);
    } else if (key == "sweep.softmax_budgets") {
        cfg.sweep_softmax_budgets = parse_int_list(key, value);
    } else if (key == "sweep.workers") {
        cfg.sweep_workers = parse_int(key, value);
    } else if (key == "ablate.variants") {
        cfg.ablate_variants.clear();
        std::istringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            cfg.ablate_variants.push_back(trim(item));
        }
    } else {
        throw config_error("unknown config key '" + key + "'");
    }
    cfg.explicit_keys.insert(key);
}

RunConfig load_run_config(const std::string & path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open config file '" + path + "'");
    }
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error(path + ":" + std::to_string(line_no) +
                               ": expected 'key = value', got '" + line + "'");
        }
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void default_budgets(RunConfig & cfg) {
    if (!cfg.is_set("search.budget_gelu")) {
        cfg.search.gelu_budget = cfg.model.gelu_switch_count() / 4;
    }
    if (!cfg.is_set("search.budget_softmax")) {
        cfg.search.softmax_budget = cfg.model.softmax_switch_count() / 4;
    }
}

void finalize(RunConfig & cfg) {
    try {
        cfg.model.validate();
    } catch (const std::invalid_argument & e) {
        throw config_error(e.what());
    }

    // strategy knobs first, then explicit settings win back their values
    const double explicit_lambda_s   = cfg.search.lambda_s_init;
    const int    explicit_ft_epochs  = cfg.search.finetune_epochs;
    cfg.search = train::apply_strategy(cfg.search, cfg.search.strategy);
    if (cfg.is_set("search.lambda_s")) {
        cfg.search.lambda_s_init = explicit_lambda_s;
    }
    if (cfg.is_set("search.finetune_epochs")) {
        cfg.search.finetune_epochs = explicit_ft_epochs;
    }

    default_budgets(cfg);
    try {
        cfg.search.validate();
    } catch (const std::invalid_argument & e) {
        throw config_error(e.what());
    }

    if (cfg.data_kind == "cifar10") {
        if (cfg.data_path.empty()) {
            throw config_error("data.kind=cifar10 requires data.path");
        }
        if (cfg.model.num_classes != 10) {
            throw config_error("cifar10 requires model.classes=10");
        }
        if (cfg.model.channels != 3) {
            throw config_error("cifar10 requires model.channels=3");
        }
    } else {
        if (cfg.data_classes != cfg.model.num_classes) {
            throw config_error("data.classes (" + std::to_string(cfg.data_classes) +
                               ") must match model.classes (" +
                               std::to_string(cfg.model.num_classes) + ")");
        }
        if (cfg.model.channels != 1) {
            throw config_error("synthetic data is grayscale; set model.channels=1");
        }
    }
}

}  // namespace privit::runner
