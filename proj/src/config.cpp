#include "meee/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "meee/check.hpp"

namespace meee {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::meee: return "meee";
        case Variant::meee_v1: return "meee_v1";
        case Variant::meee_v2: return "meee_v2";
        case Variant::mbpo: return "mbpo";
        case Variant::sac: return "sac";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    if (s == "meee") return Variant::meee;
    if (s == "meee_v1") return Variant::meee_v1;
    if (s == "meee_v2") return Variant::meee_v2;
    if (s == "mbpo") return Variant::mbpo;
    if (s == "sac") return Variant::sac;
    contract_error("variant: unknown value '", s,
                   "' (expected meee, meee_v1, meee_v2, mbpo or sac)");
}

ExperimentConfig default_config(const std::string& env_name) {
    ExperimentConfig cfg;
    cfg.env = env_name;
    apply_auto_defaults(cfg);
    validate_config(cfg);
    return cfg;
}

void apply_auto_defaults(ExperimentConfig& cfg) {
    const bool pendulum = cfg.env == "pendulum";
    if (cfg.n_epochs == 0) cfg.n_epochs = pendulum ? 50 : 30;
    if (cfg.steps_per_epoch == 0) cfg.steps_per_epoch = pendulum ? 400 : 200;
    if (cfg.rollout_horizon == 0) cfg.rollout_horizon = pendulum ? 5 : 1;
    if (cfg.eval_interval == 0) cfg.eval_interval = cfg.steps_per_epoch;
    if (cfg.env_buffer_capacity == 0)
        cfg.env_buffer_capacity =
            static_cast<std::uint64_t>(cfg.n_epochs) * cfg.steps_per_epoch;
    if (cfg.model_buffer_capacity == 0)
        cfg.model_buffer_capacity = static_cast<std::uint64_t>(cfg.model_rollouts_per_step) *
                                    cfg.rollout_horizon * cfg.steps_per_epoch;
}

namespace {

void field_check(bool ok, const std::string& field, const std::string& why) {
    if (!ok) contract_error(field, ": ", why);
}

}  // namespace

void validate_config(const ExperimentConfig& cfg) {
    field_check(cfg.env == "lqr" || cfg.env == "pendulum", "env",
                "must be \"lqr\" or \"pendulum\", got \"" + cfg.env + "\"");
    field_check(cfg.n_epochs >= 1, "n_epochs", "must be >= 1");
    field_check(cfg.steps_per_epoch >= 1, "steps_per_epoch", "must be >= 1");
    field_check(cfg.model_rollouts_per_step >= 1, "model_rollouts_per_step",
                "must be >= 1");
    field_check(cfg.rollout_horizon >= 1, "rollout_horizon", "must be >= 1");
    field_check(cfg.rollout_horizon_final >= 0, "rollout_horizon_final",
                "must be >= 0");
    field_check(cfg.gradient_updates_per_step >= 0, "gradient_updates_per_step",
                "must be >= 0");
    field_check(cfg.ensemble_size >= 2, "ensemble_size", "must be >= 2");
    field_check(cfg.candidates >= 0, "candidates", "must be >= 0");
    field_check(cfg.candidates > 0 || cfg.include_base, "candidates",
                "candidate set is empty (candidates = 0 with include_base = false)");
    field_check(cfg.lambda >= 0.0 && std::isfinite(cfg.lambda), "lambda",
                "must be >= 0");
    field_check(!cfg.psi.empty(), "psi", "must not be empty");
    for (double p : cfg.psi)
        field_check(std::isfinite(p) && p > 0.0, "psi", "entries must be > 0");
    field_check(cfg.weight_temperature > 0.0 && std::isfinite(cfg.weight_temperature),
                "weight_temperature", "must be > 0");
    field_check(cfg.gamma > 0.0 && cfg.gamma < 1.0, "gamma", "must lie in (0, 1)");
    field_check(cfg.alpha >= 0.0 && std::isfinite(cfg.alpha), "alpha",
                "must be >= 0");
    field_check(cfg.polyak > 0.0 && cfg.polyak < 1.0, "polyak",
                "must lie in (0, 1)");
    field_check(cfg.lr_actor > 0.0, "lr_actor", "must be > 0");
    field_check(cfg.lr_critic > 0.0, "lr_critic", "must be > 0");
    field_check(cfg.lr_model > 0.0, "lr_model", "must be > 0");
    field_check(cfg.batch_size >= 1, "batch_size", "must be >= 1");
    field_check(cfg.model_batch_size >= 1, "model_batch_size", "must be >= 1");
    field_check(cfg.env_buffer_capacity >= 1, "env_buffer_capacity", "must be >= 1");
    field_check(cfg.model_buffer_capacity >= 1, "model_buffer_capacity",
                "must be >= 1");
    field_check(cfg.model_train_epochs >= 1, "model_train_epochs", "must be >= 1");
    field_check(cfg.real_data_fraction >= 0.0 && cfg.real_data_fraction <= 1.0,
                "real_data_fraction", "must lie in [0, 1]");
    field_check(cfg.eval_episodes >= 1, "eval_episodes", "must be >= 1");
    field_check(cfg.eval_interval >= 1, "eval_interval", "must be >= 1");
    field_check(cfg.hidden_size >= 1, "hidden_size", "must be >= 1");
    field_check(cfg.activation == "relu" || cfg.activation == "tanh", "activation",
                "must be \"relu\" or \"tanh\"");
    field_check(cfg.model_loss == "mse" || cfg.model_loss == "nll", "model_loss",
                "must be \"mse\" or \"nll\"");
    field_check(cfg.threads >= 1, "threads", "must be >= 1");
    field_check(!cfg.out_dir.empty(), "out_dir", "must not be empty");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct Parser {
    int line = 0;
    std::string key;

    [[noreturn]] void fail(const std::string& why) const {
        contract_error("config line ", line, ", key '", key, "': ", why);
    }

    double as_double(const std::string& v) const {
        try {
            std::size_t used = 0;
            double d = std::stod(v, &used);
            if (used != v.size()) fail("trailing characters in number '" + v + "'");
            return d;
        } catch (const std::invalid_argument&) {
            fail("expected a number, got '" + v + "'");
        } catch (const std::out_of_range&) {
            fail("number out of range: '" + v + "'");
        }
    }

    long long as_int(const std::string& v) const {
        try {
            std::size_t used = 0;
            long long i = std::stoll(v, &used);
            if (used != v.size()) fail("trailing characters in integer '" + v + "'");
            return i;
        } catch (const std::invalid_argument&) {
            fail("expected an integer, got '" + v + "'");
        } catch (const std::out_of_range&) {
            fail("integer out of range: '" + v + "'");
        }
    }

    std::uint64_t as_uint(const std::string& v) const {
        try {
            std::size_t used = 0;
            unsigned long long i = std::stoull(v, &used);
            if (used != v.size()) fail("trailing characters in integer '" + v + "'");
            return i;
        } catch (const std::exception&) {
            fail("expected a nonnegative integer, got '" + v + "'");
        }
    }

    bool as_bool(const std::string& v) const {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail("expected true/false, got '" + v + "'");
    }

    std::vector<double> as_double_list(const std::string& v) const {
        std::vector<double> out;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) fail("empty entry in list '" + v + "'");
            out.push_back(as_double(item));
        }
        if (out.empty()) fail("expected a comma-separated list, got '" + v + "'");
        return out;
    }
};

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) runtime_fail("load_config: cannot open ", path.string());

    ExperimentConfig cfg;
    Parser p;
    std::set<std::string> seen;
    std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"env", [&](const std::string& v) { cfg.env = v; }},
        {"variant", [&](const std::string& v) { cfg.variant = variant_from_string(v); }},
        {"seed", [&](const std::string& v) { cfg.seed = p.as_uint(v); }},
        {"n_epochs", [&](const std::string& v) { cfg.n_epochs = (int)p.as_int(v); }},
        {"steps_per_epoch",
         [&](const std::string& v) { cfg.steps_per_epoch = (int)p.as_int(v); }},
        {"model_rollouts_per_step",
         [&](const std::string& v) { cfg.model_rollouts_per_step = (int)p.as_int(v); }},
        {"rollout_horizon",
         [&](const std::string& v) { cfg.rollout_horizon = (int)p.as_int(v); }},
        {"rollout_horizon_final",
         [&](const std::string& v) { cfg.rollout_horizon_final = (int)p.as_int(v); }},
        {"gradient_updates_per_step",
         [&](const std::string& v) { cfg.gradient_updates_per_step = (int)p.as_int(v); }},
        {"ensemble_size",
         [&](const std::string& v) { cfg.ensemble_size = (int)p.as_int(v); }},
        {"candidates", [&](const std::string& v) { cfg.candidates = (int)p.as_int(v); }},
        {"include_base", [&](const std::string& v) { cfg.include_base = p.as_bool(v); }},
        {"lambda", [&](const std::string& v) { cfg.lambda = p.as_double(v); }},
        {"psi", [&](const std::string& v) { cfg.psi = p.as_double_list(v); }},
        {"weight_temperature",
         [&](const std::string& v) { cfg.weight_temperature = p.as_double(v); }},
        {"gamma", [&](const std::string& v) { cfg.gamma = p.as_double(v); }},
        {"alpha", [&](const std::string& v) { cfg.alpha = p.as_double(v); }},
        {"auto_alpha", [&](const std::string& v) { cfg.auto_alpha = p.as_bool(v); }},
        {"polyak", [&](const std::string& v) { cfg.polyak = p.as_double(v); }},
        {"lr_actor", [&](const std::string& v) { cfg.lr_actor = p.as_double(v); }},
        {"lr_critic", [&](const std::string& v) { cfg.lr_critic = p.as_double(v); }},
        {"lr_model", [&](const std::string& v) { cfg.lr_model = p.as_double(v); }},
        {"batch_size", [&](const std::string& v) { cfg.batch_size = (int)p.as_int(v); }},
        {"model_batch_size",
         [&](const std::string& v) { cfg.model_batch_size = (int)p.as_int(v); }},
        {"env_buffer_capacity",
         [&](const std::string& v) { cfg.env_buffer_capacity = p.as_uint(v); }},
        {"model_buffer_capacity",
         [&](const std::string& v) { cfg.model_buffer_capacity = p.as_uint(v); }},
        {"model_train_epochs",
         [&](const std::string& v) { cfg.model_train_epochs = (int)p.as_int(v); }},
        {"real_data_fraction",
         [&](const std::string& v) { cfg.real_data_fraction = p.as_double(v); }},
        {"eval_episodes",
         [&](const std::string& v) { cfg.eval_episodes = (int)p.as_int(v); }},
        {"eval_interval",
         [&](const std::string& v) { cfg.eval_interval = (int)p.as_int(v); }},
        {"hidden_size", [&](const std::string& v) { cfg.hidden_size = (int)p.as_int(v); }},
        {"activation", [&](const std::string& v) { cfg.activation = v; }},
        {"model_loss", [&](const std::string& v) { cfg.model_loss = v; }},
        {"variance_include_reward",
         [&](const std::string& v) { cfg.variance_include_reward = p.as_bool(v); }},
        {"single_critic",
         [&](const std::string& v) { cfg.single_critic = p.as_bool(v); }},
        {"threads", [&](const std::string& v) { cfg.threads = (int)p.as_int(v); }},
        {"debug_dump_buffers",
         [&](const std::string& v) { cfg.debug_dump_buffers = p.as_bool(v); }},
        {"out_dir", [&](const std::string& v) { cfg.out_dir = v; }},
    };

    std::string raw;
    while (std::getline(f, raw)) {
        ++p.line;
        std::string s = raw;
        const auto hash = s.find('#');
        if (hash != std::string::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            contract_error("config line ", p.line, ": expected 'key = value', got '",
                           trim(raw), "'");
        p.key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        auto it = setters.find(p.key);
        if (it == setters.end())
            contract_error("config line ", p.line, ": unknown key '", p.key, "'");
        if (!seen.insert(p.key).second)
            contract_error("config line ", p.line, ": duplicate key '", p.key, "'");
        if (value.empty()) p.fail("missing value");
        it->second(value);
    }

    apply_auto_defaults(cfg);
    validate_config(cfg);
    return cfg;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    std::ofstream f(path);
    if (!f) runtime_fail("save_config: cannot open ", path.string());
    f << "env = " << cfg.env << '\n';
    f << "variant = " << to_string(cfg.variant) << '\n';
    f << "seed = " << cfg.seed << '\n';
    f << "n_epochs = " << cfg.n_epochs << '\n';
    f << "steps_per_epoch = " << cfg.steps_per_epoch << '\n';
    f << "model_rollouts_per_step = " << cfg.model_rollouts_per_step << '\n';
    f << "rollout_horizon = " << cfg.rollout_horizon << '\n';
    f << "rollout_horizon_final = " << cfg.rollout_horizon_final << '\n';
    f << "gradient_updates_per_step = " << cfg.gradient_updates_per_step << '\n';
    f << "ensemble_size = " << cfg.ensemble_size << '\n';
    f << "candidates = " << cfg.candidates << '\n';
    f << "include_base = " << (cfg.include_base ? "true" : "false") << '\n';
    f << "lambda = " << fmt_double(cfg.lambda) << '\n';
    f << "psi = ";
    for (std::size_t i = 0; i < cfg.psi.size(); ++i)
        f << (i ? "," : "") << fmt_double(cfg.psi[i]);
    f << '\n';
    f << "weight_temperature = " << fmt_double(cfg.weight_temperature) << '\n';
    f << "gamma = " << fmt_double(cfg.gamma) << '\n';
    f << "alpha = " << fmt_double(cfg.alpha) << '\n';
    f << "auto_alpha = " << (cfg.auto_alpha ? "true" : "false") << '\n';
    f << "polyak = " << fmt_double(cfg.polyak) << '\n';
    f << "lr_actor = " << fmt_double(cfg.lr_actor) << '\n';
    f << "lr_critic = " << fmt_double(cfg.lr_critic) << '\n';
    f << "lr_model = " << fmt_double(cfg.lr_model) << '\n';
    f << "batch_size = " << cfg.batch_size << '\n';
    f << "model_batch_size = " << cfg.model_batch_size << '\n';
    f << "env_buffer_capacity = " << cfg.env_buffer_capacity << '\n';
    f << "model_buffer_capacity = " << cfg.model_buffer_capacity << '\n';
    f << "model_train_epochs = " << cfg.model_train_epochs << '\n';
    f << "real_data_fraction = " << fmt_double(cfg.real_data_fraction) << '\n';
    f << "eval_episodes = " << cfg.eval_episodes << '\n';
    f << "eval_interval = " << cfg.eval_interval << '\n';
    f << "hidden_size = " << cfg.hidden_size << '\n';
    f << "activation = " << cfg.activation << '\n';
    f << "model_loss = " << cfg.model_loss << '\n';
    f << "variance_include_reward = "
      << (cfg.variance_include_reward ? "true" : "false") << '\n';
    f << "single_critic = " << (cfg.single_critic ? "true" : "false") << '\n';
    f << "threads = " << cfg.threads << '\n';
    f << "debug_dump_buffers = " << (cfg.debug_dump_buffers ? "true" : "false") << '\n';
    f << "out_dir = " << cfg.out_dir << '\n';
}

}  // namespace meee
