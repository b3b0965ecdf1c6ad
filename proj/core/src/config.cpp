#include <afc/config.hpp>
#include <afc/error.hpp>

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace afc {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw InputError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.contains(key)) throw InputError("unknown config key '" + section + "." + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::string strategy_name(SelectionStrategy s) { return s == SelectionStrategy::random ? "random" : "bayes_factor"; }

SelectionStrategy strategy_from_name(const std::string& name) {
    if (name == "bayes_factor") return SelectionStrategy::bayes_factor;
    if (name == "random") return SelectionStrategy::random;
    throw InputError("unknown selection strategy '" + name + "'");
}

} // namespace

SessionConfig session_config_from_json(const std::string& text) {
    SessionConfig c;
    try {
        json j = json::parse(text);
        check_keys(j, "", {"training", "selection", "oracle", "model", "session"});
        if (j.contains("training")) {
            const json& t = j["training"];
            check_keys(t, "training", {"margin", "learning_rate", "momentum", "epochs_per_round", "batch_size", "seed",
                                       "reinitialize_each_round"});
            read(t, "margin", c.training.margin);
            read(t, "learning_rate", c.training.learning_rate);
            read(t, "momentum", c.training.momentum);
            read(t, "epochs_per_round", c.training.epochs_per_round);
            read(t, "batch_size", c.training.batch_size);
            read(t, "seed", c.training.seed);
            read(t, "reinitialize_each_round", c.training.reinitialize_each_round);
        }
        if (j.contains("selection")) {
            const json& s = j["selection"];
            check_keys(s, "selection", {"tau", "pool_size", "max_candidates", "pools_per_round", "batch_size",
                                        "exploit_fraction", "converged_fraction", "max_rounds", "strategy", "seed"});
            read(s, "tau", c.selection.tau);
            read(s, "pool_size", c.selection.pool_size);
            read(s, "max_candidates", c.selection.max_candidates);
            read(s, "pools_per_round", c.selection.pools_per_round);
            read(s, "batch_size", c.selection.batch_size);
            read(s, "exploit_fraction", c.selection.exploit_fraction);
            read(s, "converged_fraction", c.selection.converged_fraction);
            read(s, "max_rounds", c.selection.max_rounds);
            read(s, "seed", c.selection.seed);
            if (s.contains("strategy")) c.selection.strategy = strategy_from_name(s["strategy"].get<std::string>());
        }
        if (j.contains("oracle") && !j["oracle"].is_null()) {
            const json& o = j["oracle"];
            check_keys(o, "oracle", {"w_shape", "w_color", "w_thickness", "p_flip", "seed", "w_label"});
            OracleConfig oc;
            read(o, "w_shape", oc.w_shape);
            read(o, "w_color", oc.w_color);
            read(o, "w_thickness", oc.w_thickness);
            read(o, "p_flip", oc.p_flip);
            read(o, "seed", oc.seed);
            read(o, "w_label", oc.w_label);
            c.oracle = oc;
        }
        if (j.contains("model")) {
            const json& m = j["model"];
            check_keys(m, "model", {"embedding_dim", "normalize_output", "seed"});
            read(m, "embedding_dim", c.embedding_dim);
            read(m, "normalize_output", c.normalize_output);
            read(m, "seed", c.model_seed);
        }
        if (j.contains("session")) {
            const json& s = j["session"];
            check_keys(s, "session", {"initial_batch", "lease_seconds", "round_deadline_seconds", "prompt"});
            read(s, "initial_batch", c.initial_batch);
            read(s, "prompt", c.prompt);
            if (s.contains("lease_seconds")) c.lease_duration = std::chrono::seconds(s["lease_seconds"].get<long>());
            if (s.contains("round_deadline_seconds"))
                c.round_deadline = std::chrono::seconds(s["round_deadline_seconds"].get<long>());
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string session_config_to_json(const SessionConfig& c) {
    json j;
    j["training"] = {{"margin", c.training.margin},
                     {"learning_rate", c.training.learning_rate},
                     {"momentum", c.training.momentum},
                     {"epochs_per_round", c.training.epochs_per_round},
                     {"batch_size", c.training.batch_size},
                     {"seed", c.training.seed},
                     {"reinitialize_each_round", c.training.reinitialize_each_round}};
    j["selection"] = {{"tau", c.selection.tau},
                      {"pool_size", c.selection.pool_size},
                      {"max_candidates", c.selection.max_candidates},
                      {"pools_per_round", c.selection.pools_per_round},
                      {"batch_size", c.selection.batch_size},
                      {"exploit_fraction", c.selection.exploit_fraction},
                      {"converged_fraction", c.selection.converged_fraction},
                      {"max_rounds", c.selection.max_rounds},
                      {"strategy", strategy_name(c.selection.strategy)},
                      {"seed", c.selection.seed}};
    if (c.oracle) {
        const auto& o = *c.oracle;
        j["oracle"] = {{"w_shape", o.w_shape},         {"w_color", o.w_color}, {"w_thickness", o.w_thickness},
                       {"p_flip", o.p_flip},           {"seed", o.seed},       {"w_label", o.w_label}};
    } else {
        j["oracle"] = nullptr;
    }
    j["model"] = {{"embedding_dim", c.embedding_dim}, {"normalize_output", c.normalize_output}, {"seed", c.model_seed}};
    j["session"] = {{"initial_batch", c.initial_batch},
                    {"lease_seconds", c.lease_duration.count()},
                    {"round_deadline_seconds", c.round_deadline.count()},
                    {"prompt", c.prompt}};
    return j.dump(2);
}

SessionConfig load_session_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LookupError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return session_config_from_json(ss.str());
}

} // namespace afc
