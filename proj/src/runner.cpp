#include "grasplab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "grasplab/embedding.hpp"
#include "grasplab/errors.hpp"
#include "grasplab/retrieval.hpp"
#include "grasplab/rng.hpp"
#include "grasplab/text.hpp"
#include "grasplab/wire.hpp"
#include "json.hpp"

namespace grasplab {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const std::vector<std::string> kAttackNames = {"grasp", "p1", "p2", "p3",
                                               "p4",    "worm", "fg"};

bool known_attack(const std::string& name) {
    for (const auto& a : kAttackNames)
        if (a == name) return true;
    return false;
}

void require_keys(const json& obj, const std::string& scope,
                  const std::vector<std::string>& allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (k == it.key()) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + scope + it.key() + "'");
    }
}

double want_number(const json& obj, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) throw ConfigError("config: '" + key + "' must be a number");
    return obj[key].get<double>();
}

int want_int(const json& obj, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer())
        throw ConfigError("config: '" + key + "' must be an integer");
    return obj[key].get<int>();
}

bool want_bool(const json& obj, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_boolean()) throw ConfigError("config: '" + key + "' must be a boolean");
    return obj[key].get<bool>();
}

std::string want_string(const json& obj, const std::string& key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) throw ConfigError("config: '" + key + "' must be a string");
    return obj[key].get<std::string>();
}

DefenseConfig parse_defense(const json& obj) {
    require_keys(obj, "defense.",
                 {"safe_prompt", "summarization", "reject", "id_alignment", "decoy"});
    DefenseConfig d;
    d.safe_prompt = want_bool(obj, "safe_prompt", false);
    d.summarization = parse_summarization(want_string(obj, "summarization", "none"));
    d.reject = want_bool(obj, "reject", false);
    d.id_alignment = want_bool(obj, "id_alignment", false);
    d.decoy = want_bool(obj, "decoy", false);
    return d;
}

ResponderBehavior parse_behavior(const json& obj) {
    require_keys(obj, "behavior.",
                 {"refusal_prob", "paraphrase_prob", "base_mixing_prob",
                  "aligned_id_mixing_prob", "decoy_confusion_prob",
                  "reject_detection_recall", "synonyms"});
    ResponderBehavior b;
    b.refusal_prob = want_number(obj, "refusal_prob", 0.0);
    b.paraphrase_prob = want_number(obj, "paraphrase_prob", 0.0);
    b.base_mixing_prob = want_number(obj, "base_mixing_prob", 0.0);
    b.aligned_id_mixing_prob = want_number(obj, "aligned_id_mixing_prob", b.base_mixing_prob);
    b.decoy_confusion_prob = want_number(obj, "decoy_confusion_prob", 0.0);
    b.reject_detection_recall = want_number(obj, "reject_detection_recall", 0.85);
    if (obj.contains("synonyms")) {
        if (!obj["synonyms"].is_object())
            throw ConfigError("config: 'synonyms' must be an object of string arrays");
        for (auto it = obj["synonyms"].begin(); it != obj["synonyms"].end(); ++it) {
            if (!it.value().is_array())
                throw ConfigError("config: synonyms entry '" + it.key() + "' must be an array");
            std::vector<std::string> alts;
            for (const auto& v : it.value()) {
                if (!v.is_string())
                    throw ConfigError("config: synonyms entry '" + it.key() +
                                      "' must contain only strings");
                alts.push_back(v.get<std::string>());
            }
            b.synonym_table[canonical_key(it.key())] = std::move(alts);
        }
    }
    return b;
}

SyntheticSpec parse_synthetic(const json& obj) {
    require_keys(obj, "synthetic.",
                 {"entities", "relation_types", "edges", "min_degree_floor",
                  "floor_count", "directed"});
    SyntheticSpec s;
    s.entities = want_int(obj, "entities", 0);
    s.edges = want_int(obj, "edges", 0);
    s.min_degree_floor = want_int(obj, "min_degree_floor", 0);
    s.floor_count = want_int(obj, "floor_count", 0);
    s.directed = want_bool(obj, "directed", true);
    if (!obj.contains("relation_types") || !obj["relation_types"].is_array())
        throw ConfigError("config: synthetic.relation_types must be an array of strings");
    for (const auto& v : obj["relation_types"]) {
        if (!v.is_string())
            throw ConfigError("config: synthetic.relation_types must contain only strings");
        s.relation_types.push_back(v.get<std::string>());
    }
    return s;
}

RemoteEndpointConfig parse_remote(const json& obj) {
    require_keys(obj, "remote.",
                 {"base_url", "path", "model", "credential_env", "temperature",
                  "timeout_ms", "max_retries", "retry_backoff_ms", "max_in_flight"});
    RemoteEndpointConfig r;
    r.base_url = want_string(obj, "base_url", "");
    r.path = want_string(obj, "path", r.path);
    r.model = want_string(obj, "model", "");
    r.credential_env = want_string(obj, "credential_env", "");
    r.temperature = want_number(obj, "temperature", 0.0);
    r.timeout_ms = want_int(obj, "timeout_ms", r.timeout_ms);
    r.max_retries = want_int(obj, "max_retries", r.max_retries);
    r.retry_backoff_ms = want_int(obj, "retry_backoff_ms", r.retry_backoff_ms);
    r.max_in_flight = want_int(obj, "max_in_flight", r.max_in_flight);
    return r;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << content;
    if (!out) throw ConfigError("write failed: " + path);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
}

MomentumState parse_momentum_state(const std::string& name) {
    if (name == "stall") return MomentumState::Stall;
    if (name == "steady") return MomentumState::Steady;
    if (name == "surge") return MomentumState::Surge;
    throw ParseError("trace: unknown momentum state '" + name + "'");
}

struct PerTargetOutcome {
    AttackResult result;
    bool complete = true;
    std::string error;
};

AnchorFrameSet resolve_frames(const ExperimentConfig& cfg) {
    if (!cfg.custom_frames.empty()) return AnchorFrameSet{"custom", cfg.custom_frames};
    return builtin_anchor_frames(cfg.frames);
}

// One victim round trip: retrieval, context construction under the active
// defenses, then the responder. Context and responder draws use disjoint
// per-turn seeds so adding a defense never shifts the other stream.
std::string victim_round(const ExperimentConfig& cfg, const RetrievalIndex& index,
                         const SystemPrompt& prompt, const std::string& query,
                         uint64_t target_seed, int turn) {
    RetrievalHits hits = index.retrieve(query, cfg.k_entities, cfg.k_relations);
    ContextTable table =
        build_context(hits, cfg.defense, mix_seed(target_seed, uint64_t(turn) * 2));
    if (cfg.victim_mode == "remote") {
        std::string user = "---Data tables---\n" + table.rendered + "\n\n" + query;
        return respond_remote(cfg.remote, prompt.full_text(), user);
    }
    VictimResponse r = respond_simulated(prompt, table, query, cfg.behavior,
                                         mix_seed(target_seed, uint64_t(turn) * 2 + 1));
    return r.text;
}

PerTargetOutcome attack_one_target(const ExperimentConfig& cfg, const RetrievalIndex& index,
                                   const SystemPrompt& prompt, const AnchorFrameSet& frames,
                                   const EntityId& target) {
    const uint64_t target_seed = mix_seed(cfg.seed, target.key);
    int turn_counter = 0;
    RagHandle rag = [&](const std::string& query) {
        ++turn_counter;
        return victim_round(cfg, index, prompt, query, target_seed, turn_counter);
    };

    PerTargetOutcome out;
    try {
        if (cfg.attack == "grasp") {
            GraspParams params;
            params.q_max = cfg.q_max;
            params.window_turns = cfg.window_turns;
            params.alpha = cfg.alpha;
            params.stop_threshold = cfg.stop_threshold;
            params.activate_threshold = cfg.activate_threshold;
            params.tau = cfg.tau;
            params.residual_cap = cfg.residual_cap;
            params.frames = frames;
            params.seed = target_seed;
            TrigramHashEmbedder embedder;
            out.result = run_attack(target, rag, params, embedder);
        } else {
            out.result = run_fixed_prompt_attack(target, cfg.attack, rag, cfg.q_max);
        }
    } catch (const std::exception& e) {
        out.complete = false;
        out.error = e.what();
    }
    return out;
}

TargetResult score_trace_target(const std::string& label, const AttackResult& result,
                                const KnowledgeGraph& graph, bool complete) {
    TargetResult row;
    row.target = label;
    row.complete = complete;
    RelationSet gt;
    EntityId id{label};
    if (graph.has_entity(id)) gt = one_hop(graph, id);
    row.rtype = score_target(result.extracted, gt, MatchCriterion::RType, graph.directed());
    row.naive = score_target(result.extracted, gt, MatchCriterion::Naive, graph.directed());
    return row;
}

std::vector<ParsedResponse> collect_responses(const std::vector<TargetTrace>& traces) {
    std::vector<ParsedResponse> all;
    for (const auto& t : traces)
        for (const auto& rec : t.result.trace)
            if (!rec.transport_failed) all.push_back(parse_response(rec.response_text));
    return all;
}

// Neighbors recovered from a target's extracted quads, in discovery order:
// the non-target endpoint of quads incident to the target, restricted to
// entities that exist in the graph.
std::vector<EntityId> recovered_neighbors(const KnowledgeGraph& graph, const EntityId& target,
                                          const std::vector<RelationQuad>& extracted) {
    std::vector<EntityId> out;
    std::set<std::string> seen;
    for (const auto& e : extracted) {
        EntityId other("");
        if (e.src.key == target.key)
            other = e.dst;
        else if (e.dst.key == target.key)
            other = e.src;
        else
            continue;
        if (other.key.empty() || seen.count(other.key)) continue;
        if (!graph.has_entity(other)) continue;
        seen.insert(other.key);
        out.push_back(other);
    }
    return out;
}

std::vector<PerTargetOutcome> run_pool(const ExperimentConfig& cfg, const RetrievalIndex& index,
                                       const SystemPrompt& prompt, const AnchorFrameSet& frames,
                                       const std::vector<EntityId>& targets) {
    std::vector<PerTargetOutcome> outcomes(targets.size());
    if (targets.empty()) return outcomes;
    unsigned n_workers = cfg.workers > 0 ? unsigned(cfg.workers)
                                         : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::min<unsigned>(n_workers, unsigned(targets.size()));
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= targets.size()) return;
            outcomes[i] = attack_one_target(cfg, index, prompt, frames, targets[i]);
        }
    };
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (unsigned i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return outcomes;
}

double run_utility(const ExperimentConfig& cfg, const RetrievalIndex& index,
                   const SystemPrompt& prompt) {
    std::vector<UtilityQA> qa = load_utility_qa(cfg.utility_qa_file);
    if (qa.empty()) throw ConfigError("utility QA file has no entries: " + cfg.utility_qa_file);
    const uint64_t base = mix_seed(cfg.seed, "utility");
    double total = 0.0;
    for (size_t i = 0; i < qa.size(); ++i) {
        std::string answer = victim_round(cfg, index, prompt, qa[i].question, base, int(i) + 1);
        total += rouge_l_f1(answer, qa[i].reference);
    }
    return total / double(qa.size());
}

ordered_json trace_record(const std::string& target, const TurnRecord& rec) {
    ordered_json row;
    row["target"] = target;
    row["turn"] = rec.turn;
    row["phase"] = rec.diversity_phase ? "diversity" : "anchor";
    if (std::isinf(rec.y_hat))
        row["y_hat"] = nullptr;
    else
        row["y_hat"] = rec.y_hat;
    row["mu_e"] = rec.mu_e;
    row["state"] = momentum_state_name(rec.state);
    if (rec.policy_row == 0) {
        row["policy_row"] = nullptr;
        row["base_weights"] = nullptr;
        row["reweighted_weights"] = nullptr;
    } else {
        row["policy_row"] = rec.policy_row;
        row["base_weights"] = rec.base_weights;
        row["reweighted_weights"] = rec.reweighted_weights;
    }
    row["template"] = rec.chosen_template;
    row["query_text"] = rec.query_text;
    if (rec.transport_failed)
        row["response_text"] = nullptr;
    else
        row["response_text"] = rec.response_text;
    row["failed"] = rec.transport_failed;
    row["parsed_count"] = rec.parsed_count;
    row["new_count"] = rec.new_count;
    row["n_none"] = rec.n_none;
    row["n_zero"] = rec.n_zero;
    return row;
}

TurnRecord record_from_json(const json& row, const std::string& origin) {
    TurnRecord rec;
    try {
        rec.turn = row.at("turn").get<int>();
        rec.diversity_phase = row.at("phase").get<std::string>() == "diversity";
        rec.y_hat = row.at("y_hat").is_null() ? std::numeric_limits<double>::infinity()
                                              : row.at("y_hat").get<double>();
        rec.mu_e = row.at("mu_e").get<double>();
        rec.state = parse_momentum_state(row.at("state").get<std::string>());
        rec.policy_row = row.at("policy_row").is_null() ? 0 : row.at("policy_row").get<int>();
        if (row.at("base_weights").is_array())
            rec.base_weights = row.at("base_weights").get<std::array<double, 4>>();
        if (row.at("reweighted_weights").is_array())
            rec.reweighted_weights = row.at("reweighted_weights").get<std::array<double, 4>>();
        rec.chosen_template = row.at("template").get<std::string>();
        rec.query_text = row.at("query_text").get<std::string>();
        rec.transport_failed = row.at("failed").get<bool>();
        if (!row.at("response_text").is_null())
            rec.response_text = row.at("response_text").get<std::string>();
        rec.parsed_count = row.at("parsed_count").get<int>();
        rec.new_count = row.at("new_count").get<int>();
        rec.n_none = row.at("n_none").get<int>();
        rec.n_zero = row.at("n_zero").get<int>();
    } catch (const json::exception& e) {
        throw ParseError(origin + ": malformed trace record: " + e.what());
    }
    return rec;
}

// Re-accumulates a target's extracted set and observed types by re-parsing
// each surviving response in turn order, mirroring the live scheduler.
AttackResult replay_target(const std::vector<TurnRecord>& turns) {
    AttackResult result;
    result.trace = turns;
    std::set<std::string> seen;
    std::set<std::string> type_keys;
    for (const auto& rec : result.trace) {
        if (rec.transport_failed) continue;
        ParsedResponse parsed = parse_response(rec.response_text);
        if (parsed.kind != ResponseKind::Relations) continue;
        for (const auto& q : parsed.quads) {
            if (!seen.insert(quad_key(q)).second) continue;
            RelationQuad stripped = q;
            stripped.display_id.clear();
            result.extracted.push_back(std::move(stripped));
            if (type_keys.insert(q.rtype.key).second)
                result.observed_types.push_back(q.rtype.text);
        }
    }
    result.stop_reason = "budget";
    return result;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!root.is_object()) throw ConfigError(origin + ": config root must be an object");
    require_keys(root, "",
                 {"graph_file", "synthetic", "attack", "defense", "behavior", "victim",
                  "remote", "q_max", "k_entities", "k_relations", "window_turns", "alpha",
                  "stop_threshold", "activate_threshold", "tau", "residual_cap", "frames",
                  "custom_frames", "n_targets", "min_degree", "seed", "workers", "out_dir",
                  "utility_qa_file", "expand_neighbors"});

    ExperimentConfig cfg;
    if (root.contains("graph_file")) cfg.graph_file = want_string(root, "graph_file", "");
    if (root.contains("synthetic")) {
        if (!root["synthetic"].is_object())
            throw ConfigError("config: 'synthetic' must be an object");
        cfg.synthetic = parse_synthetic(root["synthetic"]);
    }
    if (cfg.graph_file.has_value() == cfg.synthetic.has_value())
        throw ConfigError("config: exactly one of 'graph_file' or 'synthetic' is required");

    cfg.attack = want_string(root, "attack", cfg.attack);
    if (!known_attack(cfg.attack))
        throw ConfigError("config: unknown attack '" + cfg.attack +
                          "' (expected grasp, p1, p2, p3, p4, worm or fg)");
    if (root.contains("defense")) {
        if (!root["defense"].is_object()) throw ConfigError("config: 'defense' must be an object");
        cfg.defense = parse_defense(root["defense"]);
    }
    if (root.contains("behavior")) {
        if (!root["behavior"].is_object())
            throw ConfigError("config: 'behavior' must be an object");
        cfg.behavior = parse_behavior(root["behavior"]);
    }
    cfg.victim_mode = want_string(root, "victim", cfg.victim_mode);
    if (cfg.victim_mode != "simulated" && cfg.victim_mode != "remote")
        throw ConfigError("config: 'victim' must be 'simulated' or 'remote'");
    if (root.contains("remote")) {
        if (!root["remote"].is_object()) throw ConfigError("config: 'remote' must be an object");
        cfg.remote = parse_remote(root["remote"]);
    }
    if (cfg.victim_mode == "remote") {
        if (cfg.remote.base_url.empty() || cfg.remote.model.empty() ||
            cfg.remote.credential_env.empty())
            throw ConfigError(
                "config: remote victim requires remote.base_url, remote.model and "
                "remote.credential_env");
        if (cfg.remote.max_in_flight < 1)
            throw ConfigError("config: remote.max_in_flight must be at least 1");
    }

    cfg.q_max = want_int(root, "q_max", cfg.q_max);
    cfg.k_entities = want_int(root, "k_entities", cfg.k_entities);
    cfg.k_relations = want_int(root, "k_relations", cfg.k_relations);
    cfg.window_turns = want_int(root, "window_turns", cfg.window_turns);
    cfg.alpha = want_number(root, "alpha", cfg.alpha);
    cfg.stop_threshold = want_number(root, "stop_threshold", cfg.stop_threshold);
    cfg.activate_threshold = want_number(root, "activate_threshold", cfg.activate_threshold);
    cfg.tau = want_int(root, "tau", cfg.tau);
    cfg.residual_cap = want_int(root, "residual_cap", cfg.residual_cap);
    cfg.frames = want_string(root, "frames", cfg.frames);
    if (root.contains("custom_frames")) {
        if (!root["custom_frames"].is_array())
            throw ConfigError("config: 'custom_frames' must be an array of strings");
        for (const auto& v : root["custom_frames"]) {
            if (!v.is_string())
                throw ConfigError("config: 'custom_frames' must contain only strings");
            cfg.custom_frames.push_back(v.get<std::string>());
        }
    }
    cfg.n_targets = want_int(root, "n_targets", cfg.n_targets);
    cfg.min_degree = want_int(root, "min_degree", cfg.min_degree);
    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned() && !root["seed"].is_number_integer())
            throw ConfigError("config: 'seed' must be an integer");
        cfg.seed = root["seed"].get<uint64_t>();
    }
    cfg.workers = want_int(root, "workers", cfg.workers);
    cfg.out_dir = want_string(root, "out_dir", cfg.out_dir);
    cfg.utility_qa_file = want_string(root, "utility_qa_file", cfg.utility_qa_file);
    cfg.expand_neighbors = want_bool(root, "expand_neighbors", cfg.expand_neighbors);

    if (cfg.q_max < 1) throw ConfigError("config: q_max must be at least 1");
    if (cfg.k_entities < 0 || cfg.k_relations < 0)
        throw ConfigError("config: k_entities and k_relations must be non-negative");
    if (cfg.window_turns < 1) throw ConfigError("config: window_turns must be at least 1");
    if (cfg.alpha <= 0 || cfg.alpha > 1) throw ConfigError("config: alpha must lie in (0, 1]");
    if (cfg.stop_threshold < 0 || cfg.activate_threshold < 0)
        throw ConfigError("config: thresholds must be non-negative");
    if (cfg.tau < 1) throw ConfigError("config: tau must be at least 1");
    if (cfg.residual_cap < 1) throw ConfigError("config: residual_cap must be at least 1");
    if (cfg.n_targets < 1) throw ConfigError("config: n_targets must be at least 1");
    if (cfg.min_degree < 0) throw ConfigError("config: min_degree must be non-negative");
    if (cfg.workers < 0) throw ConfigError("config: workers must be non-negative");
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    return parse_config_text(read_file(path), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    ordered_json root;
    if (cfg.graph_file.has_value()) root["graph_file"] = *cfg.graph_file;
    if (cfg.synthetic.has_value()) {
        ordered_json s;
        s["entities"] = cfg.synthetic->entities;
        s["relation_types"] = cfg.synthetic->relation_types;
        s["edges"] = cfg.synthetic->edges;
        s["min_degree_floor"] = cfg.synthetic->min_degree_floor;
        s["floor_count"] = cfg.synthetic->floor_count;
        s["directed"] = cfg.synthetic->directed;
        root["synthetic"] = s;
    }
    root["attack"] = cfg.attack;
    ordered_json d;
    d["safe_prompt"] = cfg.defense.safe_prompt;
    d["summarization"] = summarization_name(cfg.defense.summarization);
    d["reject"] = cfg.defense.reject;
    d["id_alignment"] = cfg.defense.id_alignment;
    d["decoy"] = cfg.defense.decoy;
    root["defense"] = d;
    ordered_json b;
    b["refusal_prob"] = cfg.behavior.refusal_prob;
    b["paraphrase_prob"] = cfg.behavior.paraphrase_prob;
    b["base_mixing_prob"] = cfg.behavior.base_mixing_prob;
    b["aligned_id_mixing_prob"] = cfg.behavior.aligned_id_mixing_prob;
    b["decoy_confusion_prob"] = cfg.behavior.decoy_confusion_prob;
    b["reject_detection_recall"] = cfg.behavior.reject_detection_recall;
    ordered_json syn = ordered_json::object();
    for (const auto& [key, alts] : cfg.behavior.synonym_table) syn[key] = alts;
    b["synonyms"] = syn;
    root["behavior"] = b;
    root["victim"] = cfg.victim_mode;
    if (cfg.victim_mode == "remote") {
        ordered_json r;
        r["base_url"] = cfg.remote.base_url;
        r["path"] = cfg.remote.path;
        r["model"] = cfg.remote.model;
        r["credential_env"] = cfg.remote.credential_env;
        r["temperature"] = cfg.remote.temperature;
        r["timeout_ms"] = cfg.remote.timeout_ms;
        r["max_retries"] = cfg.remote.max_retries;
        r["retry_backoff_ms"] = cfg.remote.retry_backoff_ms;
        r["max_in_flight"] = cfg.remote.max_in_flight;
        root["remote"] = r;
    }
    root["q_max"] = cfg.q_max;
    root["k_entities"] = cfg.k_entities;
    root["k_relations"] = cfg.k_relations;
    root["window_turns"] = cfg.window_turns;
    root["alpha"] = cfg.alpha;
    root["stop_threshold"] = cfg.stop_threshold;
    root["activate_threshold"] = cfg.activate_threshold;
    root["tau"] = cfg.tau;
    root["residual_cap"] = cfg.residual_cap;
    root["frames"] = cfg.frames;
    if (!cfg.custom_frames.empty()) root["custom_frames"] = cfg.custom_frames;
    root["n_targets"] = cfg.n_targets;
    root["min_degree"] = cfg.min_degree;
    root["seed"] = cfg.seed;
    root["workers"] = cfg.workers;
    root["out_dir"] = cfg.out_dir;
    root["utility_qa_file"] = cfg.utility_qa_file;
    root["expand_neighbors"] = cfg.expand_neighbors;
    return root.dump(2) + "\n";
}

std::vector<EntityId> sample_targets(const KnowledgeGraph& g, int n, int min_degree,
                                     uint64_t seed) {
    if (n < 1) throw ConfigError("target sample size must be at least 1");
    std::vector<EntityId> pool;
    for (const auto& e : g.entities())
        if (g.degree(e.id) >= min_degree) pool.push_back(e.id);
    std::sort(pool.begin(), pool.end(),
              [](const EntityId& a, const EntityId& b) { return a.key < b.key; });
    if (int(pool.size()) < n)
        throw ConfigError("only " + std::to_string(pool.size()) + " entities have degree >= " +
                          std::to_string(min_degree) + ", need " + std::to_string(n));
    Rng rng(mix_seed(seed, "target-sample"));
    rng.shuffle(pool);
    pool.resize(size_t(n));
    return pool;
}

std::string trace_to_jsonl(const std::vector<TargetTrace>& traces) {
    std::string out;
    for (const auto& t : traces)
        for (const auto& rec : t.result.trace) out += trace_record(t.target, rec).dump() + "\n";
    return out;
}

std::vector<TargetTrace> parse_trace_jsonl(const std::string& text) {
    std::vector<TargetTrace> traces;
    std::map<std::string, size_t> index;
    int line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string origin = "trace line " + std::to_string(line_no);
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(origin + ": " + e.what());
        }
        std::string target;
        try {
            target = row.at("target").get<std::string>();
        } catch (const json::exception& e) {
            throw ParseError(origin + ": missing target: " + e.what());
        }
        auto it = index.find(target);
        if (it == index.end()) {
            index[target] = traces.size();
            traces.push_back(TargetTrace{target, AttackResult{}});
            it = index.find(target);
        }
        traces[it->second].result.trace.push_back(record_from_json(row, origin));
    }
    for (auto& t : traces) {
        AttackResult rebuilt = replay_target(t.result.trace);
        t.result = std::move(rebuilt);
    }
    return traces;
}

std::vector<TargetTrace> load_trace_jsonl(const std::string& path) {
    return parse_trace_jsonl(read_file(path));
}

ExperimentReport replay_report(const std::vector<TargetTrace>& traces,
                               const KnowledgeGraph& graph) {
    std::vector<TargetResult> rows;
    rows.reserve(traces.size());
    for (const auto& t : traces) {
        AttackResult replayed = replay_target(t.result.trace);
        rows.push_back(score_trace_target(t.target, replayed, graph, !t.result.trace.empty()));
    }
    std::vector<ParsedResponse> responses = collect_responses(traces);
    double rejection = responses.empty() ? 0.0 : rejection_rate(responses);
    return summarize(rows, rejection, std::nullopt);
}

std::vector<UtilityQA> load_utility_qa(const std::string& path) {
    json root;
    try {
        root = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!root.is_array()) throw ConfigError(path + ": utility QA root must be an array");
    std::vector<UtilityQA> out;
    for (size_t i = 0; i < root.size(); ++i) {
        const auto& item = root[i];
        if (!item.is_object() || !item.contains("question") || !item["question"].is_string() ||
            !item.contains("reference") || !item["reference"].is_string())
            throw ConfigError(path + ": entry " + std::to_string(i) +
                              " must be {question, reference}");
        out.push_back(UtilityQA{item["question"].get<std::string>(),
                                item["reference"].get<std::string>()});
    }
    return out;
}

std::string per_turn_recall_csv(const std::vector<TargetTrace>& traces,
                                const KnowledgeGraph& graph) {
    int max_turns = 0;
    for (const auto& t : traces) max_turns = std::max(max_turns, int(t.result.trace.size()));
    std::string csv = "turn,mean_rtype_recall\n";
    for (int cut = 1; cut <= max_turns; ++cut) {
        double total = 0.0;
        for (const auto& t : traces) {
            std::vector<TurnRecord> head(t.result.trace.begin(),
                                         t.result.trace.begin() +
                                             std::min<size_t>(size_t(cut), t.result.trace.size()));
            AttackResult partial = replay_target(head);
            TargetResult row = score_trace_target(t.target, partial, graph, true);
            total += row.rtype.recall;
        }
        double mean = traces.empty() ? 0.0 : total / double(traces.size());
        csv += std::to_string(cut) + "," + format_double(mean) + "\n";
    }
    return csv;
}

ExperimentRun run_experiment(const ExperimentConfig& cfg) {
    ExperimentRun run;
    if (cfg.graph_file.has_value())
        run.graph = load_graph(*cfg.graph_file);
    else
        run.graph = generate_synthetic(*cfg.synthetic, cfg.seed);

    TrigramHashEmbedder embedder;
    RetrievalIndex index;
    index.build(run.graph, embedder);
    SystemPrompt prompt = assemble_system_prompt(cfg.defense);
    AnchorFrameSet frames = resolve_frames(cfg);

    std::vector<EntityId> targets =
        sample_targets(run.graph, cfg.n_targets, cfg.min_degree, cfg.seed);
    std::vector<PerTargetOutcome> outcomes = run_pool(cfg, index, prompt, frames, targets);

    if (cfg.expand_neighbors) {
        std::set<std::string> attacked;
        for (const auto& t : targets) attacked.insert(t.key);
        std::vector<EntityId> wave2;
        for (size_t i = 0; i < targets.size(); ++i) {
            for (const auto& n :
                 recovered_neighbors(run.graph, targets[i], outcomes[i].result.extracted)) {
                if (attacked.insert(n.key).second) wave2.push_back(n);
            }
        }
        std::vector<PerTargetOutcome> extra = run_pool(cfg, index, prompt, frames, wave2);
        targets.insert(targets.end(), wave2.begin(), wave2.end());
        outcomes.insert(outcomes.end(), std::make_move_iterator(extra.begin()),
                        std::make_move_iterator(extra.end()));
    }

    std::vector<TargetResult> rows;
    rows.reserve(targets.size());
    for (size_t i = 0; i < targets.size(); ++i) {
        run.traces.push_back(TargetTrace{targets[i].text, outcomes[i].result});
        rows.push_back(score_trace_target(targets[i].text, outcomes[i].result, run.graph,
                                          outcomes[i].complete));
    }

    std::vector<ParsedResponse> responses = collect_responses(run.traces);
    double rejection = responses.empty() ? 0.0 : rejection_rate(responses);
    std::optional<double> utility;
    if (!cfg.utility_qa_file.empty()) utility = run_utility(cfg, index, prompt);
    run.report = summarize(rows, rejection, utility);

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        auto path = [&](const char* name) {
            return (std::filesystem::path(cfg.out_dir) / name).string();
        };
        write_file(path("graph.json"), serialize_graph(run.graph));
        write_file(path("config.json"), serialize_config(cfg));
        write_file(path("trace.jsonl"), trace_to_jsonl(run.traces));
        write_file(path("report.csv"), report_to_csv(run.report));

        ordered_json summary;
        summary["attack"] = cfg.attack;
        summary["victim"] = cfg.victim_mode;
        summary["targets"] = run.report.targets.size();
        summary["rejection_rate"] = run.report.rejection;
        if (run.report.utility.has_value())
            summary["utility_rouge_l"] = *run.report.utility;
        else
            summary["utility_rouge_l"] = nullptr;
        ordered_json macro_r, macro_n;
        macro_r["precision"] = run.report.macro_rtype.precision;
        macro_r["recall"] = run.report.macro_rtype.recall;
        macro_r["f1"] = run.report.macro_rtype.f1;
        macro_n["precision"] = run.report.macro_naive.precision;
        macro_n["recall"] = run.report.macro_naive.recall;
        macro_n["f1"] = run.report.macro_naive.f1;
        summary["macro_rtype"] = macro_r;
        summary["macro_naive"] = macro_n;
        int budget = 0, floor = 0;
        for (const auto& t : run.traces) {
            if (t.result.stop_reason == "novelty_floor")
                ++floor;
            else
                ++budget;
        }
        ordered_json stops;
        stops["budget"] = budget;
        stops["novelty_floor"] = floor;
        summary["stop_reasons"] = stops;
        ordered_json incomplete = ordered_json::array();
        for (size_t i = 0; i < outcomes.size(); ++i) {
            if (outcomes[i].complete) continue;
            ordered_json item;
            item["target"] = targets[i].text;
            item["error"] = outcomes[i].error;
            incomplete.push_back(item);
        }
        summary["incomplete_targets"] = incomplete;
        write_file(path("summary.json"), summary.dump(2) + "\n");

        // Wall-clock timings live here and only here so that every other
        // artifact is byte-stable across reruns.
        std::string timings = "target,turn,duration_ms\n";
        for (const auto& t : run.traces)
            for (const auto& rec : t.result.trace)
                timings += "\"" + t.target + "\"," + std::to_string(rec.turn) + "," +
                           format_double(rec.duration_ms) + "\n";
        write_file(path("timings.csv"), timings);
    }
    return run;
}

}  // namespace grasplab
