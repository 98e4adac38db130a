#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grasplab/attacker.hpp"
#include "grasplab/eval.hpp"
#include "grasplab/kg.hpp"
#include "grasplab/remote.hpp"
#include "grasplab/victim.hpp"

namespace grasplab {

struct UtilityQA {
    std::string question;
    std::string reference;
};

struct ExperimentConfig {
    // Exactly one graph source must be set.
    std::optional<std::string> graph_file;
    std::optional<SyntheticSpec> synthetic;

    std::string attack = "grasp";  // grasp, p1, p2, p3, p4, worm, fg
    DefenseConfig defense;
    ResponderBehavior behavior;
    std::string victim_mode = "simulated";  // simulated or remote
    RemoteEndpointConfig remote;

    int q_max = 10;
    int k_entities = 10;
    int k_relations = 10;
    int window_turns = 5;
    double alpha = 0.6;
    double stop_threshold = 0.3;
    double activate_threshold = 0.9;
    int tau = 3;
    int residual_cap = 5;
    std::string frames = "corporate";
    std::vector<std::string> custom_frames;  // overrides `frames` when non-empty

    int n_targets = 50;
    int min_degree = 5;
    uint64_t seed = 1;
    int workers = 0;  // 0 = hardware concurrency
    std::string out_dir;
    std::string utility_qa_file;
    bool expand_neighbors = false;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin);
std::string serialize_config(const ExperimentConfig& config);

// Seeded uniform sample (without replacement) of entities with degree at
// least min_degree. Raises ConfigError naming the shortfall when fewer than n
// qualify.
std::vector<EntityId> sample_targets(const KnowledgeGraph& g, int n, int min_degree,
                                     uint64_t seed);

struct TargetTrace {
    std::string target;
    AttackResult result;
};

struct ExperimentRun {
    KnowledgeGraph graph;
    ExperimentReport report;
    std::vector<TargetTrace> traces;
};

// Runs the configured attack over sampled targets with a bounded worker pool.
// When out_dir is set, writes graph.json, config.json, trace.jsonl,
// report.csv, summary.json and timings.csv. Every artifact except
// timings.csv is a pure function of (config, seed).
ExperimentRun run_experiment(const ExperimentConfig& config);

std::string trace_to_jsonl(const std::vector<TargetTrace>& traces);
std::vector<TargetTrace> parse_trace_jsonl(const std::string& text);
std::vector<TargetTrace> load_trace_jsonl(const std::string& path);

// Rebuilds the report from serialized traces alone: re-parses each response,
// re-accumulates the extracted set, re-scores against the graph and recounts
// rejections. Utility is not replayable and stays unset.
ExperimentReport replay_report(const std::vector<TargetTrace>& traces,
                               const KnowledgeGraph& graph);

std::vector<UtilityQA> load_utility_qa(const std::string& path);

// Cumulative per-turn recall rows for plotting: turn, mean RType recall over
// targets after that many turns.
std::string per_turn_recall_csv(const std::vector<TargetTrace>& traces,
                                const KnowledgeGraph& graph);

}  // namespace grasplab
