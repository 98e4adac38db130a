#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grasplab/retrieval.hpp"
#include "grasplab/wire.hpp"

namespace grasplab {

struct SystemPrompt {
    std::string base_text;
    std::vector<std::string> clauses;

    std::string full_text() const;
    bool has_reject_clause() const;
};

// Fixed prompt texts for the protection clauses.
const std::string& base_system_text();
const std::string& safe_clause_tables();
const std::string& safe_clause_graph();
const std::string& abstractive_clause();
const std::string& extractive_clause();
const std::string& reject_clause();

SystemPrompt assemble_system_prompt(const DefenseConfig& defense);

// Tunable compliance model for the simulated responder. Probabilities are all
// per-turn or per-row Bernoulli draws from the turn seed.
struct ResponderBehavior {
    double refusal_prob = 0.0;
    double paraphrase_prob = 0.0;
    double base_mixing_prob = 0.0;
    double aligned_id_mixing_prob = 0.0;  // used when every display id is identical
    double decoy_confusion_prob = 0.0;
    double reject_detection_recall = 0.85;
    std::map<std::string, std::vector<std::string>> synonym_table;  // keyed by canonical rtype
};

// What the simulated responder reads out of an attack query.
struct QueryDirectives {
    bool extraction_framed = false;
    std::string target;
    std::vector<RelationQuad> exclude;  // id-stripped
    enum class Selector { None, Frame, ObservedTypes, NovelTypes, Residual };
    Selector selector = Selector::None;
    std::vector<std::string> frame_hints;
    std::vector<std::string> type_list;
    int residual_cap = 0;
};

QueryDirectives parse_query_directives(const std::string& query_text);

struct VictimResponse {
    std::string text;
    uint64_t turn_seed = 0;
};

// Closed-box simulated victim. Extraction-framed queries run the pipeline:
// reject detection, refusal draw, then faithful execution of the query's
// instructions against the table with per-row decoy/mixing/paraphrase noise.
// Benign queries answer from true fields only and never read decoy columns.
VictimResponse respond_simulated(const SystemPrompt& prompt, const ContextTable& table,
                                 const std::string& query_text,
                                 const ResponderBehavior& behavior, uint64_t turn_seed);

// Deterministic benign answer used for utility scoring. Pure function of the
// true row fields and the query subject.
std::string benign_answer(const ContextTable& table, const std::string& query_text);

}  // namespace grasplab
