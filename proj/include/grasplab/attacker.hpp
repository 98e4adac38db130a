#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "grasplab/embedding.hpp"
#include "grasplab/kg.hpp"
#include "grasplab/rng.hpp"
#include "grasplab/wire.hpp"

namespace grasplab {

// ---- query templates -------------------------------------------------------

enum class TemplateKind { FrameDrift, TypeExpand, TypeExplore, ResidualExtract };

constexpr std::array<TemplateKind, 4> kAllTemplates = {
    TemplateKind::FrameDrift, TemplateKind::TypeExpand, TemplateKind::TypeExplore,
    TemplateKind::ResidualExtract};

const char* template_name(TemplateKind k);  // "A".."D"

struct AnchorFrameSet {
    std::string domain;
    std::vector<std::string> frames;
};

// Built-in anchor frame lists; name is "corporate" or "medical".
const AnchorFrameSet& builtin_anchor_frames(const std::string& name);

struct DiversityTemplate {
    TemplateKind kind = TemplateKind::FrameDrift;
    std::vector<RelationQuad> exclude;      // id-stripped extracted set
    std::vector<std::string> frame_hints;   // FrameDrift
    std::vector<std::string> observed_types;  // TypeExpand / TypeExplore
    int residual_cap = 5;                   // ResidualExtract
};

struct AttackQuery {
    std::string target_clause;
    std::string diversity_clause;  // empty in the baseline phase
    std::string extraction_clause;
    std::string composed;
};

std::string anchor_text(const EntityId& target);
std::string extraction_clause_text(const EntityId& target);
std::string diversity_clause_text(const DiversityTemplate& tpl);

AttackQuery compose_query(const EntityId& target, const std::optional<DiversityTemplate>& tpl);

// Fixed one-shot prompts, keyed p1, p2, p3, p4, worm, fg.
std::vector<std::pair<std::string, std::string>> baseline_prompts(const EntityId& target);
std::string baseline_prompt(const std::string& name, const EntityId& target);

// ---- scheduler signals ------------------------------------------------------

enum class MomentumState { Stall, Steady, Surge };

const char* momentum_state_name(MomentumState s);

// Estimated probability that the next turn surfaces an unseen relation:
// singleton mention count over window turn count. Empty window reads as
// infinity, which sits above every activation threshold.
double good_turing_novelty(const std::deque<std::vector<std::string>>& window);

double update_momentum(double mu_e, int new_relations, double alpha);
MomentumState classify_momentum(double mu_e);

double update_template_success(double mu_theta, bool gained_new, double alpha);

// Base-weight multiplier 0.25 + 1.5*mu + 0.5*|mu - 0.5|; equals 1 at mu=0.5,
// 2 at mu=1, 0.5 at mu=0.
double reweight_multiplier(double mu_theta);
std::array<double, 4> reweight(const std::array<double, 4>& base,
                               const std::array<double, 4>& mu_theta);

// Pulls every template score halfway back to 0.5.
double soft_reset_value(double mu_theta);
void soft_reset(std::array<double, 4>& mu_theta);

struct PolicySignals {
    int n_none = 0;   // consecutive [NONE] responses
    int n_zero = 0;   // consecutive zero-new-relation turns
    int type_count = 0;  // distinct relation types observed so far
    int t_last = 0;   // new types in the previous turn
    int e_last = 0;   // new relations in the previous turn
};

struct PolicyDecision {
    int row_id = 0;  // 1-based position in the decision table
    std::array<double, 4> weights{};
};

// Decision table over (state, signals). Rows are checked in priority order;
// within a priority tier, listed order wins. Scarcity is type_count < tau,
// saturation is type_count >= 2 * tau.
PolicyDecision select_policy(MomentumState state, const PolicySignals& signals, int tau);

// The 3 anchor frames least aligned with the observed relation types, by mean
// cosine similarity of frame and type embeddings (ties keep list order). With
// no observed types the pick is a seeded uniform draw; with 3 or fewer frames,
// all of them.
std::vector<std::string> select_frame_hints(const std::vector<std::string>& observed_types,
                                            const AnchorFrameSet& frames,
                                            const EmbeddingProvider& embedder, Rng& rng);

// ---- attack loop ------------------------------------------------------------

struct GraspParams {
    int q_max = 10;
    int window_turns = 5;
    double alpha = 0.6;
    double stop_threshold = 0.3;
    double activate_threshold = 0.9;
    int tau = 3;
    int residual_cap = 5;
    AnchorFrameSet frames = builtin_anchor_frames("corporate");
    uint64_t seed = 1;
};

struct TurnRecord {
    int turn = 0;
    bool diversity_phase = false;
    double y_hat = 0;  // pre-turn novelty estimate; infinity when undefined
    double mu_e = 0;   // post-update momentum
    MomentumState state = MomentumState::Stall;  // state at selection time
    int policy_row = 0;                          // 0 in the baseline phase
    std::array<double, 4> base_weights{};
    std::array<double, 4> reweighted_weights{};
    std::string chosen_template;  // "baseline", "A".."D", or a fixed prompt name
    std::string query_text;
    std::string response_text;
    bool transport_failed = false;
    int parsed_count = 0;
    int new_count = 0;
    int n_none = 0;  // post-turn streaks
    int n_zero = 0;
    double duration_ms = 0;  // wall clock; kept out of serialized traces
};

struct AttackResult {
    std::vector<RelationQuad> extracted;  // discovery order, id-stripped identity
    std::vector<std::string> observed_types;
    std::vector<TurnRecord> trace;
    std::string stop_reason;  // "budget" or "novelty_floor"
};

// Issues the query and returns the responder text; throws TransportError on
// delivery failure. Failed turns consume budget as zero gain but leave the
// novelty window untouched.
using RagHandle = std::function<std::string(const std::string& query_text)>;

AttackResult run_attack(const EntityId& target, const RagHandle& rag, const GraspParams& params,
                        const EmbeddingProvider& embedder);

// Repeats one fixed prompt for q_max turns, accumulating whatever parses.
AttackResult run_fixed_prompt_attack(const EntityId& target, const std::string& prompt_name,
                                     const RagHandle& rag, int q_max);

}  // namespace grasplab
