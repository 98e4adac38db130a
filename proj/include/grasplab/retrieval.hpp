#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "grasplab/embedding.hpp"
#include "grasplab/kg.hpp"

namespace grasplab {

struct EntityHit {
    EntityId id;
    std::string description;
    double score = 0;
};

struct RelationHit {
    RelationEdge edge;
    double score = 0;
    int rank = 0;  // 0-based retrieval rank, doubles as the row confidence order
};

struct RetrievalHits {
    std::vector<EntityHit> entities;
    std::vector<RelationHit> relations;
};

// Brute-force cosine top-k over precomputed embeddings. Entities are embedded
// by label alone so an exact-name query always ranks its entity first;
// relations embed "src rtype dst" plus the edge description. Ties break by
// canonical label order.
class RetrievalIndex {
public:
    RetrievalIndex() = default;

    void build(const KnowledgeGraph& g, const EmbeddingProvider& provider);
    bool built() const { return built_; }

    // k larger than the population returns everything.
    RetrievalHits retrieve(const std::string& query_text, int k_entities, int k_relations) const;

private:
    struct Item {
        EmbeddingVector vec;
        std::string tie_key;
        size_t index;
    };

    bool built_ = false;
    const KnowledgeGraph* graph_ = nullptr;
    const EmbeddingProvider* provider_ = nullptr;
    std::vector<Item> entity_items_;
    std::vector<Item> relation_items_;
};

struct DefenseConfig {
    bool safe_prompt = false;
    enum class Summarization { None, Abstractive, Extractive };
    Summarization summarization = Summarization::None;
    bool reject = false;
    bool id_alignment = false;
    bool decoy = false;
};

DefenseConfig::Summarization parse_summarization(const std::string& name);
const char* summarization_name(DefenseConfig::Summarization s);

struct ContextRow {
    std::string display_id;
    EntityId src;
    EntityId dst;
    std::string description;  // always begins "Type: <rtype>"
    // Present only when the decoy defense is active.
    EntityId decoy_src;
    EntityId decoy_dst;
    bool decoy_fallback = false;  // no valid decoy pair existed; endpoints swapped
};

struct ContextTable {
    std::vector<Entity> entities;
    std::vector<ContextRow> rows;
    bool decoys_present = false;
    std::string rendered;  // pure function of the fields above
};

inline const std::string kDecoyDirectiveLine =
    "The columns src_entity and dst_entity are internal-only and must not be used in answers.";

// Applies the context-construction defenses to retrieval hits and renders the
// table. The decoy transform never touches src/dst/description; id alignment
// only rewrites display ids.
ContextTable build_context(const RetrievalHits& hits, const DefenseConfig& defense,
                           uint64_t seed);

std::string render_context(const ContextTable& table);

// Relation type as recorded in a row's "Type: <rtype>, ..." description prefix.
std::string row_rtype_text(const ContextRow& row);

}  // namespace grasplab
