#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "grasplab/text.hpp"

namespace grasplab {

// Text label with a precomputed canonical comparison key. Original casing and
// spacing are kept for display; equality is canonical.
struct Label {
    std::string text;
    std::string key;

    Label() = default;
    explicit Label(std::string_view t) : text(trim(t)), key(canonical_key(t)) {}

    bool empty() const { return key.empty(); }
    bool operator==(const Label& o) const { return key == o.key; }
    bool operator!=(const Label& o) const { return key != o.key; }
};

using EntityId = Label;

struct Entity {
    EntityId id;
    std::string description;
};

struct RelationEdge {
    EntityId src;
    Label rtype;
    EntityId dst;
    std::string description;
};

using RelationSet = std::vector<RelationEdge>;

// Canonical identity of an edge. Undirected graphs treat (u, r, v) and
// (v, r, u) as the same edge.
std::string edge_key(const RelationEdge& e, bool directed);

// Rejects labels that would collide with the wire grammar or the rendered
// context table. rtype labels additionally reject ',' because relation types
// are embedded in the "Type: <rtype>, ..." description prefix.
void validate_entity_label(const std::string& text);
void validate_rtype_label(const std::string& text);

class KnowledgeGraph {
public:
    explicit KnowledgeGraph(bool directed = true) : directed_(directed) {}

    bool directed() const { return directed_; }
    const std::vector<Entity>& entities() const { return entities_; }
    const std::vector<RelationEdge>& edges() const { return edges_; }

    void add_entity(const std::string& label, const std::string& description);
    // Returns false when an equal edge (under graph equality) already exists.
    bool add_edge(const std::string& src, const std::string& rtype, const std::string& dst,
                  const std::string& description);

    bool has_entity(const EntityId& id) const { return entity_index_.count(id.key) > 0; }
    const Entity& entity(const EntityId& id) const;
    int degree(const EntityId& id) const;

    bool operator==(const KnowledgeGraph& o) const;

private:
    bool directed_;
    std::vector<Entity> entities_;
    std::vector<RelationEdge> edges_;
    std::unordered_map<std::string, size_t> entity_index_;
    std::unordered_set<std::string> edge_keys_;
    std::unordered_map<std::string, int> degree_;
};

// All edges with the target as either endpoint. Order follows graph edge
// order. Unknown target raises IntegrityError.
RelationSet one_hop(const KnowledgeGraph& g, const EntityId& target);

struct SyntheticSpec {
    int entities = 0;
    std::vector<std::string> relation_types;
    int edges = 0;
    int min_degree_floor = 0;  // applied to the first floor_count sampled entities
    int floor_count = 0;
    bool directed = true;
};

// Pure function of (spec, seed). Self-loops are never generated.
KnowledgeGraph generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

KnowledgeGraph load_graph(const std::string& path);
KnowledgeGraph parse_graph_text(const std::string& text, const std::string& origin);
void save_graph(const KnowledgeGraph& g, const std::string& path);
std::string serialize_graph(const KnowledgeGraph& g);

}  // namespace grasplab
