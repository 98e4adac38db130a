#include "grasplab/retrieval.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>

#include "grasplab/errors.hpp"
#include "grasplab/rng.hpp"

namespace grasplab {

namespace {

std::string sanitize_cell(std::string s) {
    s = replace_all(std::move(s), "|", "/");
    s = replace_all(std::move(s), "\n", " ");
    s = replace_all(std::move(s), "\r", " ");
    return s;
}

std::string hex_id(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "R%08" PRIx64, h & 0xffffffffull);
    return buf;
}

// Ensures the description carries the row's relation type up front exactly
// once.
std::string typed_description(const RelationEdge& e) {
    std::string rest = e.description;
    if (starts_with(rest, "Type: ")) {
        size_t cut = rest.find(',');
        std::string head = trim(rest.substr(6, cut == std::string::npos ? std::string::npos
                                                                        : cut - 6));
        if (canonical_key(head) == e.rtype.key)
            rest = cut == std::string::npos ? "" : trim(rest.substr(cut + 1));
    }
    std::string out = "Type: " + e.rtype.text;
    if (!rest.empty()) out += ", " + rest;
    return out;
}

}  // namespace

void RetrievalIndex::build(const KnowledgeGraph& g, const EmbeddingProvider& provider) {
    graph_ = &g;
    provider_ = &provider;
    entity_items_.clear();
    relation_items_.clear();
    entity_items_.reserve(g.entities().size());
    for (size_t i = 0; i < g.entities().size(); ++i) {
        const auto& e = g.entities()[i];
        entity_items_.push_back(Item{provider.embed(e.id.text), e.id.key, i});
    }
    relation_items_.reserve(g.edges().size());
    for (size_t i = 0; i < g.edges().size(); ++i) {
        const auto& e = g.edges()[i];
        std::string text = e.src.text + " " + e.rtype.text + " " + e.dst.text;
        if (!e.description.empty()) text += " " + e.description;
        relation_items_.push_back(Item{provider.embed(text), edge_key(e, g.directed()), i});
    }
    built_ = true;
}

RetrievalHits RetrievalIndex::retrieve(const std::string& query_text, int k_entities,
                                       int k_relations) const {
    if (!built_) throw StateError("retrieval index used before build()");
    if (k_entities < 0 || k_relations < 0)
        throw ContractError("retrieve requires non-negative k");

    EmbeddingVector q = provider_->embed(query_text);

    auto ranked = [&](const std::vector<Item>& items, int k) {
        std::vector<std::pair<double, size_t>> scored;  // (similarity, item position)
        scored.reserve(items.size());
        for (size_t i = 0; i < items.size(); ++i)
            scored.emplace_back(cosine_similarity(q, items[i].vec), i);
        std::stable_sort(scored.begin(), scored.end(),
                         [&](const auto& a, const auto& b) {
                             if (a.first != b.first) return a.first > b.first;
                             return items[a.second].tie_key < items[b.second].tie_key;
                         });
        if (static_cast<size_t>(k) < scored.size()) scored.resize(k);
        return scored;
    };

    RetrievalHits hits;
    for (const auto& [score, pos] : ranked(entity_items_, k_entities)) {
        const auto& ent = graph_->entities()[entity_items_[pos].index];
        hits.entities.push_back(EntityHit{ent.id, ent.description, score});
    }
    int rank = 0;
    for (const auto& [score, pos] : ranked(relation_items_, k_relations)) {
        const auto& edge = graph_->edges()[relation_items_[pos].index];
        hits.relations.push_back(RelationHit{edge, score, rank++});
    }
    return hits;
}

DefenseConfig::Summarization parse_summarization(const std::string& name) {
    std::string n = to_lower_ascii(trim(name));
    if (n.empty() || n == "none") return DefenseConfig::Summarization::None;
    if (n == "abstractive") return DefenseConfig::Summarization::Abstractive;
    if (n == "extractive") return DefenseConfig::Summarization::Extractive;
    throw ConfigError("unknown summarization mode: " + name);
}

const char* summarization_name(DefenseConfig::Summarization s) {
    switch (s) {
        case DefenseConfig::Summarization::None: return "none";
        case DefenseConfig::Summarization::Abstractive: return "abstractive";
        case DefenseConfig::Summarization::Extractive: return "extractive";
    }
    return "none";
}

ContextTable build_context(const RetrievalHits& hits, const DefenseConfig& defense,
                           uint64_t seed) {
    ContextTable table;
    table.decoys_present = defense.decoy;
    for (const auto& eh : hits.entities)
        table.entities.push_back(Entity{eh.id, eh.description});

    std::unordered_set<std::string> used_ids;
    for (const auto& rh : hits.relations) {
        ContextRow row;
        row.src = rh.edge.src;
        row.dst = rh.edge.dst;
        row.description = typed_description(rh.edge);
        if (defense.id_alignment) {
            row.display_id = "1";
        } else {
            std::string id = hex_id(fnv1a64(edge_key(rh.edge, true)));
            int bump = 2;
            while (!used_ids.insert(id).second) id = hex_id(fnv1a64(edge_key(rh.edge, true))) +
                                                      "-" + std::to_string(bump++);
            row.display_id = id;
        }
        table.rows.push_back(std::move(row));
    }

    if (defense.decoy) {
        // Endpoint pool: every entity named anywhere in the table, in first
        // appearance order.
        std::vector<EntityId> pool;
        std::unordered_set<std::string> seen;
        auto add = [&](const EntityId& id) {
            if (seen.insert(id.key).second) pool.push_back(id);
        };
        for (const auto& e : table.entities) add(e.id);
        for (const auto& r : table.rows) {
            add(r.src);
            add(r.dst);
        }
        Rng rng(mix_seed(seed, "decoy"));
        for (auto& row : table.rows) {
            bool placed = false;
            for (int attempt = 0; attempt < 16 && !pool.empty(); ++attempt) {
                EntityId a = pool[rng.below(pool.size())];
                EntityId b = pool[rng.below(pool.size())];
                if (a == row.src && b == row.dst) continue;
                row.decoy_src = a;
                row.decoy_dst = b;
                placed = true;
                break;
            }
            if (!placed) {
                // Deterministic scan before giving up.
                for (const auto& a : pool) {
                    for (const auto& b : pool) {
                        if (a == row.src && b == row.dst) continue;
                        row.decoy_src = a;
                        row.decoy_dst = b;
                        placed = true;
                        break;
                    }
                    if (placed) break;
                }
            }
            if (!placed) {
                row.decoy_src = row.dst;
                row.decoy_dst = row.src;
                row.decoy_fallback = true;
            }
        }
    }

    table.rendered = render_context(table);
    return table;
}

std::string render_context(const ContextTable& table) {
    std::string out = "Entities:\n";
    out += "entity | description\n";
    for (const auto& e : table.entities)
        out += sanitize_cell(e.id.text) + " | " + sanitize_cell(e.description) + "\n";
    out += "\nRelations:\n";
    if (table.decoys_present) {
        out += kDecoyDirectiveLine + "\n";
        out += "id | src_entity | dst_entity | src | dst | description\n";
        for (const auto& r : table.rows)
            out += sanitize_cell(r.display_id) + " | " + sanitize_cell(r.decoy_src.text) + " | " +
                   sanitize_cell(r.decoy_dst.text) + " | " + sanitize_cell(r.src.text) + " | " +
                   sanitize_cell(r.dst.text) + " | " + sanitize_cell(r.description) + "\n";
    } else {
        out += "id | src | dst | description\n";
        for (const auto& r : table.rows)
            out += sanitize_cell(r.display_id) + " | " + sanitize_cell(r.src.text) + " | " +
                   sanitize_cell(r.dst.text) + " | " + sanitize_cell(r.description) + "\n";
    }
    return out;
}

std::string row_rtype_text(const ContextRow& row) {
    if (!starts_with(row.description, "Type: ")) return "";
    size_t cut = row.description.find(',');
    return trim(row.description.substr(6, cut == std::string::npos ? std::string::npos : cut - 6));
}

}  // namespace grasplab
