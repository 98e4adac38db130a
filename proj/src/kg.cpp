#include "grasplab/kg.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grasplab/errors.hpp"
#include "grasplab/rng.hpp"

namespace grasplab {

namespace {

constexpr char kFieldSep = '\x1f';

const char* kReservedLabelChars = "<>()[]|\"";

void validate_label_common(const std::string& text, const char* what) {
    std::string t = trim(text);
    if (canonical_key(t).empty())
        throw ConfigError(std::string(what) + " label is empty");
    for (char c : t) {
        if (static_cast<unsigned char>(c) < 0x20)
            throw ConfigError(std::string(what) + " label contains a control character: \"" + t + "\"");
        for (const char* r = kReservedLabelChars; *r; ++r)
            if (c == *r)
                throw ConfigError(std::string(what) + " label contains reserved character '" +
                                  std::string(1, *r) + "': \"" + t + "\"");
    }
}

}  // namespace

void validate_entity_label(const std::string& text) { validate_label_common(text, "entity"); }

void validate_rtype_label(const std::string& text) {
    validate_label_common(text, "relation type");
    if (trim(text).find(',') != std::string::npos)
        throw ConfigError("relation type label contains ',': \"" + trim(text) + "\"");
}

std::string edge_key(const RelationEdge& e, bool directed) {
    std::string a = e.src.key, b = e.dst.key;
    if (!directed && b < a) std::swap(a, b);
    std::string k;
    k.reserve(a.size() + b.size() + e.rtype.key.size() + 2);
    k += a;
    k += kFieldSep;
    k += e.rtype.key;
    k += kFieldSep;
    k += b;
    return k;
}

void KnowledgeGraph::add_entity(const std::string& label, const std::string& description) {
    validate_entity_label(label);
    EntityId id(label);
    if (entity_index_.count(id.key))
        throw IntegrityError("duplicate entity label: \"" + id.text + "\"");
    entity_index_[id.key] = entities_.size();
    entities_.push_back(Entity{id, description});
}

bool KnowledgeGraph::add_edge(const std::string& src, const std::string& rtype,
                              const std::string& dst, const std::string& description) {
    validate_entity_label(src);
    validate_entity_label(dst);
    validate_rtype_label(rtype);
    RelationEdge e{EntityId(src), Label(rtype), EntityId(dst), description};
    if (!has_entity(e.src))
        throw IntegrityError("edge endpoint not in entity list: \"" + e.src.text + "\"");
    if (!has_entity(e.dst))
        throw IntegrityError("edge endpoint not in entity list: \"" + e.dst.text + "\"");
    std::string k = edge_key(e, directed_);
    if (!edge_keys_.insert(k).second) return false;
    degree_[e.src.key] += 1;
    if (e.dst.key != e.src.key) degree_[e.dst.key] += 1;
    edges_.push_back(std::move(e));
    return true;
}

const Entity& KnowledgeGraph::entity(const EntityId& id) const {
    auto it = entity_index_.find(id.key);
    if (it == entity_index_.end())
        throw IntegrityError("entity not found: \"" + id.text + "\"");
    return entities_[it->second];
}

int KnowledgeGraph::degree(const EntityId& id) const {
    if (!has_entity(id)) throw IntegrityError("entity not found: \"" + id.text + "\"");
    auto it = degree_.find(id.key);
    return it == degree_.end() ? 0 : it->second;
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& o) const {
    if (directed_ != o.directed_) return false;
    if (entities_.size() != o.entities_.size() || edges_.size() != o.edges_.size()) return false;
    for (size_t i = 0; i < entities_.size(); ++i) {
        if (entities_[i].id.key != o.entities_[i].id.key ||
            entities_[i].description != o.entities_[i].description)
            return false;
    }
    for (size_t i = 0; i < edges_.size(); ++i) {
        if (edge_key(edges_[i], directed_) != edge_key(o.edges_[i], directed_) ||
            edges_[i].description != o.edges_[i].description)
            return false;
    }
    return true;
}

RelationSet one_hop(const KnowledgeGraph& g, const EntityId& target) {
    if (!g.has_entity(target))
        throw IntegrityError("entity not found: \"" + target.text + "\"");
    RelationSet out;
    for (const auto& e : g.edges())
        if (e.src == target || e.dst == target) out.push_back(e);
    return out;
}

KnowledgeGraph generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    if (spec.entities < 1) throw ConfigError("synthetic spec needs at least one entity");
    if (spec.edges < 0) throw ConfigError("synthetic spec has negative edge count");
    if (spec.relation_types.empty()) throw ConfigError("synthetic spec has no relation types");
    for (const auto& t : spec.relation_types) validate_rtype_label(t);
    if (spec.floor_count < 0 || spec.min_degree_floor < 0)
        throw ConfigError("degree floor parameters must be non-negative");
    if (spec.floor_count > spec.entities)
        throw ConfigError("floor_count exceeds entity count");
    if (spec.entities < 2 && spec.edges > 0)
        throw ConfigError("cannot place edges without at least two entities");

    // Distinct (ordered pair, type) capacity without self-loops.
    double pair_cap = static_cast<double>(spec.entities) * (spec.entities - 1);
    if (!spec.directed) pair_cap /= 2;
    double cap = pair_cap * static_cast<double>(spec.relation_types.size());
    if (static_cast<double>(spec.edges) > cap)
        throw ConfigError("requested edge count exceeds distinct edge capacity");
    if (spec.min_degree_floor > 0 && spec.floor_count > 0) {
        double reachable = static_cast<double>(spec.entities - 1) *
                           static_cast<double>(spec.relation_types.size());
        if (static_cast<double>(spec.min_degree_floor) > (spec.directed ? 2 * reachable : reachable))
            throw ConfigError("min_degree_floor exceeds reachable degree");
    }

    KnowledgeGraph g(spec.directed);
    int width = 1;
    for (int n = spec.entities; n >= 10; n /= 10) ++width;
    std::vector<std::string> labels(spec.entities);
    for (int i = 0; i < spec.entities; ++i) {
        std::string num = std::to_string(i + 1);
        while (static_cast<int>(num.size()) < width) num.insert(num.begin(), '0');
        labels[i] = "Entity " + num;
        g.add_entity(labels[i], "Profile record for " + labels[i] + ".");
    }

    Rng rng(mix_seed(seed, "synthetic-graph"));
    auto type_at = [&](size_t i) { return spec.relation_types[i]; };
    int placed = 0;
    long long attempts = 0;
    const long long attempt_cap = 200ll * (spec.edges + spec.min_degree_floor * spec.floor_count + 16);
    auto try_add = [&](int u, int v, size_t t) {
        if (u == v) return false;
        std::string desc = "Type: " + trim(type_at(t)) + ", synthetic record " +
                           std::to_string(placed + 1) + ".";
        if (!g.add_edge(labels[u], type_at(t), labels[v], desc)) return false;
        ++placed;
        return true;
    };

    std::vector<int> order(spec.entities);
    for (int i = 0; i < spec.entities; ++i) order[i] = i;
    rng.shuffle(order);

    for (int fi = 0; fi < spec.floor_count; ++fi) {
        int u = order[fi];
        while (g.degree(EntityId(labels[u])) < spec.min_degree_floor) {
            if (placed >= spec.edges)
                throw ConfigError("edge budget too small to satisfy the degree floor");
            if (++attempts > attempt_cap)
                throw ConfigError("synthetic generation could not satisfy the degree floor");
            int v = static_cast<int>(rng.below(spec.entities));
            size_t t = rng.below(spec.relation_types.size());
            bool as_src = spec.directed ? (rng.uniform01() < 0.5) : true;
            if (as_src)
                try_add(u, v, t);
            else
                try_add(v, u, t);
        }
    }

    while (placed < spec.edges) {
        if (++attempts > attempt_cap)
            throw ConfigError("synthetic generation could not place the requested edges");
        int u = static_cast<int>(rng.below(spec.entities));
        int v = static_cast<int>(rng.below(spec.entities));
        size_t t = rng.below(spec.relation_types.size());
        try_add(u, v, t);
    }
    return g;
}

std::string serialize_graph(const KnowledgeGraph& g) {
    nlohmann::ordered_json j;
    j["directed"] = g.directed();
    j["entities"] = nlohmann::ordered_json::array();
    for (const auto& e : g.entities())
        j["entities"].push_back({{"id", e.id.text}, {"description", e.description}});
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : g.edges())
        j["edges"].push_back({{"src", e.src.text},
                              {"rtype", e.rtype.text},
                              {"dst", e.dst.text},
                              {"description", e.description}});
    return j.dump(2) + "\n";
}

void save_graph(const KnowledgeGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open graph file for writing: " + path);
    out << serialize_graph(g);
}

KnowledgeGraph parse_graph_text(const std::string& text, const std::string& origin) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(origin + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("entities") || !j.contains("edges"))
        throw ParseError(origin + ": graph document needs \"entities\" and \"edges\" arrays");
    bool directed = j.value("directed", true);
    KnowledgeGraph g(directed);
    const auto& ents = j["entities"];
    if (!ents.is_array()) throw ParseError(origin + ": \"entities\" is not an array");
    for (size_t i = 0; i < ents.size(); ++i) {
        const auto& rec = ents[i];
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string())
            throw ParseError(origin + ": entities[" + std::to_string(i) + "] is malformed");
        try {
            g.add_entity(rec["id"].get<std::string>(), rec.value("description", ""));
        } catch (const std::runtime_error& e) {
            throw ParseError(origin + ": entities[" + std::to_string(i) + "]: " + e.what());
        }
    }
    const auto& edges = j["edges"];
    if (!edges.is_array()) throw ParseError(origin + ": \"edges\" is not an array");
    for (size_t i = 0; i < edges.size(); ++i) {
        const auto& rec = edges[i];
        if (!rec.is_object() || !rec.contains("src") || !rec.contains("rtype") ||
            !rec.contains("dst"))
            throw ParseError(origin + ": edges[" + std::to_string(i) + "] is malformed");
        try {
            // Duplicates under graph equality collapse silently; an undirected
            // file listing both orientations yields one edge.
            g.add_edge(rec["src"].get<std::string>(), rec["rtype"].get<std::string>(),
                       rec["dst"].get<std::string>(), rec.value("description", ""));
        } catch (const IntegrityError&) {
            throw;
        } catch (const std::runtime_error& e) {
            throw ParseError(origin + ": edges[" + std::to_string(i) + "]: " + e.what());
        }
    }
    return g;
}

KnowledgeGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open graph file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_graph_text(ss.str(), path);
}

}  // namespace grasplab
