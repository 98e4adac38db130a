#include <cmath>
#include <set>

#include "doctest.h"
#include "grasplab/embedding.hpp"
#include "grasplab/errors.hpp"
#include "grasplab/kg.hpp"
#include "grasplab/retrieval.hpp"
#include "grasplab/text.hpp"

using namespace grasplab;

namespace {

KnowledgeGraph sample_graph() {
    KnowledgeGraph g;
    g.add_entity("Acme Corp", "manufacturing supplier");
    g.add_entity("Beta Ltd", "external auditor");
    g.add_entity("Gamma Inc", "logistics partner");
    g.add_entity("Delta LLC", "consulting firm");
    g.add_edge("Acme Corp", "supplies", "Beta Ltd", "quarterly parts shipments");
    g.add_edge("Beta Ltd", "audits", "Gamma Inc", "annual financial audit");
    g.add_edge("Gamma Inc", "works_with", "Acme Corp", "joint logistics venture");
    g.add_edge("Delta LLC", "advises", "Acme Corp", "strategy retainer");
    return g;
}

RetrievalHits hits_for(const KnowledgeGraph& g, const std::string& query, int ke = 4,
                       int kr = 10) {
    static TrigramHashEmbedder embedder;
    RetrievalIndex index;
    index.build(g, embedder);
    return index.retrieve(query, ke, kr);
}

}  // namespace

TEST_CASE("embedder output is unit length and canonical") {
    TrigramHashEmbedder e;
    CHECK(e.dimension() == 256);
    EmbeddingVector v = e.embed("Acme Corporation");
    double norm = 0;
    for (double x : v) norm += x * x;
    CHECK(std::abs(norm - 1.0) < 1e-12);
    // Same canonical text, same vector.
    CHECK(e.embed("  ACME   corporation ") == v);

    EmbeddingVector zero = e.embed("   ");
    for (double x : zero) CHECK(x == 0.0);

    // Strings shorter than a trigram still embed deterministically.
    CHECK(e.embed("ab") == e.embed("AB "));
    CHECK(cosine_similarity(e.embed("ab"), e.embed("ab")) == doctest::Approx(1.0));

    CHECK_THROWS_AS(TrigramHashEmbedder(0), ContractError);
}

TEST_CASE("cosine similarity contract") {
    TrigramHashEmbedder e;
    EmbeddingVector a = e.embed("alpha beta");
    EmbeddingVector b = e.embed("beta alpha");
    CHECK(cosine_similarity(a, b) == doctest::Approx(cosine_similarity(b, a)));
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
    CHECK(cosine_similarity(a, e.embed("")) == 0.0);
    EmbeddingVector short_vec(8, 0.0);
    CHECK_THROWS_AS(cosine_similarity(a, short_vec), ContractError);
}

TEST_CASE("retrieval requires a built index") {
    RetrievalIndex index;
    CHECK_FALSE(index.built());
    CHECK_THROWS_AS(index.retrieve("x", 1, 1), StateError);
}

TEST_CASE("exact label queries rank their entity first") {
    KnowledgeGraph g = sample_graph();
    for (const auto& ent : g.entities()) {
        RetrievalHits h = hits_for(g, ent.id.text);
        REQUIRE_FALSE(h.entities.empty());
        CHECK(h.entities[0].id == ent.id);
        CHECK(h.entities[0].score == doctest::Approx(1.0));
    }
}

TEST_CASE("k bounds the result set and oversized k returns everything") {
    KnowledgeGraph g = sample_graph();
    RetrievalHits h = hits_for(g, "Acme Corp", 2, 3);
    CHECK(h.entities.size() == 2);
    CHECK(h.relations.size() == 3);
    RetrievalHits all = hits_for(g, "Acme Corp", 100, 100);
    CHECK(all.entities.size() == 4);
    CHECK(all.relations.size() == 4);
    RetrievalHits none = hits_for(g, "Acme Corp", 0, 0);
    CHECK(none.entities.empty());
    CHECK(none.relations.empty());
    RetrievalIndex idx;
    TrigramHashEmbedder e;
    idx.build(g, e);
    CHECK_THROWS_AS(idx.retrieve("x", -1, 1), ContractError);
}

TEST_CASE("relation ranks are sequential retrieval positions") {
    KnowledgeGraph g = sample_graph();
    RetrievalHits h = hits_for(g, "audit", 4, 4);
    for (size_t i = 0; i < h.relations.size(); ++i)
        CHECK(h.relations[i].rank == int(i));
    // Scores are non-increasing.
    for (size_t i = 1; i < h.relations.size(); ++i)
        CHECK(h.relations[i - 1].score >= h.relations[i].score);
}

TEST_CASE("score ties break by canonical key order") {
    KnowledgeGraph g = sample_graph();
    // An empty query embeds to the zero vector: every score is 0, so the
    // result order is the canonical tie order.
    RetrievalHits h = hits_for(g, "", 4, 4);
    REQUIRE(h.entities.size() == 4);
    for (size_t i = 1; i < h.entities.size(); ++i)
        CHECK(h.entities[i - 1].id.key < h.entities[i].id.key);
}

TEST_CASE("plain context table renders rows in retrieval order") {
    KnowledgeGraph g = sample_graph();
    RetrievalHits h = hits_for(g, "Acme Corp");
    ContextTable t = build_context(h, DefenseConfig{}, 1);
    CHECK_FALSE(t.decoys_present);
    REQUIRE(t.rows.size() == h.relations.size());
    for (size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(t.rows[i].src == h.relations[i].edge.src);
        CHECK(t.rows[i].dst == h.relations[i].edge.dst);
        CHECK(t.rows[i].description.rfind("Type: ", 0) == 0);
        CHECK(row_rtype_text(t.rows[i]) == h.relations[i].edge.rtype.text);
    }
    // Display ids are unique hex handles.
    std::set<std::string> ids;
    for (const auto& r : t.rows) {
        CHECK(r.display_id.rfind("R", 0) == 0);
        ids.insert(r.display_id);
    }
    CHECK(ids.size() == t.rows.size());

    CHECK(t.rendered.rfind("Entities:\nentity | description\n", 0) == 0);
    CHECK(t.rendered.find("\nRelations:\nid | src | dst | description\n") != std::string::npos);
    CHECK(t.rendered.find("src_entity") == std::string::npos);
    CHECK(render_context(t) == t.rendered);
}

TEST_CASE("id alignment rewrites every display id to 1") {
    KnowledgeGraph g = sample_graph();
    RetrievalHits h = hits_for(g, "Acme Corp");
    DefenseConfig d;
    d.id_alignment = true;
    ContextTable t = build_context(h, d, 1);
    for (const auto& r : t.rows) CHECK(r.display_id == "1");
    // Everything else is untouched relative to the undefended table.
    ContextTable plain = build_context(h, DefenseConfig{}, 1);
    REQUIRE(plain.rows.size() == t.rows.size());
    for (size_t i = 0; i < t.rows.size(); ++i) {
        CHECK(t.rows[i].src == plain.rows[i].src);
        CHECK(t.rows[i].dst == plain.rows[i].dst);
        CHECK(t.rows[i].description == plain.rows[i].description);
    }
}

TEST_CASE("decoy columns carry a valid misdirection pair") {
    KnowledgeGraph g = sample_graph();
    RetrievalHits h = hits_for(g, "Acme Corp");
    DefenseConfig d;
    d.decoy = true;
    ContextTable t = build_context(h, d, 7);
    CHECK(t.decoys_present);
    for (const auto& r : t.rows) {
        CHECK_FALSE(r.decoy_src.empty());
        CHECK_FALSE(r.decoy_dst.empty());
        // The decoy pair never equals the true pair.
        bool same = r.decoy_src == r.src && r.decoy_dst == r.dst;
        CHECK_FALSE(same);
        CHECK_FALSE(r.decoy_fallback);
    }
    CHECK(t.rendered.find(kDecoyDirectiveLine) != std::string::npos);
    CHECK(t.rendered.find("id | src_entity | dst_entity | src | dst | description") !=
          std::string::npos);

    // Same seed, same table; the transform is deterministic.
    CHECK(build_context(h, d, 7).rendered == t.rendered);
}

TEST_CASE("tiny pools still find a differing decoy pair") {
    KnowledgeGraph g;
    g.add_entity("A", "");
    g.add_entity("B", "");
    g.add_edge("A", "r", "B", "");
    RetrievalHits h = hits_for(g, "A", 2, 1);
    DefenseConfig d;
    d.decoy = true;
    ContextTable t = build_context(h, d, 3);
    REQUIRE(t.rows.size() == 1);
    const auto& r = t.rows[0];
    bool same_pair = r.decoy_src == r.src && r.decoy_dst == r.dst;
    CHECK_FALSE(same_pair);
    for (const EntityId* id : {&r.decoy_src, &r.decoy_dst}) {
        bool in_pool = *id == EntityId("A") || *id == EntityId("B");
        CHECK(in_pool);
    }
    CHECK_FALSE(r.decoy_fallback);
}

TEST_CASE("decoy fallback swaps and flags when no differing pair exists") {
    // A self-loop with a one-entity pool leaves nothing to misdirect to.
    KnowledgeGraph g;
    g.add_entity("A", "");
    g.add_edge("A", "r", "A", "");
    RetrievalHits h = hits_for(g, "A", 0, 1);
    DefenseConfig d;
    d.decoy = true;
    ContextTable t = build_context(h, d, 3);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].decoy_fallback);
    CHECK(t.rows[0].decoy_src == t.rows[0].dst);
    CHECK(t.rows[0].decoy_dst == t.rows[0].src);
}

TEST_CASE("table cells are sanitized against delimiter injection") {
    KnowledgeGraph g;
    g.add_entity("A", "left | right\nsecond line");
    g.add_entity("B", "plain");
    g.add_edge("A", "r", "B", "pipe | in description");
    RetrievalHits h = hits_for(g, "A", 2, 1);
    ContextTable t = build_context(h, DefenseConfig{}, 1);
    CHECK(t.rendered.find("left / right second line") != std::string::npos);
    CHECK(t.rendered.find("pipe / in description") != std::string::npos);
}

TEST_CASE("summarization flags do not alter the table") {
    KnowledgeGraph g = sample_graph();
    RetrievalHits h = hits_for(g, "Acme Corp");
    DefenseConfig d;
    d.summarization = DefenseConfig::Summarization::Abstractive;
    CHECK(build_context(h, d, 1).rendered == build_context(h, DefenseConfig{}, 1).rendered);
}

TEST_CASE("summarization names parse both ways") {
    CHECK(parse_summarization("none") == DefenseConfig::Summarization::None);
    CHECK(parse_summarization("abstractive") == DefenseConfig::Summarization::Abstractive);
    CHECK(parse_summarization("extractive") == DefenseConfig::Summarization::Extractive);
    CHECK_THROWS_AS(parse_summarization("bogus"), ConfigError);
    CHECK(summarization_name(DefenseConfig::Summarization::Extractive) ==
          std::string("extractive"));
}
