#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "doctest.h"
#include "grasplab/attacker.hpp"
#include "grasplab/errors.hpp"
#include "grasplab/remote.hpp"
#include "grasplab/retrieval.hpp"
#include "grasplab/victim.hpp"
#include "grasplab/wire.hpp"

using namespace grasplab;

namespace {

RelationHit rel_hit(const char* s, const char* r, const char* d, int rank) {
    RelationHit h;
    h.edge = RelationEdge{EntityId(s), Label(r), EntityId(d), ""};
    h.score = 1.0 - 0.01 * rank;
    h.rank = rank;
    return h;
}

// Four relations, two incident to Acme Corp.
RetrievalHits sample_hits() {
    RetrievalHits h;
    h.entities.push_back(EntityHit{EntityId("Acme Corp"), "supplier", 1.0});
    h.entities.push_back(EntityHit{EntityId("Beta Ltd"), "auditor", 0.5});
    h.relations.push_back(rel_hit("Acme Corp", "supplies", "Beta Ltd", 0));
    h.relations.push_back(rel_hit("Gamma Inc", "audits", "Beta Ltd", 1));
    h.relations.push_back(rel_hit("Delta LLC", "mentors", "Acme Corp", 2));
    h.relations.push_back(rel_hit("Gamma Inc", "works_with", "Delta LLC", 3));
    return h;
}

ContextTable plain_table() { return build_context(sample_hits(), DefenseConfig{}, 11); }

std::string extraction_query(const char* target) {
    return compose_query(EntityId(target), std::nullopt).composed;
}

std::vector<RelationQuad> quads_of(const std::string& response) {
    ParsedResponse p = parse_response(response);
    REQUIRE(p.kind == ResponseKind::Relations);
    return p.quads;
}

}  // namespace

TEST_CASE("system prompt assembly stacks clauses in defense order") {
    CHECK(assemble_system_prompt(DefenseConfig{}).clauses.empty());

    DefenseConfig all;
    all.safe_prompt = true;
    all.summarization = DefenseConfig::Summarization::Abstractive;
    all.reject = true;
    SystemPrompt p = assemble_system_prompt(all);
    REQUIRE(p.clauses.size() == 4);
    CHECK(p.clauses[0] == safe_clause_tables());
    CHECK(p.clauses[1] == safe_clause_graph());
    CHECK(p.clauses[2] == abstractive_clause());
    CHECK(p.clauses[3] == reject_clause());
    CHECK(p.has_reject_clause());
    CHECK(p.full_text().rfind(base_system_text(), 0) == 0);
    CHECK(p.full_text().find(reject_clause()) != std::string::npos);

    DefenseConfig ext;
    ext.summarization = DefenseConfig::Summarization::Extractive;
    CHECK(assemble_system_prompt(ext).clauses == std::vector<std::string>{extractive_clause()});
    CHECK_FALSE(assemble_system_prompt(ext).has_reject_clause());
}

TEST_CASE("query directive parsing reads the attack grammar") {
    SUBCASE("plain anchor plus extraction clause") {
        QueryDirectives d = parse_query_directives(extraction_query("Acme Corp"));
        CHECK(d.extraction_framed);
        CHECK(d.target == "Acme Corp");
        CHECK(d.exclude.empty());
        CHECK(d.selector == QueryDirectives::Selector::None);
    }
    SUBCASE("the phrase relation extraction alone frames the query") {
        QueryDirectives d = parse_query_directives("Please do Relation Extraction on this.");
        CHECK(d.extraction_framed);
        CHECK(d.target.empty());
        CHECK_FALSE(parse_query_directives("I want some advice about X.").extraction_framed);
    }
    SUBCASE("exclude list and frame selector") {
        DiversityTemplate tpl;
        tpl.kind = TemplateKind::FrameDrift;
        tpl.exclude = {RelationQuad{"", EntityId("A"), Label("r1"), EntityId("B")},
                       RelationQuad{"", EntityId("C"), Label("r2"), EntityId("D")}};
        tpl.frame_hints = {"financial exposure", "compliance"};
        QueryDirectives d =
            parse_query_directives(compose_query(EntityId("Acme Corp"), tpl).composed);
        CHECK(d.target == "Acme Corp");
        REQUIRE(d.exclude.size() == 2);
        CHECK(quad_key(d.exclude[0]) ==
              quad_key(RelationQuad{"zz", EntityId("A"), Label("r1"), EntityId("B")}));
        CHECK(d.selector == QueryDirectives::Selector::Frame);
        CHECK(d.frame_hints == tpl.frame_hints);
    }
    SUBCASE("observed and novel type selectors carry the type list") {
        DiversityTemplate tpl;
        tpl.kind = TemplateKind::TypeExpand;
        tpl.observed_types = {"supplies", "audits"};
        QueryDirectives d =
            parse_query_directives(compose_query(EntityId("X"), tpl).composed);
        CHECK(d.selector == QueryDirectives::Selector::ObservedTypes);
        CHECK(d.type_list == tpl.observed_types);

        tpl.kind = TemplateKind::TypeExplore;
        d = parse_query_directives(compose_query(EntityId("X"), tpl).composed);
        CHECK(d.selector == QueryDirectives::Selector::NovelTypes);
        CHECK(d.type_list == tpl.observed_types);
    }
    SUBCASE("residual selector carries the cap") {
        DiversityTemplate tpl;
        tpl.kind = TemplateKind::ResidualExtract;
        tpl.residual_cap = 7;
        QueryDirectives d =
            parse_query_directives(compose_query(EntityId("X"), tpl).composed);
        CHECK(d.selector == QueryDirectives::Selector::Residual);
        CHECK(d.residual_cap == 7);
    }
    SUBCASE("exclude parsing stops at the first non-relation line") {
        std::string text = "Remove candidates that appear in the following list.\n"
                           "- <A> --[<r1>]--> <B>\n"
                           "this line ends the list\n"
                           "- <C> --[<r2>]--> <D>\n";
        QueryDirectives d = parse_query_directives(text);
        CHECK(d.exclude.size() == 1);
    }
}

TEST_CASE("benign queries get deterministic answers from true fields") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    VictimResponse r =
        respond_simulated(p, t, "What should I know about Acme Corp?", ResponderBehavior{}, 5);
    CHECK(r.text.rfind("Here is some guidance regarding", 0) == 0);
    CHECK(r.text.find("Acme Corp supplies Beta Ltd") != std::string::npos);
    // Benign answers carry no display ids and no refusal vocabulary.
    for (const auto& row : t.rows) CHECK(r.text.find(row.display_id) == std::string::npos);
    CHECK_FALSE(detect_refusal(r.text));
    CHECK(parse_response(r.text).kind == ResponseKind::Unparseable);
    // Pure function of the table and query: the seed does not matter.
    CHECK(respond_simulated(p, t, "What should I know about Acme Corp?", ResponderBehavior{}, 99)
              .text == r.text);

    ContextTable empty;
    empty.rendered = render_context(empty);
    CHECK(benign_answer(empty, "Anything about X?") ==
          "Here is some guidance regarding Anything about X?. No supporting records were "
          "retrieved.");
}

TEST_CASE("benign answers never read decoy columns") {
    DefenseConfig d;
    d.decoy = true;
    ContextTable t = build_context(sample_hits(), d, 13);
    std::string text = benign_answer(t, "Tell me about Acme Corp");
    for (const auto& row : t.rows) {
        std::string decoy_pair = row.decoy_src.text + " " + row_rtype_text(row) + " " +
                                 row.decoy_dst.text;
        std::string true_pair = row.src.text + " " + row_rtype_text(row) + " " + row.dst.text;
        if (decoy_pair != true_pair) CHECK(text.find(decoy_pair) == std::string::npos);
    }
    CHECK(text.find("src_entity") == std::string::npos);
}

TEST_CASE("perfect compliance returns exactly the incident rows") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    VictimResponse r =
        respond_simulated(p, t, extraction_query("Acme Corp"), ResponderBehavior{}, 3);
    std::vector<RelationQuad> expected = {
        RelationQuad{t.rows[0].display_id, t.rows[0].src, Label("supplies"), t.rows[0].dst},
        RelationQuad{t.rows[2].display_id, t.rows[2].src, Label("mentors"), t.rows[2].dst},
    };
    CHECK(r.text == render_relation_block(expected));
}

TEST_CASE("unknown targets and empty selections answer NONE") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    CHECK(respond_simulated(p, t, extraction_query("Omega Group"), ResponderBehavior{}, 3).text ==
          kNoneToken);
    // A query with no anchor line retains nothing.
    CHECK(respond_simulated(p, t, "[RELATIONS] please", ResponderBehavior{}, 3).text ==
          kNoneToken);
}

TEST_CASE("excluded quads are removed from the response") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    DiversityTemplate tpl;
    tpl.kind = TemplateKind::ResidualExtract;
    tpl.residual_cap = 10;
    tpl.exclude = {RelationQuad{"", EntityId("Acme Corp"), Label("supplies"), EntityId("Beta Ltd")}};
    std::string query = compose_query(EntityId("Acme Corp"), tpl).composed;
    VictimResponse r = respond_simulated(p, t, query, ResponderBehavior{}, 3);
    std::vector<RelationQuad> got = quads_of(r.text);
    REQUIRE(got.size() == 1);
    CHECK(got[0].rtype.text == "mentors");

    tpl.exclude.push_back(
        RelationQuad{"", EntityId("Delta LLC"), Label("mentors"), EntityId("Acme Corp")});
    query = compose_query(EntityId("Acme Corp"), tpl).composed;
    CHECK(respond_simulated(p, t, query, ResponderBehavior{}, 3).text == kNoneToken);
}

TEST_CASE("selectors filter the retained rows") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    DiversityTemplate tpl;

    SUBCASE("frame hints match rtype or description substrings") {
        tpl.kind = TemplateKind::FrameDrift;
        tpl.frame_hints = {"mentor"};
        std::string query = compose_query(EntityId("Acme Corp"), tpl).composed;
        std::vector<RelationQuad> got =
            quads_of(respond_simulated(p, t, query, ResponderBehavior{}, 3).text);
        REQUIRE(got.size() == 1);
        CHECK(got[0].rtype.text == "mentors");
    }
    SUBCASE("observed types keep only listed types") {
        tpl.kind = TemplateKind::TypeExpand;
        tpl.observed_types = {"SUPPLIES"};
        std::string query = compose_query(EntityId("Acme Corp"), tpl).composed;
        std::vector<RelationQuad> got =
            quads_of(respond_simulated(p, t, query, ResponderBehavior{}, 3).text);
        REQUIRE(got.size() == 1);
        CHECK(got[0].rtype.text == "supplies");
    }
    SUBCASE("novel types drop listed types") {
        tpl.kind = TemplateKind::TypeExplore;
        tpl.observed_types = {"supplies"};
        std::string query = compose_query(EntityId("Acme Corp"), tpl).composed;
        std::vector<RelationQuad> got =
            quads_of(respond_simulated(p, t, query, ResponderBehavior{}, 3).text);
        REQUIRE(got.size() == 1);
        CHECK(got[0].rtype.text == "mentors");
    }
    SUBCASE("residual cap keeps the most confident rows in table order") {
        tpl.kind = TemplateKind::ResidualExtract;
        tpl.residual_cap = 1;
        std::string query = compose_query(EntityId("Acme Corp"), tpl).composed;
        std::vector<RelationQuad> got =
            quads_of(respond_simulated(p, t, query, ResponderBehavior{}, 3).text);
        REQUIRE(got.size() == 1);
        CHECK(got[0].rtype.text == "supplies");
    }
}

TEST_CASE("reject clause gates extraction-framed queries by detection recall") {
    ContextTable t = plain_table();
    DefenseConfig d;
    d.reject = true;
    SystemPrompt armed = assemble_system_prompt(d);
    ResponderBehavior b;

    b.reject_detection_recall = 1.0;
    for (uint64_t seed : {1, 2, 3, 4, 5})
        CHECK(respond_simulated(armed, t, extraction_query("Acme Corp"), b, seed).text ==
              kRejectToken);
    // Benign queries pass through even with the clause armed.
    CHECK(respond_simulated(armed, t, "Tell me about Acme Corp", b, 1).text.rfind(
              "Here is some guidance", 0) == 0);

    b.reject_detection_recall = 0.0;
    CHECK(respond_simulated(armed, t, extraction_query("Acme Corp"), b, 1).text !=
          kRejectToken);

    // Without the clause the recall knob is inert.
    SystemPrompt unarmed = assemble_system_prompt(DefenseConfig{});
    b.reject_detection_recall = 1.0;
    CHECK(respond_simulated(unarmed, t, extraction_query("Acme Corp"), b, 1).text !=
          kRejectToken);
}

TEST_CASE("refusal draw yields refusal text") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.refusal_prob = 1.0;
    VictimResponse r = respond_simulated(p, t, extraction_query("Acme Corp"), b, 9);
    CHECK(r.text == "I'm sorry, but I cannot help with that request.");
    CHECK(parse_response(r.text).kind == ResponseKind::Refusal);
}

TEST_CASE("mixing swaps one field with a donor row") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.base_mixing_prob = 1.0;
    b.aligned_id_mixing_prob = 1.0;
    std::string query = extraction_query("Acme Corp");
    // Two retained rows share no fields, so every mixed quad must differ from
    // its own row in exactly one field taken from the donor.
    bool saw_change = false;
    for (uint64_t seed = 1; seed <= 12; ++seed) {
        std::vector<RelationQuad> got = quads_of(respond_simulated(p, t, query, b, seed).text);
        REQUIRE(got.size() == 2);
        std::vector<RelationQuad> truth = {
            RelationQuad{"", t.rows[0].src, Label("supplies"), t.rows[0].dst},
            RelationQuad{"", t.rows[2].src, Label("mentors"), t.rows[2].dst}};
        for (size_t i = 0; i < 2; ++i) {
            int diffs = int(got[i].src != truth[i].src) + int(got[i].rtype != truth[i].rtype) +
                        int(got[i].dst != truth[i].dst);
            CHECK(diffs == 1);
            saw_change = true;
            // The changed field comes from the donor row.
            const RelationQuad& donor = truth[1 - i];
            if (got[i].src != truth[i].src) CHECK(got[i].src == donor.src);
            if (got[i].rtype != truth[i].rtype) CHECK(got[i].rtype == donor.rtype);
            if (got[i].dst != truth[i].dst) CHECK(got[i].dst == donor.dst);
        }
    }
    CHECK(saw_change);
}

TEST_CASE("single retained rows are immune to mixing") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.base_mixing_prob = 1.0;
    b.aligned_id_mixing_prob = 1.0;
    DiversityTemplate tpl;
    tpl.kind = TemplateKind::TypeExpand;
    tpl.observed_types = {"supplies"};
    std::string query = compose_query(EntityId("Acme Corp"), tpl).composed;
    std::vector<RelationQuad> got = quads_of(respond_simulated(p, t, query, b, 4).text);
    REQUIRE(got.size() == 1);
    CHECK(got[0].src == EntityId("Acme Corp"));
    CHECK(got[0].rtype == Label("supplies"));
    CHECK(got[0].dst == EntityId("Beta Ltd"));
}

TEST_CASE("aligned ids raise the mixing rate, distinct ids keep the base rate") {
    RetrievalHits h = sample_hits();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.base_mixing_prob = 0.0;
    b.aligned_id_mixing_prob = 1.0;
    std::string query = extraction_query("Acme Corp");

    // Distinct display ids: base rate 0, output stays faithful.
    ContextTable distinct = build_context(h, DefenseConfig{}, 11);
    std::vector<RelationQuad> faithful =
        quads_of(respond_simulated(p, distinct, query, b, 8).text);
    CHECK(faithful[0].src == EntityId("Acme Corp"));
    CHECK(faithful[1].rtype == Label("mentors"));

    // Aligned ids: the elevated rate applies and scrambles every row.
    DefenseConfig d;
    d.id_alignment = true;
    ContextTable aligned = build_context(h, d, 11);
    std::vector<RelationQuad> mixed = quads_of(respond_simulated(p, aligned, query, b, 8).text);
    REQUIRE(mixed.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        bool changed = mixed[i].src != faithful[i].src || mixed[i].rtype != faithful[i].rtype ||
                       mixed[i].dst != faithful[i].dst;
        CHECK(changed);
    }
    CHECK_THROWS_AS(respond_simulated(p, aligned, query,
                                      [] {
                                          ResponderBehavior bad;
                                          bad.base_mixing_prob = 0.5;
                                          bad.aligned_id_mixing_prob = 0.1;
                                          return bad;
                                      }(),
                                      1),
                    ContractError);
}

TEST_CASE("decoy confusion reads the planted columns") {
    DefenseConfig d;
    d.decoy = true;
    ContextTable t = build_context(sample_hits(), d, 17);
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.decoy_confusion_prob = 1.0;
    std::vector<RelationQuad> got =
        quads_of(respond_simulated(p, t, extraction_query("Acme Corp"), b, 6).text);
    REQUIRE(got.size() == 2);
    CHECK(got[0].src == t.rows[0].decoy_src);
    CHECK(got[0].dst == t.rows[0].decoy_dst);
    CHECK(got[1].src == t.rows[2].decoy_src);
    CHECK(got[1].dst == t.rows[2].decoy_dst);
    // Types still come from the true description.
    CHECK(got[0].rtype == Label("supplies"));

    // Without the decoy defense the knob is inert.
    ContextTable plain = plain_table();
    std::vector<RelationQuad> clean =
        quads_of(respond_simulated(p, plain, extraction_query("Acme Corp"), b, 6).text);
    CHECK(clean[0].src == EntityId("Acme Corp"));
}

TEST_CASE("paraphrase substitutes synonyms for relation types") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.paraphrase_prob = 1.0;
    b.synonym_table["supplies"] = {"ships parts to", "provisions"};
    std::vector<RelationQuad> got =
        quads_of(respond_simulated(p, t, extraction_query("Acme Corp"), b, 21).text);
    bool is_synonym = got[0].rtype == Label("ships parts to") ||
                      got[0].rtype == Label("provisions");
    CHECK(is_synonym);
    // Types without a synonym entry pass through unchanged.
    CHECK(got[1].rtype == Label("mentors"));
}

TEST_CASE("behavior probabilities are validated") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.refusal_prob = 1.5;
    CHECK_THROWS_AS(respond_simulated(p, t, "q", b, 1), ContractError);
    b.refusal_prob = 0;
    b.decoy_confusion_prob = -0.1;
    CHECK_THROWS_AS(respond_simulated(p, t, "q", b, 1), ContractError);
}

TEST_CASE("responses are a pure function of the turn seed") {
    ContextTable t = plain_table();
    SystemPrompt p = assemble_system_prompt(DefenseConfig{});
    ResponderBehavior b;
    b.base_mixing_prob = 0.5;
    b.aligned_id_mixing_prob = 0.5;
    b.paraphrase_prob = 0.5;
    b.synonym_table["supplies"] = {"provisions"};
    std::string query = extraction_query("Acme Corp");
    CHECK(respond_simulated(p, t, query, b, 42).text ==
          respond_simulated(p, t, query, b, 42).text);
}

TEST_CASE("remote adapter speaks the chat completion protocol") {
    httplib::Server server;
    std::atomic<int> calls{0};
    std::string seen_auth, seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        if (calls == 1) {
            res.status = 503;  // first attempt fails, the retry must succeed
            res.set_content("overloaded", "text/plain");
            return;
        }
        nlohmann::json out = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "[NONE]"}}}}}}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread run([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("GRASPLAB_TEST_TOKEN", "sk-unit-test-credential", 1);
    RemoteEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "test-model";
    cfg.credential_env = "GRASPLAB_TEST_TOKEN";
    cfg.timeout_ms = 2000;
    cfg.max_retries = 2;
    cfg.retry_backoff_ms = 1;

    std::string reply = respond_remote(cfg, "system text", "user text");
    CHECK(reply == "[NONE]");
    CHECK(calls == 2);
    CHECK(seen_auth == "Bearer sk-unit-test-credential");
    nlohmann::json body = nlohmann::json::parse(seen_body);
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0.0);
    REQUIRE(body["messages"].size() == 2);
    CHECK(body["messages"][0]["role"] == "system");
    CHECK(body["messages"][0]["content"] == "system text");
    CHECK(body["messages"][1]["role"] == "user");
    CHECK(body["messages"][1]["content"] == "user text");

    server.stop();
    run.join();
}

TEST_CASE("remote adapter error paths never leak the credential") {
    setenv("GRASPLAB_TEST_TOKEN", "sk-secret-value-xyz", 1);
    RemoteEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";  // nothing listens here
    cfg.model = "m";
    cfg.credential_env = "GRASPLAB_TEST_TOKEN";
    cfg.timeout_ms = 200;
    cfg.max_retries = 1;
    cfg.retry_backoff_ms = 1;
    try {
        respond_remote(cfg, "s", "u");
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        std::string msg = e.what();
        CHECK(msg.find("sk-secret-value-xyz") == std::string::npos);
        CHECK(msg.find("2 attempts") != std::string::npos);
    }

    unsetenv("GRASPLAB_MISSING_TOKEN");
    cfg.credential_env = "GRASPLAB_MISSING_TOKEN";
    // The error names the variable, never a value.
    CHECK_THROWS_WITH_AS(respond_remote(cfg, "s", "u"),
                         doctest::Contains("GRASPLAB_MISSING_TOKEN"), ConfigError);
}

TEST_CASE("remote adapter surfaces non-retryable status codes") {
    httplib::Server server;
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 404;
        res.set_content("nope", "text/plain");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread run([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "m";
    cfg.timeout_ms = 2000;
    CHECK_THROWS_WITH_AS(respond_remote(cfg, "s", "u"), doctest::Contains("404"), TransportError);

    server.stop();
    run.join();
}

TEST_CASE("remote adapter caps concurrent requests in flight") {
    httplib::Server server;
    std::atomic<int> active{0}, peak{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        int now = ++active;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
        --active;
        nlohmann::json out = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", "ok"}}}}}}};
        res.set_content(out.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread run([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    RemoteEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.model = "m";
    cfg.timeout_ms = 2000;
    cfg.max_in_flight = 1;

    std::vector<std::thread> callers;
    for (int i = 0; i < 3; ++i)
        callers.emplace_back([&] { CHECK(respond_remote(cfg, "s", "u") == "ok"); });
    for (auto& c : callers) c.join();
    CHECK(peak.load() == 1);

    cfg.max_in_flight = 0;
    CHECK_THROWS_AS(respond_remote(cfg, "s", "u"), ConfigError);

    server.stop();
    run.join();
}
