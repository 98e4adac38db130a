#pragma once

#include <string>
#include <vector>

#include "grasplab/kg.hpp"

namespace grasplab {

// One relation mention on the wire. display_id is the table row id as printed
// by the responder; it plays no part in relation identity.
struct RelationQuad {
    std::string display_id;
    EntityId src;
    Label rtype;
    EntityId dst;
};

// Identity of a quad with the row id stripped.
std::string quad_key(const RelationQuad& q);

enum class ResponseKind { Relations, None, Reject, Refusal, Unparseable };

const char* response_kind_name(ResponseKind k);

struct QuadNote {
    bool single_dash_arrow = false;  // "-[" or "]->" variant was used
    bool missing_id = false;         // line had no "(...)" group
};

struct ParsedResponse {
    ResponseKind kind = ResponseKind::Unparseable;
    std::vector<RelationQuad> quads;  // populated only for Relations
    std::vector<QuadNote> notes;      // parallel to quads
    std::string raw;
};

inline const std::string kRelationsOpen = "[RELATIONS]";
inline const std::string kRelationsClose = "[END RELATIONS]";
inline const std::string kNoneToken = "[NONE]";
inline const std::string kRejectToken = "[REJECT]";

const std::vector<std::string>& default_refusal_indicators();

// Case-insensitive whole-word scan for refusal indicator words.
bool detect_refusal(const std::string& text,
                    const std::vector<std::string>& indicators = default_refusal_indicators());

// Canonical line rendering: "- (ID) <SRC> --[<RTYPE>]--> <DST>".
std::string render_relation_line(const RelationQuad& q, bool include_id = true);

// Full block: open marker, one line per quad, close marker.
std::string render_relation_block(const std::vector<RelationQuad>& quads, bool include_ids = true);

// Classifies a responder turn. Classification precedence:
//   Reject > None > Relations > Refusal > Unparseable.
// Relation lines tolerate leading bullets and whitespace, one or two dashes in
// the arrow, a missing id group, and absent block markers. Duplicate lines
// (same id and quad) collapse to the first occurrence.
ParsedResponse parse_response(const std::string& text,
                              const std::vector<std::string>& refusal_indicators =
                                  default_refusal_indicators());

// Single-line parse used both by parse_response and by the simulated victim
// when reading exclusion lists out of attack queries.
bool parse_relation_line(const std::string& line, RelationQuad& out, QuadNote& note);

}  // namespace grasplab
