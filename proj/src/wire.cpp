#include "grasplab/wire.hpp"

#include <unordered_set>

namespace grasplab {

namespace {

constexpr char kFieldSep = '\x1f';

// Strips one layer of <...> if present.
std::string strip_angle(std::string s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '<' && s.back() == '>')
        s = trim(s.substr(1, s.size() - 2));
    return s;
}

}  // namespace

std::string quad_key(const RelationQuad& q) {
    std::string k;
    k.reserve(q.src.key.size() + q.rtype.key.size() + q.dst.key.size() + 2);
    k += q.src.key;
    k += kFieldSep;
    k += q.rtype.key;
    k += kFieldSep;
    k += q.dst.key;
    return k;
}

const char* response_kind_name(ResponseKind k) {
    switch (k) {
        case ResponseKind::Relations: return "relations";
        case ResponseKind::None: return "none";
        case ResponseKind::Reject: return "reject";
        case ResponseKind::Refusal: return "refusal";
        case ResponseKind::Unparseable: return "unparseable";
    }
    return "unparseable";
}

const std::vector<std::string>& default_refusal_indicators() {
    static const std::vector<std::string> kWords = {"sorry", "cannot", "unable"};
    return kWords;
}

bool detect_refusal(const std::string& text, const std::vector<std::string>& indicators) {
    for (const auto& w : indicators)
        if (contains_word_ci(text, w)) return true;
    return false;
}

std::string render_relation_line(const RelationQuad& q, bool include_id) {
    std::string out = "- ";
    if (include_id && !q.display_id.empty()) out += "(" + q.display_id + ") ";
    out += "<" + q.src.text + "> --[<" + q.rtype.text + ">]--> <" + q.dst.text + ">";
    return out;
}

std::string render_relation_block(const std::vector<RelationQuad>& quads, bool include_ids) {
    std::string out = kRelationsOpen + "\n";
    for (const auto& q : quads) out += render_relation_line(q, include_ids) + "\n";
    out += kRelationsClose;
    return out;
}

bool parse_relation_line(const std::string& line, RelationQuad& out, QuadNote& note) {
    std::string s = trim(line);
    // Up to two bullet levels, e.g. "- " or "* - ".
    for (int i = 0; i < 2; ++i) {
        if (s.size() >= 2 && (s[0] == '-' || s[0] == '*') &&
            (s[1] == ' ' || s[1] == '(' || s[1] == '<')) {
            s = trim(s.substr(1));
        } else {
            break;
        }
    }
    note = QuadNote{};
    std::string display_id;
    if (!s.empty() && s.front() == '(') {
        size_t close = s.find(')');
        if (close == std::string::npos) return false;
        display_id = trim(s.substr(1, close - 1));
        s = trim(s.substr(close + 1));
    } else {
        note.missing_id = true;
    }

    size_t open = s.find("--[");
    size_t open_len = 3;
    bool single_open = false;
    if (open == std::string::npos) {
        open = s.find("-[");
        open_len = 2;
        single_open = true;
    }
    if (open == std::string::npos) return false;
    size_t rt_start = open + open_len;
    size_t close = s.find("]-->", rt_start);
    size_t close_len = 4;
    bool single_close = false;
    if (close == std::string::npos) {
        close = s.find("]->", rt_start);
        close_len = 3;
        single_close = true;
    }
    if (close == std::string::npos) return false;

    std::string src = strip_angle(s.substr(0, open));
    std::string rtype = strip_angle(s.substr(rt_start, close - rt_start));
    std::string dst = strip_angle(s.substr(close + close_len));
    if (src.empty() || rtype.empty() || dst.empty()) return false;

    out.display_id = display_id;
    out.src = EntityId(src);
    out.rtype = Label(rtype);
    out.dst = EntityId(dst);
    note.single_dash_arrow = single_open || single_close;
    return true;
}

ParsedResponse parse_response(const std::string& text,
                              const std::vector<std::string>& refusal_indicators) {
    ParsedResponse res;
    res.raw = text;
    if (contains(text, kRejectToken)) {
        res.kind = ResponseKind::Reject;
        return res;
    }
    if (contains(text, kNoneToken)) {
        res.kind = ResponseKind::None;
        return res;
    }

    auto lines = split_lines(text);
    size_t begin = 0, end = lines.size();
    for (size_t i = 0; i < lines.size(); ++i) {
        if (contains(lines[i], kRelationsOpen)) {
            begin = i + 1;
            for (size_t j = begin; j < lines.size(); ++j)
                if (contains(lines[j], kRelationsClose)) {
                    end = j;
                    break;
                }
            break;
        }
    }

    std::unordered_set<std::string> seen;
    for (size_t i = begin; i < end && i < lines.size(); ++i) {
        RelationQuad q;
        QuadNote note;
        if (!parse_relation_line(lines[i], q, note)) continue;
        std::string dedup = q.display_id + kFieldSep + quad_key(q);
        if (!seen.insert(dedup).second) continue;
        res.quads.push_back(std::move(q));
        res.notes.push_back(note);
    }
    if (!res.quads.empty()) {
        res.kind = ResponseKind::Relations;
        return res;
    }
    res.kind = detect_refusal(text, refusal_indicators) ? ResponseKind::Refusal
                                                        : ResponseKind::Unparseable;
    return res;
}

}  // namespace grasplab
