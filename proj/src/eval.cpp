#include "grasplab/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <unordered_map>
#include <unordered_set>

#include "grasplab/errors.hpp"

namespace grasplab {

namespace {

constexpr char kFieldSep = '\x1f';

std::string pair_key(const std::string& a, const std::string& b, bool directed) {
    if (directed || a <= b) return a + kFieldSep + b;
    return b + kFieldSep + a;
}

std::string criterion_key(const std::string& src, const std::string& rtype,
                          const std::string& dst, MatchCriterion c, bool directed) {
    if (c == MatchCriterion::Naive) return pair_key(src, dst, directed);
    return rtype + kFieldSep + pair_key(src, dst, directed);
}

double safe_div(double num, double den) { return den == 0 ? 0.0 : num / den; }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

const char* criterion_name(MatchCriterion c) {
    return c == MatchCriterion::RType ? "rtype" : "naive";
}

MatchCriterion parse_criterion(const std::string& name) {
    std::string n = to_lower_ascii(trim(name));
    if (n == "rtype") return MatchCriterion::RType;
    if (n == "naive") return MatchCriterion::Naive;
    throw ConfigError("unknown match criterion: " + name);
}

bool quads_match(const RelationQuad& pred, const RelationEdge& gt, MatchCriterion criterion,
                 bool directed) {
    return criterion_key(pred.src.key, pred.rtype.key, pred.dst.key, criterion, directed) ==
           criterion_key(gt.src.key, gt.rtype.key, gt.dst.key, criterion, directed);
}

TargetScore score_target(const std::vector<RelationQuad>& preds, const RelationSet& gt,
                         MatchCriterion criterion, bool directed) {
    std::unordered_set<std::string> pred_keys;
    for (const auto& p : preds)
        pred_keys.insert(criterion_key(p.src.key, p.rtype.key, p.dst.key, criterion, directed));
    std::unordered_set<std::string> gt_keys;
    for (const auto& e : gt)
        gt_keys.insert(criterion_key(e.src.key, e.rtype.key, e.dst.key, criterion, directed));

    int tp = 0;
    for (const auto& k : pred_keys)
        if (gt_keys.count(k)) ++tp;

    TargetScore s;
    s.tp = tp;
    s.fp = static_cast<int>(pred_keys.size()) - tp;
    s.fn = static_cast<int>(gt_keys.size()) - tp;
    s.precision = safe_div(tp, tp + s.fp);
    s.recall = safe_div(tp, tp + s.fn);
    s.f1 = safe_div(2.0 * s.precision * s.recall, s.precision + s.recall);
    return s;
}

double rejection_rate(const std::vector<ParsedResponse>& responses) {
    if (responses.empty())
        throw ContractError("rejection_rate needs at least one response");
    int hits = 0;
    for (const auto& r : responses)
        if (r.kind == ResponseKind::Reject || detect_refusal(r.raw)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(responses.size());
}

namespace {

std::vector<std::string> rouge_tokens(const std::string& text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (char c : text) {
        unsigned char u = static_cast<unsigned char>(c);
        if (u < 0x80 && std::ispunct(u))
            cleaned.push_back(' ');
        else
            cleaned.push_back(c);
    }
    cleaned = to_lower_ascii(cleaned);
    std::vector<std::string> tokens;
    size_t i = 0;
    while (i < cleaned.size()) {
        while (i < cleaned.size() && is_space(cleaned[i])) ++i;
        size_t start = i;
        while (i < cleaned.size() && !is_space(cleaned[i])) ++i;
        if (i > start) tokens.push_back(cleaned.substr(start, i - start));
    }
    return tokens;
}

}  // namespace

double rouge_l_f1(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> c = rouge_tokens(candidate);
    std::vector<std::string> r = rouge_tokens(reference);
    if (c.empty() || r.empty()) return 0.0;

    std::vector<std::vector<int>> dp(c.size() + 1, std::vector<int>(r.size() + 1, 0));
    for (size_t i = 1; i <= c.size(); ++i)
        for (size_t j = 1; j <= r.size(); ++j)
            dp[i][j] = c[i - 1] == r[j - 1] ? dp[i - 1][j - 1] + 1
                                            : std::max(dp[i - 1][j], dp[i][j - 1]);
    double lcs = dp[c.size()][r.size()];
    double p = lcs / static_cast<double>(c.size());
    double rec = lcs / static_cast<double>(r.size());
    if (p + rec == 0) return 0.0;
    return 2.0 * p * rec / (p + rec);
}

ExperimentReport summarize(std::vector<TargetResult> targets, double rejection,
                           std::optional<double> utility) {
    ExperimentReport rep;
    rep.targets = std::move(targets);
    rep.rejection = rejection;
    rep.utility = utility;
    auto fold = [&](auto proj) {
        TargetScore m;
        double n = static_cast<double>(rep.targets.size());
        for (const auto& t : rep.targets) {
            const TargetScore& s = proj(t);
            m.precision += s.precision;
            m.recall += s.recall;
            m.f1 += s.f1;
            m.tp += s.tp;
            m.fp += s.fp;
            m.fn += s.fn;
        }
        if (n > 0) {
            m.precision /= n;
            m.recall /= n;
            m.f1 /= n;
        }
        return m;
    };
    rep.macro_rtype = fold([](const TargetResult& t) -> const TargetScore& { return t.rtype; });
    rep.macro_naive = fold([](const TargetResult& t) -> const TargetScore& { return t.naive; });
    return rep;
}

std::string report_to_csv(const ExperimentReport& report) {
    std::string out = "target,criterion,precision,recall,f1,tp,fp,fn\n";
    auto row = [&](const std::string& target, const char* criterion, const TargetScore& s) {
        std::string cell = target;
        // CSV quoting for labels with commas or quotes.
        if (cell.find(',') != std::string::npos || cell.find('"') != std::string::npos)
            cell = "\"" + replace_all(cell, "\"", "\"\"") + "\"";
        out += cell;
        out += ",";
        out += criterion;
        out += "," + format_double(s.precision) + "," + format_double(s.recall) + "," +
               format_double(s.f1) + "," + std::to_string(s.tp) + "," + std::to_string(s.fp) +
               "," + std::to_string(s.fn) + "\n";
    };
    for (const auto& t : report.targets) {
        row(t.target, "rtype", t.rtype);
        row(t.target, "naive", t.naive);
    }
    row("macro", "rtype", report.macro_rtype);
    row("macro", "naive", report.macro_naive);
    return out;
}

}  // namespace grasplab
