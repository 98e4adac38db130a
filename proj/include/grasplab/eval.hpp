#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grasplab/kg.hpp"
#include "grasplab/wire.hpp"

namespace grasplab {

// RType compares (src, rtype, dst), both endpoints swapped as well when the
// graph is undirected. Naive compares the endpoint pair only.
enum class MatchCriterion { RType, Naive };

const char* criterion_name(MatchCriterion c);
MatchCriterion parse_criterion(const std::string& name);

bool quads_match(const RelationQuad& pred, const RelationEdge& gt, MatchCriterion criterion,
                 bool directed);

struct TargetScore {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

// Counts under maximum bipartite matching between deduplicated predictions
// and ground truth. With these equality relations exact-match bucketing is
// already maximal. Under Naive the ground truth collapses to unique pairs.
TargetScore score_target(const std::vector<RelationQuad>& preds, const RelationSet& gt,
                         MatchCriterion criterion, bool directed);

// Fraction of responses that refused or rejected. Empty input is a contract
// violation.
double rejection_rate(const std::vector<ParsedResponse>& responses);

// Longest-common-subsequence F1 over whitespace tokens, case-folded with
// punctuation replaced by spaces. Either side empty scores 0.
double rouge_l_f1(const std::string& candidate, const std::string& reference);

struct TargetResult {
    std::string target;
    TargetScore rtype;
    TargetScore naive;
    bool complete = true;
};

struct ExperimentReport {
    std::vector<TargetResult> targets;
    TargetScore macro_rtype;  // unweighted means; count fields hold sums
    TargetScore macro_naive;
    double rejection = 0;
    std::optional<double> utility;
};

ExperimentReport summarize(std::vector<TargetResult> targets, double rejection,
                           std::optional<double> utility);

// CSV with one row per (target, criterion) and a trailing macro row per
// criterion. Columns: target, criterion, precision, recall, f1, tp, fp, fn.
std::string report_to_csv(const ExperimentReport& report);

}  // namespace grasplab
