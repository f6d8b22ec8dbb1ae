#pragma once

// Evaluation against human judgments: quality/retention of a refinement
// step, nominal Krippendorff's alpha, Likert means, and the concept x field
// distribution. Everything here is a pure function of its inputs.

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "normgraph/schema.hpp"

namespace normgraph::metrics {

/// A ratio that may be undefined; `reason` says why when it is.
struct Rate {
  std::optional<double> value;
  std::string reason;

  static Rate of(std::size_t num, std::size_t den, const char* undefined_reason);
  bool defined() const { return value.has_value(); }
  /// Percentage rounded to `decimals` places. Throws MetricError when undefined.
  double percent(int decimals = 1) const;
};

void to_json(Json& j, const Rate& r);

/// Majority verdict per target over annotators of `aspect`; ties are bad.
std::map<std::string, bool> majority_good(const std::vector<HumanJudgment>& judgments, Aspect aspect);

struct QualityRetention {
  Rate quality;
  Rate retention;
  std::size_t original = 0;
  std::size_t retained = 0;
  std::size_t good_original = 0;
  std::size_t good_retained = 0;
};

void to_json(Json& j, const QualityRetention& q);

/// quality = |good ∩ retained| / |retained|, retention = |good ∩ retained| /
/// |good ∩ original|. Throws PreconditionError when retained is not a subset
/// of original or an original id has no human verdict.
QualityRetention quality_retention(const std::set<std::string>& original, const std::set<std::string>& retained,
                                   const std::map<std::string, bool>& good);
QualityRetention quality_retention(const std::set<std::string>& original, const std::set<std::string>& retained,
                                   const std::vector<HumanJudgment>& judgments, Aspect aspect);

struct AlphaResult {
  double alpha = 0;
  double d_observed = 0;
  double d_expected = 0;
  std::size_t units = 0;          // units with at least two ratings
  std::size_t dropped_units = 0;  // units with exactly one rating
  std::size_t pairable = 0;       // ratings inside counted units
};

void to_json(Json& j, const AlphaResult& a);

/// Nominal alpha from the coincidence matrix. Each unit lists the values it
/// received. Throws MetricError when no unit has two ratings or when the
/// expected disagreement is zero.
AlphaResult krippendorff_alpha(const std::vector<std::vector<std::string>>& units);
/// Units are targets, values are yes/no verdicts of `aspect`. Needs at
/// least two distinct annotators.
AlphaResult krippendorff_alpha(const std::vector<HumanJudgment>& judgments, Aspect aspect);

struct LikertResult {
  double mean = 0;
  std::size_t count = 0;
};

/// Mean of the Likert ratings present. Throws MetricError("no ratings") on
/// none and PreconditionError on a value outside 1-5.
LikertResult likert_mean(const std::vector<HumanJudgment>& judgments);
LikertResult likert_mean(const std::vector<int>& ratings);

struct Distribution {
  std::vector<std::string> concepts;  // concept names, creation order
  std::vector<std::string> fields;    // sorted; "unknown" for missing settings
  std::map<std::string, std::map<std::string, std::size_t>> counts;

  std::size_t at(const std::string& concept_name, const std::string& field) const;
  std::string to_csv() const;
  /// Heatmap spec with the table inlined as data values.
  Json to_vega_lite() const;
};

void to_json(Json& j, const Distribution& d);

/// Active assignments of non-discarded descriptions, counted by the setting
/// field of the description's conversation.
Distribution concept_field_distribution(const ProjectState& s);

// ---------------------------------------------------------------------------
// Project reports

struct QualityRow {
  Aspect aspect = Aspect::relevance;
  std::string stage;  // "generated", "self", "multiagent"
  QualityRetention result;
};

/// For each aspect: the generated content that humans judged, then each
/// workflow's retained subset of the judged targets it saw.
std::vector<QualityRow> quality_report(const ProjectState& s);

struct AgreementRow {
  Aspect aspect = Aspect::relevance;
  std::optional<AlphaResult> alpha;
  std::string reason;
};

std::vector<AgreementRow> agreement_report(const ProjectState& s);

Json quality_report_json(const std::vector<QualityRow>& rows);
Json agreement_report_json(const std::vector<AgreementRow>& rows);
std::string render_quality_table(const std::vector<QualityRow>& rows);
std::string render_agreement_table(const std::vector<AgreementRow>& rows);
std::string render_distribution_table(const Distribution& d);

/// Judgment file: JSONL of HumanJudgment records, or CSV with the header
/// target_id,annotator_id,aspect,verdict[,likert].
std::vector<HumanJudgment> parse_judgments(const std::string& text);

}  // namespace normgraph::metrics
