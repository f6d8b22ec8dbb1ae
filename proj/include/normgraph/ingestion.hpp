#pragma once

// Corpus loaders and provider-based filling of missing factual fields.
//
// Supported layouts:
//   mpdd_json      {"<dialog id>": [{"speaker", "utterance", "listener":
//                  [{"name", "relation"}], "emotion"}, ...], ...}
//   cped_csv       header row with Dialogue_ID, Speaker, Utterance and
//                  optional Emotion, Sentiment, DA, Scene columns
//   ldc_dir        directory of <id>.tsv files (speaker, text, then optional
//                  emotion, dialogue_act, norm_violation columns) with an
//                  optional <id>.meta.json {"field", "attributes", "summary"}
//   generic_jsonl  one Conversation document per line (the canonical form)

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "normgraph/provider.hpp"
#include "normgraph/schema.hpp"
#include "normgraph/store.hpp"

namespace normgraph::ingestion {

enum class CorpusFormat { mpdd_json, cped_csv, ldc_dir, generic_jsonl };

CorpusFormat parse_format(std::string_view s);

struct RecordError {
  std::string location;  // file:line or file:record
  std::string message;
};

struct LoadResult {
  std::vector<Conversation> conversations;
  std::vector<RecordError> errors;
  std::vector<std::string> warnings;
  std::size_t turns = 0;
};

/// Throws ParseError when no conversation could be parsed.
LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// RFC 4180 rows (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string to_jsonl(const std::vector<Conversation>& convs);

/// Plans add_conversation events for conversations not yet in the store.
std::vector<Event> plan_ingest(const ProjectState& s, const std::vector<Conversation>& convs);

// ---------------------------------------------------------------------------
// Field filling

enum class FillField { relationships, settings, summary };

FillField parse_fill_field(std::string_view s);

/// Prompt text per field. The summary wording follows the elicitation script.
std::string fill_prompt(FillField f);

/// "A: B - mother-son", "A and B: colleagues", "A - B: friends". Lines whose
/// endpoints are not speakers are skipped.
std::vector<Relationship> parse_relationships(std::string_view text, const std::vector<std::string>& speakers);

/// "Field: family" plus "Key: value" attribute lines. nullopt without a
/// Field line.
std::optional<SettingsRecord> parse_settings(std::string_view text);

struct FillResult {
  std::string conversation_id;
  /// Absent when nothing could be filled.
  std::optional<Event> event;
  std::vector<std::string> errors;
  int provider_calls = 0;
};

/// Requests every field in `fields`; each field gets one retry when its
/// response cannot be parsed. Throws PreconditionError when a requested
/// field is already present.
FillResult fill_missing_fields(const Conversation& c, const std::set<FillField>& fields, ChatProvider& provider,
                               const RetryPolicy& retry = {}, util::RateLimiter* limiter = nullptr);

/// Fills many conversations with bounded parallelism. Events come back in
/// input order; conversations that already have a field are skipped for it.
std::vector<FillResult> fill_batch(const std::vector<Conversation>& convs, const std::set<FillField>& fields,
                                   ChatProvider& provider, std::size_t parallelism, const RetryPolicy& retry = {},
                                   util::RateLimiter* limiter = nullptr);

// ---------------------------------------------------------------------------
// Down-sampling

/// Turn sample id: "<conversation id>#<turn index>".
std::string turn_sample_id(const Conversation& c, const Turn& t);

/// Keeps round(fraction * count) of the turns carrying each listed label of
/// `task` (chosen by a seeded shuffle) and every other turn. Returns the
/// retained sample ids. Apply once per data split.
std::set<std::string> downsample(const std::vector<Conversation>& convs, LabelTask task,
                                 const std::map<std::string, double>& fraction_by_label, std::uint64_t seed);

}  // namespace normgraph::ingestion
