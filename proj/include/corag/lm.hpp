#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "corag/trace.hpp"

// Language-model gateway. Two backends share one interface: a deterministic
// scripted backend driven by substring-match rules (tests, offline runs) and
// an HTTP client for completions-style endpoints. All token accounting flows
// through TracedLm so a run's ledger sees every call.

namespace corag::lm {

// The requested feature exists but this backend cannot honor it.
class CapabilityError : public std::runtime_error {
 public:
  explicit CapabilityError(const std::string& what) : std::runtime_error(what) {}
};

// Network-level failure after all permitted attempts.
class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts)
      : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.0;                  // >= 0
  int max_new_tokens = 0;                    // >= 1
  std::vector<std::string> stop_sequences;   // may be empty
  std::map<std::string, double> logit_bias;  // token string -> additive bias
  std::optional<std::set<std::string>> allowed_tokens;  // non-empty when present
  std::optional<std::uint64_t> seed;         // sampling stream for temperature > 0
};

struct CompletionResult {
  std::string text;  // stop sequences removed, <= max_new_tokens tokens
  std::int64_t prompt_tokens = 0;
  std::int64_t generated_tokens = 0;
};

struct ScoreResult {
  std::vector<double> token_logprobs;  // one per continuation token, each <= 0
  double sum_logprob = 0.0;
  double avg_logprob = 0.0;
  std::int64_t prompt_tokens = 0;  // tokens in the conditioning prompt
};

class LmBackend {
 public:
  virtual ~LmBackend() = default;
  virtual CompletionResult generate(const CompletionRequest& request) = 0;
  virtual ScoreResult score_continuation(const std::string& prompt,
                                         const std::string& continuation) = 0;
};

// Whitespace token count; the scripted backend's notion of a token.
std::int64_t count_tokens(const std::string& text);

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------
//
// Rules are matched in file order; the first applicable rule wins. A rule
// applies when every match substring occurs in the prompt (and, for score
// calls, the optional continuation substring occurs in the continuation).
// A default rule with an empty match list is required. Generation at
// temperature 0 emits output_text (the first of output_choices); at
// temperature > 0 the request seed selects among output_choices via
// seed % #choices. Constrained requests (allowed_tokens) pick the
// highest-logit allowed token from token_logits plus logit_bias, ties to the
// lexicographically smaller token. Both entry points are pure functions of
// (rule set, request).

struct ScriptedRule {
  std::vector<std::string> match_substrings;             // all must occur in prompt
  std::optional<std::string> match_continuation;         // score calls only
  std::vector<std::string> output_choices;               // >= 1 entry for generation
  std::map<std::string, double> token_logits;            // constrained decode
  std::optional<double> per_token_logprob;               // <= 0
  std::vector<double> per_token_logprob_list;            // each <= 0
};

class ScriptedBackend : public LmBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptedRule> rules);
  static ScriptedBackend load(const std::filesystem::path& rules_file);
  static std::vector<ScriptedRule> parse_rules(const std::string& json_text);

  CompletionResult generate(const CompletionRequest& request) override;
  ScoreResult score_continuation(const std::string& prompt,
                                 const std::string& continuation) override;

 private:
  std::vector<ScriptedRule> rules_;
};

// ---------------------------------------------------------------------------
// HTTP backend (completions-style endpoint)
// ---------------------------------------------------------------------------

struct HttpBackendConfig {
  std::string base_url;           // e.g. "http://127.0.0.1:8080"
  std::string completions_path = "/v1/completions";
  std::string model;              // sent verbatim when non-empty
  std::string api_key;            // Authorization: Bearer <key> when non-empty
  int max_attempts = 3;           // transport retries with exponential backoff
  int backoff_initial_ms = 100;
  int timeout_seconds = 120;
  // Token string -> backend token ids, required for logit_bias /
  // allowed_tokens. A string mapping to several ids biases all of them.
  std::map<std::string, std::vector<int>> token_ids;
};

class HttpBackend : public LmBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  CompletionResult generate(const CompletionRequest& request) override;
  ScoreResult score_continuation(const std::string& prompt,
                                 const std::string& continuation) override;

 private:
  std::string post_completions(const std::string& body, bool idempotent);
  HttpBackendConfig config_;
};

// ---------------------------------------------------------------------------
// Traced gateway
// ---------------------------------------------------------------------------

// Binds a backend to a run trace: every call appends exactly one ledger
// event. Score calls charge prompt + continuation as processed tokens.
class TracedLm {
 public:
  TracedLm(LmBackend& backend, RunTrace& trace) : backend_(backend), trace_(trace) {}

  CompletionResult generate(const CompletionRequest& request, std::string op,
                            std::string detail = {});
  ScoreResult score(const std::string& prompt, const std::string& continuation, std::string op,
                    std::string detail = {});

  RunTrace& trace() { return trace_; }
  LmBackend& backend() { return backend_; }

 private:
  LmBackend& backend_;
  RunTrace& trace_;
};

}  // namespace corag::lm
