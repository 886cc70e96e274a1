#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "corag/lm.hpp"
#include "corag/rng.hpp"

namespace corag::lm {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

void validate_request(const CompletionRequest& request) {
  if (request.temperature < 0.0)
    throw std::invalid_argument("temperature must be >= 0");
  if (request.max_new_tokens < 1)
    throw std::invalid_argument("max_new_tokens must be >= 1");
  if (request.allowed_tokens && request.allowed_tokens->empty())
    throw std::invalid_argument("allowed_tokens must be non-empty when present");
}

bool prompt_matches(const ScriptedRule& rule, const std::string& prompt) {
  return std::all_of(rule.match_substrings.begin(), rule.match_substrings.end(),
                     [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
}

// Cut before the earliest stop sequence occurrence.
std::string apply_stop_sequences(std::string text, const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    auto at = text.find(stop);
    if (at != std::string::npos) cut = std::min(cut, at);
  }
  if (cut != std::string::npos) text.resize(cut);
  return text;
}

// Keep at most max_tokens whitespace tokens, preserving original spacing.
std::string truncate_tokens(const std::string& text, int max_tokens) {
  int seen = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    if (seen == max_tokens) return text.substr(0, i);
    while (i < text.size() && !is_space(text[i])) ++i;
    ++seen;
    if (seen == max_tokens) return text.substr(0, i);
  }
  return text;
}

}  // namespace

std::int64_t count_tokens(const std::string& text) {
  std::int64_t n = 0;
  bool in_token = false;
  for (char c : text) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++n;
    }
  }
  return n;
}

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules) : rules_(std::move(rules)) {
  bool has_default = false;
  for (const auto& rule : rules_) {
    if (rule.per_token_logprob && *rule.per_token_logprob > 0.0)
      throw std::invalid_argument("scripted per_token_logprob must be <= 0");
    for (double lp : rule.per_token_logprob_list)
      if (lp > 0.0) throw std::invalid_argument("scripted per_token_logprob_list entries must be <= 0");
    bool scores = rule.per_token_logprob.has_value() || !rule.per_token_logprob_list.empty();
    if (rule.match_substrings.empty() && !rule.match_continuation && !rule.output_choices.empty() &&
        scores)
      has_default = true;
  }
  if (!has_default)
    throw std::invalid_argument(
        "scripted rule set requires a default rule (no match constraints, with output text and "
        "per-token logprob)");
}

std::vector<ScriptedRule> ScriptedBackend::parse_rules(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.is_array()) throw std::invalid_argument("scripted rules file must hold a JSON array");
  std::vector<ScriptedRule> rules;
  for (const auto& item : j) {
    ScriptedRule rule;
    if (item.contains("match_substring")) {
      std::string m = item.at("match_substring").get<std::string>();
      if (!m.empty()) rule.match_substrings.push_back(std::move(m));
    }
    if (item.contains("match_substrings"))
      for (const auto& m : item.at("match_substrings"))
        rule.match_substrings.push_back(m.get<std::string>());
    if (item.contains("match_continuation_substring"))
      rule.match_continuation = item.at("match_continuation_substring").get<std::string>();
    if (item.contains("output_text"))
      rule.output_choices.push_back(item.at("output_text").get<std::string>());
    if (item.contains("output_choices"))
      for (const auto& c : item.at("output_choices"))
        rule.output_choices.push_back(c.get<std::string>());
    if (item.contains("token_logits"))
      for (auto& [token, logit] : item.at("token_logits").items())
        rule.token_logits[token] = logit.get<double>();
    if (item.contains("per_token_logprob"))
      rule.per_token_logprob = item.at("per_token_logprob").get<double>();
    if (item.contains("per_token_logprob_list"))
      for (const auto& lp : item.at("per_token_logprob_list"))
        rule.per_token_logprob_list.push_back(lp.get<double>());
    rules.push_back(std::move(rule));
  }
  return rules;
}

ScriptedBackend ScriptedBackend::load(const std::filesystem::path& rules_file) {
  std::ifstream in(rules_file);
  if (!in) throw std::runtime_error("cannot read scripted rules file: " + rules_file.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ScriptedBackend(parse_rules(text));
}

CompletionResult ScriptedBackend::generate(const CompletionRequest& request) {
  validate_request(request);

  const ScriptedRule* rule = nullptr;
  for (const auto& r : rules_) {
    if (r.match_continuation) continue;
    if (!prompt_matches(r, request.prompt)) continue;
    if (r.output_choices.empty() && !request.allowed_tokens) continue;
    rule = &r;
    break;
  }
  if (!rule) throw std::runtime_error("no scripted rule matches generation prompt");

  std::string text;
  if (request.allowed_tokens) {
    // Constrained decode over the allowed vocabulary.
    auto logit_of = [&](const std::string& token) {
      double logit = 0.0;
      if (auto it = rule->token_logits.find(token); it != rule->token_logits.end())
        logit = it->second;
      if (auto it = request.logit_bias.find(token); it != request.logit_bias.end())
        logit += it->second;
      return logit;
    };
    if (request.temperature == 0.0) {
      for (const auto& token : *request.allowed_tokens) {
        // std::set iterates in lexicographic order, so ties keep the smaller token.
        if (text.empty() || logit_of(token) > logit_of(text)) text = token;
      }
    } else {
      std::vector<std::pair<std::string, double>> probs;
      double max_logit = -HUGE_VAL;
      for (const auto& token : *request.allowed_tokens)
        max_logit = std::max(max_logit, logit_of(token) / request.temperature);
      double z = 0.0;
      for (const auto& token : *request.allowed_tokens) {
        double w = std::exp(logit_of(token) / request.temperature - max_logit);
        z += w;
        probs.emplace_back(token, w);
      }
      Rng rng(mix_seed(request.seed.value_or(0), fnv1a64(request.prompt)));
      double u = rng.uniform01() * z;
      double acc = 0.0;
      text = probs.back().first;
      for (const auto& [token, w] : probs) {
        acc += w;
        if (u < acc) {
          text = token;
          break;
        }
      }
    }
  } else {
    const auto& choices = rule->output_choices;
    std::size_t idx = 0;
    if (request.temperature > 0.0 && choices.size() > 1)
      idx = static_cast<std::size_t>(request.seed.value_or(0) % choices.size());
    text = choices[idx];
  }

  text = apply_stop_sequences(std::move(text), request.stop_sequences);
  text = truncate_tokens(text, request.max_new_tokens);

  CompletionResult result;
  result.text = std::move(text);
  result.prompt_tokens = count_tokens(request.prompt);
  result.generated_tokens = count_tokens(result.text);
  return result;
}

ScoreResult ScriptedBackend::score_continuation(const std::string& prompt,
                                                const std::string& continuation) {
  std::int64_t n_tokens = count_tokens(continuation);
  if (n_tokens == 0) throw std::invalid_argument("score_continuation: empty continuation");

  const ScriptedRule* rule = nullptr;
  for (const auto& r : rules_) {
    if (!prompt_matches(r, prompt)) continue;
    if (r.match_continuation &&
        continuation.find(*r.match_continuation) == std::string::npos)
      continue;
    if (!r.per_token_logprob && r.per_token_logprob_list.empty()) continue;
    rule = &r;
    break;
  }
  if (!rule) throw std::runtime_error("no scripted rule matches scoring request");

  ScoreResult result;
  result.token_logprobs.reserve(static_cast<std::size_t>(n_tokens));
  for (std::int64_t i = 0; i < n_tokens; ++i) {
    double lp;
    if (!rule->per_token_logprob_list.empty()) {
      auto idx = std::min<std::size_t>(static_cast<std::size_t>(i),
                                       rule->per_token_logprob_list.size() - 1);
      lp = rule->per_token_logprob_list[idx];
    } else {
      lp = *rule->per_token_logprob;
    }
    result.token_logprobs.push_back(lp);
    result.sum_logprob += lp;
  }
  result.avg_logprob = result.sum_logprob / static_cast<double>(n_tokens);
  result.prompt_tokens = count_tokens(prompt);
  return result;
}

CompletionResult TracedLm::generate(const CompletionRequest& request, std::string op,
                                    std::string detail) {
  auto start = std::chrono::steady_clock::now();
  CompletionResult result = backend_.generate(request);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                  .count();
  trace_.record(TraceEvent{std::move(op), std::move(detail), result.prompt_tokens,
                           result.generated_tokens, ms});
  return result;
}

ScoreResult TracedLm::score(const std::string& prompt, const std::string& continuation,
                            std::string op, std::string detail) {
  auto start = std::chrono::steady_clock::now();
  ScoreResult result = backend_.score_continuation(prompt, continuation);
  double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                  .count();
  trace_.record(TraceEvent{std::move(op), std::move(detail),
                           result.prompt_tokens + static_cast<std::int64_t>(result.token_logprobs.size()),
                           0, ms});
  return result;
}

}  // namespace corag::lm
