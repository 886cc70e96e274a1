#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "corag/lm.hpp"

// Client for completions-style HTTP endpoints: plain-text prompt in, choices
// with optional echoed logprobs out. Continuation scoring uses echo mode and
// reads token_logprobs/text_offset; endpoints that cannot echo logprobs raise
// CapabilityError instead of being silently approximated.

namespace corag::lm {
namespace {

using nlohmann::json;

json ids_as_logit_bias(const HttpBackendConfig& config,
                       const std::map<std::string, double>& bias,
                       const std::optional<std::set<std::string>>& allowed) {
  json out = json::object();
  auto ids_for = [&](const std::string& token, const char* feature) {
    auto it = config.token_ids.find(token);
    if (it == config.token_ids.end() || it->second.empty())
      throw CapabilityError(std::string(feature) + " requires a token id mapping for \"" + token +
                            "\" (configure token_ids)");
    return it->second;
  };
  for (const auto& [token, value] : bias)
    for (int id : ids_for(token, "logit_bias"))
      out[std::to_string(id)] = value;
  if (allowed) {
    // No native allowed-token parameter in the wire format; emulate by
    // strongly biasing every allowed token id.
    for (const auto& token : *allowed)
      for (int id : ids_for(token, "allowed_tokens")) {
        auto key = std::to_string(id);
        double prior = out.contains(key) ? out[key].get<double>() : 0.0;
        out[key] = prior + 100.0;
      }
  }
  return out;
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw std::invalid_argument("http backend needs a base_url");
  if (config_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
}

std::string HttpBackend::post_completions(const std::string& body, bool idempotent) {
  int attempts_allowed = idempotent ? config_.max_attempts : 1;
  std::string last_error;
  for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
    if (attempt > 1) {
      auto delay = config_.backoff_initial_ms * (1 << (attempt - 2));
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!config_.api_key.empty())
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    auto res = client.Post(config_.completions_path, headers, body, "application/json");
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server error " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status != 200)
      throw std::runtime_error("completions request rejected (" + std::to_string(res->status) +
                               "): " + res->body);
    return res->body;
  }
  throw TransportError(last_error + " after " + std::to_string(attempts_allowed) + " attempt(s)",
                       attempts_allowed);
}

CompletionResult HttpBackend::generate(const CompletionRequest& request) {
  if (request.temperature < 0.0) throw std::invalid_argument("temperature must be >= 0");
  if (request.max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (request.allowed_tokens && request.allowed_tokens->empty())
    throw std::invalid_argument("allowed_tokens must be non-empty when present");

  json body = {{"prompt", request.prompt},
               {"temperature", request.temperature},
               {"max_tokens", request.max_new_tokens}};
  if (!config_.model.empty()) body["model"] = config_.model;
  if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
  if (!request.logit_bias.empty() || request.allowed_tokens)
    body["logit_bias"] = ids_as_logit_bias(config_, request.logit_bias, request.allowed_tokens);
  if (request.seed) body["seed"] = *request.seed;

  bool idempotent = request.temperature == 0.0 || request.seed.has_value();
  json reply = json::parse(post_completions(body.dump(), idempotent));

  if (!reply.contains("choices") || reply["choices"].empty())
    throw std::runtime_error("completions reply has no choices");
  const json& choice = reply["choices"][0];
  CompletionResult result;
  result.text = choice.value("text", std::string());
  for (const auto& stop : request.stop_sequences) {
    if (stop.empty()) continue;
    if (auto at = result.text.find(stop); at != std::string::npos) result.text.resize(at);
  }
  if (!reply.contains("usage"))
    throw CapabilityError("endpoint reply lacks usage token counts");
  result.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
  result.generated_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
  return result;
}

ScoreResult HttpBackend::score_continuation(const std::string& prompt,
                                            const std::string& continuation) {
  if (continuation.empty()) throw std::invalid_argument("score_continuation: empty continuation");

  json body = {{"prompt", prompt + continuation},
               {"temperature", 0.0},
               {"max_tokens", 0},
               {"logprobs", 0},
               {"echo", true}};
  if (!config_.model.empty()) body["model"] = config_.model;

  json reply = json::parse(post_completions(body.dump(), /*idempotent=*/true));
  if (!reply.contains("choices") || reply["choices"].empty())
    throw std::runtime_error("completions reply has no choices");
  const json& choice = reply["choices"][0];
  if (!choice.contains("logprobs") || choice["logprobs"].is_null())
    throw CapabilityError("endpoint does not return echoed logprobs");
  const json& lp = choice["logprobs"];
  if (!lp.contains("token_logprobs") || !lp.contains("text_offset"))
    throw CapabilityError("endpoint logprobs lack token_logprobs/text_offset");

  const json& logprobs = lp["token_logprobs"];
  const json& offsets = lp["text_offset"];
  if (logprobs.size() != offsets.size())
    throw std::runtime_error("token_logprobs/text_offset length mismatch");

  ScoreResult result;
  std::size_t boundary = prompt.size();
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    if (offsets[i].get<std::size_t>() < boundary) {
      ++result.prompt_tokens;
      continue;
    }
    if (logprobs[i].is_null())
      throw CapabilityError("endpoint returned null logprob inside the continuation");
    double value = logprobs[i].get<double>();
    result.token_logprobs.push_back(value);
    result.sum_logprob += value;
  }
  if (result.token_logprobs.empty())
    throw std::runtime_error("no continuation tokens in echoed logprobs");
  result.avg_logprob = result.sum_logprob / static_cast<double>(result.token_logprobs.size());
  return result;
}

}  // namespace corag::lm
