#include "corag/decode.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "corag/rng.hpp"

namespace corag::decode {
namespace {

// Seed stream phases; sibling lanes at one (phase, depth) hold consecutive
// seeds, which keeps lane draws distinct for scripted choice sets sized to
// the lane count.
constexpr std::uint64_t kPhaseCandidate = 0xC1;
constexpr std::uint64_t kPhaseExpansion = 0xE2;
constexpr std::uint64_t kPhaseRollout = 0xF3;

std::uint64_t lane_base(std::uint64_t root, std::uint64_t phase, std::uint64_t depth) {
  return mix_seed(root, phase, depth);
}

void validate_common(const DecodeConfig& config) {
  if (config.max_length < 0) throw std::invalid_argument("max_length must be >= 0");
  if (config.n_chains < 1) throw std::invalid_argument("n_chains must be >= 1");
  if (config.subquery_temperature < 0.0)
    throw std::invalid_argument("subquery_temperature must be >= 0");
  if (config.n_rollouts < 1) throw std::invalid_argument("n_rollouts must be >= 1");
  if (config.rollout_depth < 0) throw std::invalid_argument("rollout_depth must be >= 0");
  if (config.expansion_size < 1) throw std::invalid_argument("expansion_size must be >= 1");
  if (config.stop_bias && !std::isfinite(*config.stop_bias))
    throw std::invalid_argument("stop_bias must be finite");
}

}  // namespace

Strategy parse_strategy(const std::string& name) {
  if (name == "greedy") return Strategy::greedy;
  if (name == "best_of_n") return Strategy::best_of_n;
  if (name == "tree_search") return Strategy::tree_search;
  throw std::invalid_argument("unknown decoding strategy: " + name);
}

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::greedy: return "greedy";
    case Strategy::best_of_n: return "best_of_n";
    case Strategy::tree_search: return "tree_search";
  }
  throw std::logic_error("unreachable");
}

void DecodeConfig::validate() const {
  validate_common(*this);
  if (strategy == Strategy::tree_search && expansion_size < 2)
    throw std::invalid_argument("tree_search needs expansion_size >= 2");
}

DecodeConfig DecodeConfig::from_json(const nlohmann::json& j) {
  DecodeConfig config;
  if (j.contains("strategy")) config.strategy = parse_strategy(j.at("strategy").get<std::string>());
  config.max_length = j.value("max_length", config.max_length);
  config.n_chains = j.value("n_chains", config.n_chains);
  config.subquery_temperature = j.value("subquery_temperature", config.subquery_temperature);
  config.expansion_size = j.value("expansion_size", config.expansion_size);
  config.n_rollouts = j.value("n_rollouts", config.n_rollouts);
  config.rollout_depth = j.value("rollout_depth", config.rollout_depth);
  if (j.contains("stop_bias") && !j.at("stop_bias").is_null())
    config.stop_bias = j.at("stop_bias").get<double>();
  config.seed = j.value("seed", config.seed);
  return config;
}

nlohmann::json DecodeConfig::to_json() const {
  nlohmann::json j;
  j["strategy"] = strategy_name(strategy);
  j["max_length"] = max_length;
  j["n_chains"] = n_chains;
  j["subquery_temperature"] = subquery_temperature;
  j["expansion_size"] = expansion_size;
  j["n_rollouts"] = n_rollouts;
  j["rollout_depth"] = rollout_depth;
  j["stop_bias"] = stop_bias ? nlohmann::json(*stop_bias) : nullptr;
  j["seed"] = seed;
  return j;
}

Decoder::Decoder(lm::LmBackend& backend, retrieval::Retriever& retriever,
                 const prompts::PromptSet& prompts, chain::EngineParams params)
    : backend_(backend), retriever_(retriever), prompts_(prompts), params_(params) {}

chain::EngineContext Decoder::context(RunTrace& trace) {
  return chain::EngineContext{lm::TracedLm(backend_, trace), retriever_, prompts_, params_};
}

double Decoder::chain_penalty(const chain::RetrievalChain& c, RunTrace& trace,
                              const std::string& detail) {
  if (c.steps.empty()) throw std::invalid_argument("chain_penalty of a zero-step chain");
  lm::TracedLm traced(backend_, trace);
  double sum = 0.0;
  for (const auto& step : c.steps) {
    std::string prompt =
        step.docs.empty()
            ? prompts::render_subanswer_prompt_with_documents_block(prompts_, step.sub_query,
                                                                    prompts::kNoDocuments)
            : prompts::render_subanswer_prompt(prompts_, step.sub_query, step.docs);
    auto score = traced.score(prompt, prompts::kNoInfoSentinel, "score.sentinel", detail);
    sum += score.sum_logprob;
  }
  return sum / static_cast<double>(c.steps.size());
}

chain::RetrievalChain Decoder::roll_candidate(chain::EngineContext& ctx,
                                              const DecodeConfig& config,
                                              const std::string& query,
                                              const prompts::TaskDescription& task,
                                              double temperature, int lane,
                                              const std::string& detail) {
  auto c = chain::make_chain(query, task, config.max_length);
  while (static_cast<int>(c.steps.size()) < config.max_length) {
    auto depth = static_cast<std::uint64_t>(c.steps.size());
    std::uint64_t seed = lane_base(config.seed, kPhaseCandidate, depth) +
                         static_cast<std::uint64_t>(lane);
    try {
      c = chain::advance(ctx, c, temperature, seed, detail);
    } catch (const chain::DegenerateGenerationError&) {
      break;  // cannot make progress; answer from what we have
    }
    if (config.stop_bias && chain::should_stop(ctx, c, *config.stop_bias, detail)) break;
  }
  return c;
}

DecodeOutcome Decoder::decode(const std::string& query, const prompts::TaskDescription& task,
                              const DecodeConfig& config) {
  switch (config.strategy) {
    case Strategy::greedy: return greedy(query, task, config);
    case Strategy::best_of_n: return best_of_n(query, task, config);
    case Strategy::tree_search: return tree_search(query, task, config);
  }
  throw std::logic_error("unreachable");
}

DecodeOutcome Decoder::greedy(const std::string& query, const prompts::TaskDescription& task,
                              DecodeConfig config) {
  // Greedy is best-of-1 at temperature 0, sharing that code path exactly so
  // the two produce identical chains and traces.
  config.strategy = Strategy::best_of_n;
  config.n_chains = 1;
  config.subquery_temperature = 0.0;
  DecodeOutcome outcome = best_of_n(query, task, config);
  outcome.all_candidates.clear();
  return outcome;
}

DecodeOutcome Decoder::best_of_n(const std::string& query, const prompts::TaskDescription& task,
                                 const DecodeConfig& config) {
  validate_common(config);
  DecodeOutcome outcome;
  auto ctx = context(outcome.trace);

  std::vector<chain::RetrievalChain> candidates;
  candidates.reserve(static_cast<std::size_t>(config.n_chains));
  for (int i = 0; i < config.n_chains; ++i)
    candidates.push_back(roll_candidate(ctx, config, query, task, config.subquery_temperature, i,
                                        "cand=" + std::to_string(i)));

  std::size_t winner = 0;
  if (config.n_chains > 1) {
    // Lowest penalty wins; a single candidate needs no scoring.
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      double penalty = candidates[i].steps.empty()
                           ? std::numeric_limits<double>::infinity()
                           : chain_penalty(candidates[i], outcome.trace,
                                           "cand=" + std::to_string(i));
      candidates[i].penalty = penalty;
      if (penalty < best) {
        best = penalty;
        winner = i;
      }
    }
  }

  outcome.chain = chain::finalize(ctx, candidates[winner], "cand=" + std::to_string(winner));
  outcome.all_candidates = std::move(candidates);
  return outcome;
}

DecodeOutcome Decoder::tree_search(const std::string& query,
                                   const prompts::TaskDescription& task,
                                   const DecodeConfig& config) {
  validate_common(config);
  DecodeOutcome outcome;
  auto ctx = context(outcome.trace);

  auto retained = chain::make_chain(query, task, config.max_length);
  std::optional<double> retained_penalty;

  while (static_cast<int>(retained.steps.size()) < config.max_length) {
    auto depth = static_cast<std::uint64_t>(retained.steps.size());
    std::string detail = "depth=" + std::to_string(depth);

    // Sample expansion sub-queries; duplicates (against the retained chain or
    // among siblings) are dropped without retry.
    std::vector<std::pair<int, std::string>> expansions;
    std::uint64_t exp_base = lane_base(config.seed, kPhaseExpansion, depth);
    for (int e = 0; e < config.expansion_size; ++e) {
      std::string sub_query = chain::generate_subquery(
          ctx, retained, config.subquery_temperature, exp_base + static_cast<std::uint64_t>(e),
          detail);
      bool duplicate = retained.has_sub_query(sub_query);
      for (const auto& [idx, accepted] : expansions) duplicate |= accepted == sub_query;
      if (!duplicate) expansions.emplace_back(e, std::move(sub_query));
    }
    if (expansions.empty()) {
      outcome.trace.record(TraceEvent{"tree.warning", detail + " all expansions degenerate", 0, 0, 0.0});
      break;
    }

    // Roll each expansion out and keep the one with the lowest mean penalty.
    std::size_t best_idx = 0;
    double best_penalty = std::numeric_limits<double>::infinity();
    std::vector<chain::RetrievalChain> expanded;
    expanded.reserve(expansions.size());
    for (std::size_t i = 0; i < expansions.size(); ++i) {
      const auto& [lane, sub_query] = expansions[i];
      auto candidate = chain::complete_step(ctx, retained, sub_query, detail);
      double penalty_sum = 0.0;
      for (int r = 0; r < config.n_rollouts; ++r) {
        auto rollout = candidate;
        rollout.max_length = static_cast<int>(rollout.steps.size()) + config.rollout_depth;
        for (int j = 0; j < config.rollout_depth; ++j) {
          std::uint64_t seed = mix_seed(config.seed, kPhaseRollout, depth,
                                        static_cast<std::uint64_t>(r),
                                        static_cast<std::uint64_t>(j)) +
                               static_cast<std::uint64_t>(lane);
          try {
            rollout = chain::advance(ctx, rollout, config.subquery_temperature, seed, detail);
          } catch (const chain::DegenerateGenerationError&) {
            break;
          }
        }
        penalty_sum += chain_penalty(rollout, outcome.trace, detail);
      }
      double mean_penalty = penalty_sum / static_cast<double>(config.n_rollouts);
      if (mean_penalty < best_penalty) {
        best_penalty = mean_penalty;
        best_idx = i;
      }
      expanded.push_back(std::move(candidate));
    }

    retained = std::move(expanded[best_idx]);
    retained_penalty = best_penalty;
  }

  retained.penalty = retained_penalty;
  outcome.chain = chain::finalize(ctx, retained);
  return outcome;
}

}  // namespace corag::decode
