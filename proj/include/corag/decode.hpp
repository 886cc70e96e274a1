#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corag/chain.hpp"

// Test-time strategies over retrieval chains. All of them spend more tokens
// to (hopefully) answer better, and every spent token lands in the outcome's
// trace: candidates, rollouts, and penalty scoring included, retrieval
// excluded. Sampling is reproducible: sibling candidates or expansions at the
// same depth draw from deterministic per-lane seed streams.

namespace corag::decode {

enum class Strategy { greedy, best_of_n, tree_search };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy strategy);

struct DecodeConfig {
  Strategy strategy = Strategy::greedy;
  int max_length = 6;   // L: sub-query steps before the final answer
  int n_chains = 1;     // N: sampled candidate chains (best_of_n)
  double subquery_temperature = 0.7;
  int expansion_size = 4;  // tree_search branching factor
  int n_rollouts = 2;      // rollouts per expansion
  int rollout_depth = 2;   // max extra steps per rollout
  std::optional<double> stop_bias;  // enables the learned stop probe
  std::uint64_t seed = 0;

  // Strict front-door validation (CLI/config path). The strategy functions
  // themselves also accept degenerate shapes (e.g. expansion_size=1) so
  // collapsed configurations remain testable.
  void validate() const;

  static DecodeConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct DecodeOutcome {
  chain::RetrievalChain chain;  // finalized winner
  std::vector<chain::RetrievalChain> all_candidates;  // best_of_n candidates; empty for greedy
  RunTrace trace;
};

class Decoder {
 public:
  Decoder(lm::LmBackend& backend, retrieval::Retriever& retriever,
          const prompts::PromptSet& prompts, chain::EngineParams params = {});

  DecodeOutcome decode(const std::string& query, const prompts::TaskDescription& task,
                       const DecodeConfig& config);

  DecodeOutcome greedy(const std::string& query, const prompts::TaskDescription& task,
                       DecodeConfig config);
  DecodeOutcome best_of_n(const std::string& query, const prompts::TaskDescription& task,
                          const DecodeConfig& config);
  DecodeOutcome tree_search(const std::string& query, const prompts::TaskDescription& task,
                            const DecodeConfig& config);

  // Mean over steps of the summed log-probability of the no-information
  // sentinel under each step's sub-answer prompt. Lower means the steps
  // looked informative. Rejects zero-step chains.
  double chain_penalty(const chain::RetrievalChain& c, RunTrace& trace,
                       const std::string& detail = {});

 private:
  chain::EngineContext context(RunTrace& trace);
  chain::RetrievalChain roll_candidate(chain::EngineContext& ctx, const DecodeConfig& config,
                                       const std::string& query,
                                       const prompts::TaskDescription& task, double temperature,
                                       int lane, const std::string& detail);

  lm::LmBackend& backend_;
  retrieval::Retriever& retriever_;
  const prompts::PromptSet& prompts_;
  chain::EngineParams params_;
};

}  // namespace corag::decode
