#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "corag/chain.hpp"
#include "corag/decode.hpp"

// Rejection sampling of retrieval chains for QA instances that only have a
// final gold answer. Chains are sampled until one "hits" (its sub-answer
// matches the gold, or the gold becomes likely enough under the final-answer
// prompt) or the chain budget runs out; the chain whose history gives the
// gold answer the highest log-likelihood becomes training supervision for
// every intermediate task.

namespace corag::sampler {

struct QaInstance {
  std::string query;
  std::vector<std::string> answers;  // >= 1 golds; the first is scored
  std::string dataset_id;
};

enum class TrainingTask {
  final_answer_prediction,
  sub_query_prediction,
  sub_answer_prediction,
  stop_prediction,
};
const char* training_task_name(TrainingTask task);

struct TrainingInstance {
  TrainingTask task;
  std::string prompt;
  std::string target;
};

struct SamplerParams {
  int max_chains = 16;
  int length_min = 1;  // per-chain max length drawn uniformly from
  int length_max = 5;  // [length_min, length_max]
  double subquery_temperature = 0.7;
  double accept_avg_logprob = -0.05;  // gold avg-logprob termination threshold
  double subtask_sample_ratio = 0.2;  // per-step emission probability
};

struct AugmentedInstance {
  QaInstance qa;
  chain::RetrievalChain best;  // final_answer holds the gold
  RankedList final_retrieved;
  std::vector<Document> final_docs;
  double answer_logprob = 0.0;  // winner's summed gold logprob
  // Summed gold logprob per history prefix, index = prefix length 0..L.
  std::vector<double> prefix_sum_logprobs;
};

class ChainSampler {
 public:
  ChainSampler(lm::LmBackend& backend, retrieval::Retriever& retriever,
               const prompts::PromptSet& prompts, chain::EngineParams engine = {},
               SamplerParams params = {});

  // Samples chains until a success criterion fires or max_chains is reached.
  // Chain termination reasons: answer_match, likelihood, max_length,
  // degenerate. Returned in sampling order; each chain's drawn budget is in
  // its max_length.
  std::vector<chain::RetrievalChain> sample_chains(const QaInstance& qa,
                                                   const prompts::TaskDescription& task,
                                                   std::uint64_t seed, RunTrace& trace);

  // Argmax of the gold answer's summed logprob under the final-answer prompt
  // rendered with each candidate's history and the given main-query
  // documents; ties prefer shorter chains, then lower index.
  AugmentedInstance select_best_chain(const std::vector<chain::RetrievalChain>& candidates,
                                      const QaInstance& qa,
                                      const prompts::TaskDescription& task,
                                      const RankedList& final_retrieved,
                                      const std::vector<Document>& final_docs, RunTrace& trace);

  // sample_chains + select_best_chain with one shared retrieval and score
  // cache (repeated prefix scores issue no extra LM calls).
  AugmentedInstance augment(const QaInstance& qa, const prompts::TaskDescription& task,
                            std::uint64_t seed, RunTrace& trace);

  // Deterministic given (aug, ratio, seed); issues no LM calls. Order:
  // final_answer_prediction, per-step coin-selected sub_query/sub_answer
  // instances, stop_prediction for every prefix length 0..L ("Yes" exactly at
  // the argmax prefix).
  std::vector<TrainingInstance> emit_training_instances(const AugmentedInstance& aug,
                                                        double ratio, std::uint64_t seed) const;

  const SamplerParams& params() const { return params_; }

 private:
  friend struct SampleSession;
  lm::LmBackend& backend_;
  retrieval::Retriever& retriever_;
  const prompts::PromptSet& prompts_;
  chain::EngineParams engine_;
  SamplerParams params_;
};

// One augmented-dataset line: the chain schema plus answers, answer_logprob,
// final_doc_ids, and termination.
nlohmann::json augmented_to_json(const AugmentedInstance& aug, const chain::TraceTotals& trace);

nlohmann::json training_to_json(const TrainingInstance& instance);

}  // namespace corag::sampler
