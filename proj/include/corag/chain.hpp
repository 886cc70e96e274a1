#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "corag/document.hpp"
#include "corag/lm.hpp"
#include "corag/prompts.hpp"
#include "corag/retrieval.hpp"
#include "corag/trace.hpp"

// The retrieval-chain state machine: a chain is a sequence of
// (sub-query, retrieved docs, sub-answer) steps over one main query, frozen
// once a final answer is attached. advance/finalize/should_stop issue all of
// their LM and retriever calls through a TracedLm so the run ledger stays
// complete.

namespace corag::chain {

// A sub-query identical to an earlier one in the same chain was generated
// repeatedly; the step cannot make progress.
class DegenerateGenerationError : public std::runtime_error {
 public:
  explicit DegenerateGenerationError(const std::string& what) : std::runtime_error(what) {}
};

struct ChainStep {
  std::string sub_query;
  RankedList retrieved;            // ranked ids as returned by the retriever
  std::vector<Document> docs;      // hydrated top documents, drive the prompts
  std::string sub_answer;
};

struct RetrievalChain {
  std::string query;
  prompts::TaskDescription task;
  int max_length = 0;  // configured L for this chain instance
  std::vector<ChainStep> steps;
  std::optional<std::string> final_answer;
  std::optional<double> penalty;
  std::optional<double> answer_logprob;
  RankedList final_retrieved;       // retrieval for the main query (finalize)
  std::vector<Document> final_docs;
  std::optional<std::string> termination;  // sampler bookkeeping

  bool frozen() const { return final_answer.has_value(); }
  prompts::ChainHistory history() const;
  bool has_sub_query(std::string_view candidate) const;
};

RetrievalChain make_chain(std::string query, prompts::TaskDescription task, int max_length);

struct EngineParams {
  int step_k = 5;    // documents retrieved per sub-query
  int final_k = 20;  // documents retrieved for the final answer
  int duplicate_retries = 3;
  int max_subquery_tokens = 64;
  int max_subanswer_tokens = 128;
  int max_final_tokens = 128;
};

struct EngineContext {
  lm::TracedLm lm;
  retrieval::Retriever& retriever;
  const prompts::PromptSet& prompts;
  EngineParams params;
};

// One sub-query sampling attempt (no duplicate retry loop).
std::string generate_subquery(EngineContext& ctx, const RetrievalChain& chain,
                              double temperature, std::uint64_t seed,
                              const std::string& detail = {});

// Retrieve for sub_query, answer it at temperature 0, append the step.
RetrievalChain complete_step(EngineContext& ctx, RetrievalChain chain, std::string sub_query,
                             const std::string& detail = {});

// generate_subquery with duplicate retries, then complete_step. Throws
// DegenerateGenerationError once the retry budget is spent. The chain is
// taken by value, so a caller that wants its chain back after a throw must
// pass an lvalue; a moved-in argument is consumed even on failure.
RetrievalChain advance(EngineContext& ctx, RetrievalChain chain, double temperature,
                       std::uint64_t seed, const std::string& detail = {});

// Retrieve for the main query and attach the final answer; freezes the chain.
RetrievalChain finalize(EngineContext& ctx, RetrievalChain chain,
                        const std::string& detail = {});

// Constrained Yes/No probe with an additive bias on "Yes". Tokens are charged
// to the trace like any other call.
bool should_stop(EngineContext& ctx, const RetrievalChain& chain, double yes_logit_bias,
                 const std::string& detail = {});

struct TraceTotals {
  std::int64_t prompt_tokens = 0;
  std::int64_t generated_tokens = 0;
  std::int64_t retriever_calls = 0;
};
TraceTotals totals(const RunTrace& trace);

// Persistence line: {query, task, steps:[{sub_query, sub_answer, doc_ids}],
// final_answer, penalty, answer_logprob, trace:{prompt_tokens,
// generated_tokens, retriever_calls}}.
nlohmann::json chain_to_json(const RetrievalChain& chain, const TraceTotals& trace);

}  // namespace corag::chain
