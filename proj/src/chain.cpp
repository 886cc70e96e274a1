#include "corag/chain.hpp"

#include <set>

#include "corag/rng.hpp"

namespace corag::chain {
namespace {

std::string trim(std::string s) {
  auto is_ws = [](unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  std::size_t begin = 0;
  while (begin < s.size() && is_ws(s[begin])) ++begin;
  std::size_t end = s.size();
  while (end > begin && is_ws(s[end - 1])) --end;
  return s.substr(begin, end - begin);
}

}  // namespace

prompts::ChainHistory RetrievalChain::history() const {
  prompts::ChainHistory h;
  h.reserve(steps.size());
  for (const auto& step : steps) h.push_back(prompts::QaTurn{step.sub_query, step.sub_answer});
  return h;
}

bool RetrievalChain::has_sub_query(std::string_view candidate) const {
  for (const auto& step : steps)
    if (step.sub_query == candidate) return true;
  return false;
}

RetrievalChain make_chain(std::string query, prompts::TaskDescription task, int max_length) {
  if (max_length < 0) throw std::invalid_argument("chain max_length must be >= 0");
  RetrievalChain chain;
  chain.query = std::move(query);
  chain.task = std::move(task);
  chain.max_length = max_length;
  return chain;
}

std::string generate_subquery(EngineContext& ctx, const RetrievalChain& chain,
                              double temperature, std::uint64_t seed,
                              const std::string& detail) {
  lm::CompletionRequest request;
  request.prompt =
      prompts::render_subquery_prompt(ctx.prompts, chain.query, chain.history(), chain.task);
  request.temperature = temperature;
  request.max_new_tokens = ctx.params.max_subquery_tokens;
  if (temperature > 0.0) request.seed = seed;
  auto result = ctx.lm.generate(request, "generate.subquery", detail);
  return trim(result.text);
}

RetrievalChain complete_step(EngineContext& ctx, RetrievalChain chain, std::string sub_query,
                             const std::string& detail) {
  if (chain.frozen()) throw std::logic_error("complete_step on a frozen chain");

  ChainStep step;
  step.sub_query = std::move(sub_query);
  step.retrieved = ctx.retriever.search(step.sub_query, ctx.params.step_k);
  ctx.lm.trace().record_retrieval(detail);
  step.docs = retrieval::hydrate(ctx.retriever, step.retrieved,
                                 static_cast<std::size_t>(ctx.params.step_k));

  lm::CompletionRequest request;
  request.prompt =
      step.docs.empty()
          ? prompts::render_subanswer_prompt_with_documents_block(ctx.prompts, step.sub_query,
                                                                  prompts::kNoDocuments)
          : prompts::render_subanswer_prompt(ctx.prompts, step.sub_query, step.docs);
  request.temperature = 0.0;
  request.max_new_tokens = ctx.params.max_subanswer_tokens;
  auto result = ctx.lm.generate(request, "generate.subanswer", detail);
  step.sub_answer = trim(result.text);

  chain.steps.push_back(std::move(step));
  return chain;
}

RetrievalChain advance(EngineContext& ctx, RetrievalChain chain, double temperature,
                       std::uint64_t seed, const std::string& detail) {
  if (chain.frozen()) throw std::logic_error("advance on a frozen chain");
  if (static_cast<int>(chain.steps.size()) >= chain.max_length)
    throw std::logic_error("advance beyond chain max_length");

  std::string sub_query;
  for (int attempt = 0; attempt <= ctx.params.duplicate_retries; ++attempt) {
    std::uint64_t attempt_seed = attempt == 0 ? seed : mix_seed(seed, 0x52455452ull + attempt);
    sub_query = generate_subquery(ctx, chain, temperature, attempt_seed, detail);
    if (!chain.has_sub_query(sub_query)) return complete_step(ctx, std::move(chain), sub_query, detail);
  }
  throw DegenerateGenerationError("sub-query duplicates an earlier step after " +
                                  std::to_string(ctx.params.duplicate_retries) +
                                  " retries: " + sub_query);
}

RetrievalChain finalize(EngineContext& ctx, RetrievalChain chain, const std::string& detail) {
  if (chain.frozen()) throw std::logic_error("finalize on a frozen chain");

  chain.final_retrieved = ctx.retriever.search(chain.query, ctx.params.final_k);
  ctx.lm.trace().record_retrieval(detail);
  chain.final_docs = retrieval::hydrate(ctx.retriever, chain.final_retrieved,
                                        static_cast<std::size_t>(ctx.params.final_k));

  lm::CompletionRequest request;
  request.prompt = chain.final_docs.empty()
                       ? prompts::render_final_prompt_with_documents_block(
                             ctx.prompts, chain.query, chain.history(), prompts::kNoDocuments,
                             chain.task)
                       : prompts::render_final_prompt(ctx.prompts, chain.query, chain.history(),
                                                      chain.final_docs, chain.task);
  request.temperature = 0.0;
  request.max_new_tokens = ctx.params.max_final_tokens;
  auto result = ctx.lm.generate(request, "generate.final", detail);
  chain.final_answer = trim(result.text);
  return chain;
}

bool should_stop(EngineContext& ctx, const RetrievalChain& chain, double yes_logit_bias,
                 const std::string& detail) {
  lm::CompletionRequest request;
  request.prompt = prompts::render_stop_prompt(ctx.prompts, chain.query, chain.history());
  request.temperature = 0.0;
  request.max_new_tokens = 1;
  request.allowed_tokens = std::set<std::string>{"Yes", "No"};
  request.logit_bias["Yes"] = yes_logit_bias;
  auto result = ctx.lm.generate(request, "generate.stop", detail);
  return result.text == "Yes";
}

TraceTotals totals(const RunTrace& trace) {
  return TraceTotals{trace.prompt_tokens(), trace.generated_tokens(), trace.retriever_calls()};
}

nlohmann::json chain_to_json(const RetrievalChain& chain, const TraceTotals& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& step : chain.steps) {
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& entry : step.retrieved) ids.push_back(entry.doc_id);
    steps.push_back({{"sub_query", step.sub_query},
                     {"sub_answer", step.sub_answer},
                     {"doc_ids", std::move(ids)}});
  }
  nlohmann::json j;
  j["query"] = chain.query;
  j["task"] = chain.task.dataset_id;
  j["steps"] = std::move(steps);
  j["final_answer"] = chain.final_answer ? nlohmann::json(*chain.final_answer) : nullptr;
  j["penalty"] = chain.penalty ? nlohmann::json(*chain.penalty) : nullptr;
  j["answer_logprob"] =
      chain.answer_logprob ? nlohmann::json(*chain.answer_logprob) : nullptr;
  j["trace"] = {{"prompt_tokens", trace.prompt_tokens},
                {"generated_tokens", trace.generated_tokens},
                {"retriever_calls", trace.retriever_calls}};
  return j;
}

}  // namespace corag::chain
