#include "corag/sampler.hpp"

#include <limits>
#include <stdexcept>
#include <unordered_map>

#include "corag/evaluation.hpp"
#include "corag/rng.hpp"

namespace corag::sampler {
namespace {

constexpr std::uint64_t kPhaseLength = 0x4C;
constexpr std::uint64_t kPhaseStep = 0x5A;
constexpr std::uint64_t kPhaseEmit = 0x45;

// Per-instance working state: the main-query retrieval and every gold-answer
// score are computed once and reused across chains, selection, and labeling.
// Cache hits issue no LM call and charge no tokens.
struct Session {
  const QaInstance& qa;
  prompts::TaskDescription task;
  const prompts::PromptSet& prompts;
  chain::EngineContext ctx;
  RankedList final_retrieved;
  std::vector<Document> final_docs;
  std::string documents_block;
  std::unordered_map<std::string, lm::ScoreResult> cache;

  Session(lm::LmBackend& backend, retrieval::Retriever& retriever,
          const prompts::PromptSet& prompt_set, chain::EngineParams engine,
          const QaInstance& qa_in, prompts::TaskDescription task_in, RunTrace& trace)
      : qa(qa_in), task(std::move(task_in)), prompts(prompt_set),
        ctx{lm::TracedLm(backend, trace), retriever, prompt_set, engine} {
    if (qa.answers.empty()) throw std::invalid_argument("QA instance without gold answers");
    final_retrieved = ctx.retriever.search(qa.query, ctx.params.final_k);
    ctx.lm.trace().record_retrieval("main-query");
    final_docs = retrieval::hydrate(ctx.retriever, final_retrieved,
                                    static_cast<std::size_t>(ctx.params.final_k));
    documents_block = final_docs.empty() ? std::string(prompts::kNoDocuments)
                                         : prompts::format_documents(final_docs);
  }

  // Reuse an existing main-query retrieval (standalone selection).
  Session(lm::LmBackend& backend, retrieval::Retriever& retriever,
          const prompts::PromptSet& prompt_set, chain::EngineParams engine,
          const QaInstance& qa_in, prompts::TaskDescription task_in, RunTrace& trace,
          RankedList final_ranked, std::vector<Document> docs)
      : qa(qa_in), task(std::move(task_in)), prompts(prompt_set),
        ctx{lm::TracedLm(backend, trace), retriever, prompt_set, engine},
        final_retrieved(std::move(final_ranked)), final_docs(std::move(docs)) {
    if (qa.answers.empty()) throw std::invalid_argument("QA instance without gold answers");
    documents_block = final_docs.empty() ? std::string(prompts::kNoDocuments)
                                         : prompts::format_documents(final_docs);
  }

  // Gold answer scored as a continuation of the final-answer prompt rendered
  // with this history prefix and the main-query documents.
  const lm::ScoreResult& score_gold(const prompts::ChainHistory& history,
                                    const std::string& detail) {
    std::string prompt = prompts::render_final_prompt_with_documents_block(
        prompts, qa.query, history, documents_block, task);
    auto it = cache.find(prompt);
    if (it != cache.end()) return it->second;
    auto result = ctx.lm.score(prompt, qa.answers.front(), "score.answer", detail);
    return cache.emplace(std::move(prompt), std::move(result)).first->second;
  }

  std::vector<chain::RetrievalChain> sample(const SamplerParams& params, std::uint64_t seed) {
    std::vector<chain::RetrievalChain> chains;
    Rng length_rng(mix_seed(seed, kPhaseLength));
    bool instance_done = false;
    for (int c = 0; c < params.max_chains && !instance_done; ++c) {
      int span = params.length_max - params.length_min + 1;
      int budget = params.length_min +
                   static_cast<int>(length_rng.bounded(static_cast<std::uint64_t>(span)));
      auto current = chain::make_chain(qa.query, task, budget);
      std::string detail = "chain=" + std::to_string(c);

      while (static_cast<int>(current.steps.size()) < budget) {
        auto depth = static_cast<std::uint64_t>(current.steps.size());
        std::uint64_t step_seed =
            mix_seed(seed, kPhaseStep, depth) + static_cast<std::uint64_t>(c);
        try {
          current = chain::advance(ctx, current, params.subquery_temperature, step_seed, detail);
        } catch (const chain::DegenerateGenerationError&) {
          current.termination = "degenerate";
          break;
        }
        if (evaluation::exact_match(current.steps.back().sub_answer, qa.answers)) {
          current.termination = "answer_match";
          instance_done = true;
          break;
        }
        const auto& score = score_gold(current.history(), detail);
        if (score.avg_logprob > params.accept_avg_logprob) {
          current.termination = "likelihood";
          instance_done = true;
          break;
        }
      }
      if (!current.termination) current.termination = "max_length";
      chains.push_back(std::move(current));
    }
    return chains;
  }

  AugmentedInstance select(const std::vector<chain::RetrievalChain>& candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_best_chain: no candidates");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      std::string detail = "chain=" + std::to_string(i);
      double score = score_gold(candidates[i].history(), detail).sum_logprob;
      bool take = score > best_score ||
                  (score == best_score &&
                   candidates[i].steps.size() < candidates[best].steps.size());
      if (i == 0 || take) {
        best = i;
        best_score = score;
      }
    }

    AugmentedInstance aug;
    aug.qa = qa;
    aug.best = candidates[best];
    aug.best.answer_logprob = best_score;
    aug.best.final_answer = qa.answers.front();
    aug.best.final_retrieved = final_retrieved;
    aug.best.final_docs = final_docs;
    aug.final_retrieved = final_retrieved;
    aug.final_docs = final_docs;
    aug.answer_logprob = best_score;

    prompts::ChainHistory history = aug.best.history();
    aug.prefix_sum_logprobs.reserve(history.size() + 1);
    for (std::size_t p = 0; p <= history.size(); ++p) {
      prompts::ChainHistory prefix(history.begin(), history.begin() + static_cast<long>(p));
      aug.prefix_sum_logprobs.push_back(score_gold(prefix, "prefix=" + std::to_string(p)).sum_logprob);
    }
    return aug;
  }
};

}  // namespace

const char* training_task_name(TrainingTask task) {
  switch (task) {
    case TrainingTask::final_answer_prediction: return "final_answer_prediction";
    case TrainingTask::sub_query_prediction: return "sub_query_prediction";
    case TrainingTask::sub_answer_prediction: return "sub_answer_prediction";
    case TrainingTask::stop_prediction: return "stop_prediction";
  }
  throw std::logic_error("unreachable");
}

ChainSampler::ChainSampler(lm::LmBackend& backend, retrieval::Retriever& retriever,
                           const prompts::PromptSet& prompts, chain::EngineParams engine,
                           SamplerParams params)
    : backend_(backend), retriever_(retriever), prompts_(prompts), engine_(engine),
      params_(params) {
  if (params_.max_chains < 1) throw std::invalid_argument("max_chains must be >= 1");
  if (params_.length_min < 1 || params_.length_max < params_.length_min)
    throw std::invalid_argument("chain length range must satisfy 1 <= min <= max");
  if (params_.subtask_sample_ratio < 0.0 || params_.subtask_sample_ratio > 1.0)
    throw std::invalid_argument("subtask_sample_ratio must be in [0, 1]");
}

std::vector<chain::RetrievalChain> ChainSampler::sample_chains(
    const QaInstance& qa, const prompts::TaskDescription& task, std::uint64_t seed,
    RunTrace& trace) {
  Session session(backend_, retriever_, prompts_, engine_, qa, task, trace);
  return session.sample(params_, seed);
}

AugmentedInstance ChainSampler::select_best_chain(
    const std::vector<chain::RetrievalChain>& candidates, const QaInstance& qa,
    const prompts::TaskDescription& task, const RankedList& final_retrieved,
    const std::vector<Document>& final_docs, RunTrace& trace) {
  Session session(backend_, retriever_, prompts_, engine_, qa, task, trace, final_retrieved,
                  final_docs);
  return session.select(candidates);
}

AugmentedInstance ChainSampler::augment(const QaInstance& qa,
                                        const prompts::TaskDescription& task,
                                        std::uint64_t seed, RunTrace& trace) {
  Session session(backend_, retriever_, prompts_, engine_, qa, task, trace);
  auto chains = session.sample(params_, seed);
  return session.select(chains);
}

std::vector<TrainingInstance> ChainSampler::emit_training_instances(
    const AugmentedInstance& aug, double ratio, std::uint64_t seed) const {
  if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("ratio must be in [0, 1]");
  const auto& best = aug.best;
  prompts::ChainHistory history = best.history();
  if (aug.prefix_sum_logprobs.size() != history.size() + 1)
    throw std::invalid_argument("augmented instance lacks prefix scores");
  if (aug.qa.answers.empty()) throw std::invalid_argument("augmented instance without golds");

  std::string documents_block = aug.final_docs.empty()
                                    ? std::string(prompts::kNoDocuments)
                                    : prompts::format_documents(aug.final_docs);
  std::vector<TrainingInstance> out;
  out.push_back(TrainingInstance{
      TrainingTask::final_answer_prediction,
      prompts::render_final_prompt_with_documents_block(prompts_, aug.qa.query, history,
                                                        documents_block, best.task),
      aug.qa.answers.front()});

  // Two independent coins per step, drawn in a fixed order.
  Rng coins(mix_seed(seed, kPhaseEmit));
  for (std::size_t i = 0; i < best.steps.size(); ++i) {
    prompts::ChainHistory prefix(history.begin(), history.begin() + static_cast<long>(i));
    bool emit_sub_query = coins.uniform01() < ratio;
    bool emit_sub_answer = coins.uniform01() < ratio;
    if (emit_sub_query)
      out.push_back(TrainingInstance{
          TrainingTask::sub_query_prediction,
          prompts::render_subquery_prompt(prompts_, aug.qa.query, prefix, best.task),
          best.steps[i].sub_query});
    if (emit_sub_answer) {
      const auto& step = best.steps[i];
      std::string prompt =
          step.docs.empty()
              ? prompts::render_subanswer_prompt_with_documents_block(prompts_, step.sub_query,
                                                                      prompts::kNoDocuments)
              : prompts::render_subanswer_prompt(prompts_, step.sub_query, step.docs);
      out.push_back(TrainingInstance{TrainingTask::sub_answer_prediction, std::move(prompt),
                                     step.sub_answer});
    }
  }

  // "Yes" exactly at the prefix that maximizes the gold answer's summed
  // logprob; ties resolve to the shortest prefix.
  std::size_t best_prefix = 0;
  for (std::size_t p = 1; p < aug.prefix_sum_logprobs.size(); ++p)
    if (aug.prefix_sum_logprobs[p] > aug.prefix_sum_logprobs[best_prefix]) best_prefix = p;
  for (std::size_t p = 0; p <= history.size(); ++p) {
    prompts::ChainHistory prefix(history.begin(), history.begin() + static_cast<long>(p));
    out.push_back(TrainingInstance{
        TrainingTask::stop_prediction,
        prompts::render_stop_prompt(prompts_, aug.qa.query, prefix),
        p == best_prefix ? "Yes" : "No"});
  }
  return out;
}

nlohmann::json augmented_to_json(const AugmentedInstance& aug, const chain::TraceTotals& trace) {
  nlohmann::json j = chain::chain_to_json(aug.best, trace);
  j["answers"] = aug.qa.answers;
  j["answer_logprob"] = aug.answer_logprob;
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& entry : aug.final_retrieved) ids.push_back(entry.doc_id);
  j["final_doc_ids"] = std::move(ids);
  j["termination"] = aug.best.termination ? nlohmann::json(*aug.best.termination) : nullptr;
  return j;
}

nlohmann::json training_to_json(const TrainingInstance& instance) {
  return nlohmann::json{{"task", training_task_name(instance.task)},
                        {"prompt", instance.prompt},
                        {"target", instance.target}};
}

}  // namespace corag::sampler
