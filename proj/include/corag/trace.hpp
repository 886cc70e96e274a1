#pragma once

#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

// Per-run token accounting. One RunTrace accompanies one query instance from
// first LM call to final answer; every generate/score call and every retriever
// round-trip appends exactly one event. Totals are kept incrementally and
// always equal the sum over events (asserted in tests).

namespace corag {

struct TraceEvent {
  std::string op;      // "generate.subquery", "score.answer", "retrieve", ...
  std::string detail;  // free-form context tag, e.g. "depth=2" or "cand=3"
  std::int64_t prompt_tokens = 0;
  std::int64_t generated_tokens = 0;
  double duration_ms = 0.0;  // wall time; never serialized into run outputs
};

class RunTrace {
 public:
  RunTrace() = default;
  RunTrace(const RunTrace&) = delete;
  RunTrace& operator=(const RunTrace&) = delete;

  // Moves are only safe while no other thread uses the source; decode
  // strategies move the finished trace into their outcome.
  RunTrace(RunTrace&& other) noexcept {
    std::lock_guard<std::mutex> lock(other.mu_);
    events_ = std::move(other.events_);
    prompt_tokens_ = other.prompt_tokens_;
    generated_tokens_ = other.generated_tokens_;
    retriever_calls_ = other.retriever_calls_;
  }

  void record(TraceEvent ev) {
    std::lock_guard<std::mutex> lock(mu_);
    prompt_tokens_ += ev.prompt_tokens;
    generated_tokens_ += ev.generated_tokens;
    events_.push_back(std::move(ev));
  }

  void record_retrieval(std::string detail, double duration_ms = 0.0) {
    std::lock_guard<std::mutex> lock(mu_);
    ++retriever_calls_;
    events_.push_back(TraceEvent{"retrieve", std::move(detail), 0, 0, duration_ms});
  }

  std::int64_t prompt_tokens() const {
    std::lock_guard<std::mutex> lock(mu_);
    return prompt_tokens_;
  }
  std::int64_t generated_tokens() const {
    std::lock_guard<std::mutex> lock(mu_);
    return generated_tokens_;
  }
  std::int64_t total_tokens() const {
    std::lock_guard<std::mutex> lock(mu_);
    return prompt_tokens_ + generated_tokens_;
  }
  std::int64_t retriever_calls() const {
    std::lock_guard<std::mutex> lock(mu_);
    return retriever_calls_;
  }

  std::vector<TraceEvent> events() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<TraceEvent> events_;
  std::int64_t prompt_tokens_ = 0;
  std::int64_t generated_tokens_ = 0;
  std::int64_t retriever_calls_ = 0;
};

}  // namespace corag
