#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "corag/document.hpp"
#include "corag/lm.hpp"
#include "corag/prompts.hpp"

// Shared test fixtures.
//
// Two kinds of scripted worlds:
//  - the hand-built footballer birthdate scenario (a concrete three-hop
//    decomposition with known intermediate answers and final answer "4"),
//  - a parametric "maze" scenario family whose rules are generated from a
//    spec, used wherever tests need many distinct deterministic multi-hop
//    worlds (randomized equivalence checks, token accounting, stop sweeps).
//
// Maze worlds: at every step the sub-query prompt offers `variants` probe
// questions for the next level; each probe has a fixed finding text, a fixed
// sentinel logprob (how strongly the step smells uninformative), and the
// final/stop/gold-scoring rules key off how deep the chain history goes.

namespace fixtures {

corag::prompts::PromptSet load_prompts();
corag::prompts::TaskDescription multihop_task();

// ---------------------------------------------------------------------------
// Footballer birthdate scenario
// ---------------------------------------------------------------------------

extern const char* const kBirthdateQuery;        // months between two birthdates
extern const char* const kBirthdateGold;         // "4"
extern const char* const kBirthdateSubQuery1;
extern const char* const kBirthdateSubQuery2;
extern const char* const kBirthdateSubQuery3;    // the date-difference question
extern const char* const kBirthdateNoChainAnswer;  // wrong answer without steps

std::vector<corag::Document> birthdate_corpus();  // 6 documents
std::vector<corag::lm::ScriptedRule> birthdate_rules();

// ---------------------------------------------------------------------------
// Maze scenario family
// ---------------------------------------------------------------------------

struct ScenarioSpec {
  std::uint64_t id = 1;  // distinguishes queries, probes, and corpus content
  int levels = 14;       // deepest level with its own probe choice set
  int variants = 4;      // probe choices per level

  // Sentinel scoring: probes of informative_variant score the no-information
  // sentinel at informative_logprob per token, everything else at
  // background_logprob (informative = sentinel very unlikely = low penalty).
  int informative_variant = -1;
  double informative_logprob = -2.0;
  double background_logprob = -0.01;

  // Final answer is the gold string iff the history has >= gold_depth steps;
  // -1 means the final answer is always wrong.
  int gold_depth = -1;

  // Gold-answer scoring per history prefix length (avg logprob per token);
  // entries beyond the vector fall back to default_gold_logprob.
  std::vector<double> gold_avg_logprobs;
  double default_gold_logprob = -1.0;

  // Optional per-(last step level, variant) gold scoring, keyed on the last
  // history line; takes precedence over the per-depth schedule.
  std::map<std::pair<int, int>, double> gold_by_last_step;

  // Stop probe "Yes" logit after k completed steps ("No" stays at 0);
  // entries beyond the vector fall back to default_stop_logit.
  std::vector<double> stop_yes_logits;
  double default_stop_logit = -100.0;

  std::string query() const;
  std::string probe(int level, int variant) const;
  std::string finding(int level, int variant) const;
  std::string gold() const;
  std::string wrong() const;
};

std::vector<corag::lm::ScriptedRule> scenario_rules(const ScenarioSpec& spec);
std::vector<corag::Document> scenario_corpus(const ScenarioSpec& spec, int n_docs = 12);

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

std::string rules_to_json(const std::vector<corag::lm::ScriptedRule>& rules);

void write_file(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Fresh empty directory under the system temp root; wiped if it exists.
std::filesystem::path fresh_dir(const std::string& name);

}  // namespace fixtures
