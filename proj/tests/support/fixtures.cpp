#include "support/fixtures.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "corag/rng.hpp"

namespace fixtures {

using corag::Document;
using corag::lm::ScriptedRule;
using nlohmann::json;

namespace {

// Substrings unique to each template, used to key scripted rules to the
// prompt kind they should answer.
const char* const kSubQueryMarker = "Respond with a simple follow-up question";
const char* const kSubAnswerMarker = "Given the following documents, generate an appropriate answer";
const char* const kFinalMarker = "generate a final answer for the main query";
const char* const kStopMarker = "judge whether you have enough information";

const char* const kSentinel = "No relevant information found";

std::string depth_marker(int k) { return "Intermediate answer " + std::to_string(k) + ":"; }

ScriptedRule default_rule() {
  ScriptedRule rule;
  rule.output_choices = {"unknown"};
  rule.per_token_logprob = -5.0;
  return rule;
}

}  // namespace

corag::prompts::PromptSet load_prompts() {
  return corag::prompts::PromptSet::load_from_dir(std::filesystem::path(CORAG_ASSET_DIR) /
                                                  "prompts");
}

corag::prompts::TaskDescription multihop_task() {
  return corag::prompts::TaskDescription{"hotpotqa", "answer multi-hop questions"};
}

// ---------------------------------------------------------------------------
// Footballer birthdate scenario
// ---------------------------------------------------------------------------

const char* const kBirthdateQuery =
    "How many months apart are Johan Mjällby and Neil Lennon in age?";
const char* const kBirthdateGold = "4";
const char* const kBirthdateSubQuery1 = "What is Johan Mjällby's birthdate?";
const char* const kBirthdateSubQuery2 = "What is Neil Lennon's birthdate?";
const char* const kBirthdateSubQuery3 =
    "What is the difference in months between 9 February 1971 and 25 June 1971?";
const char* const kBirthdateNoChainAnswer = "two months";

std::vector<Document> birthdate_corpus() {
  return {
      {"mjallby", "Johan Mjällby",
       "Johan Mjällby (born 9 February 1971) is a Swedish former footballer who played as "
       "a defender for Celtic and captained the Sweden national team."},
      {"lennon-neil", "Neil Lennon",
       "Neil Francis Lennon (born 25 June 1971) is a Northern Irish football manager and former "
       "midfielder who captained Celtic."},
      {"lennon-john", "John Lennon",
       "John Winston Ono Lennon (9 October 1940 - 8 December 1980) was an English singer and "
       "songwriter who rose to fame as a member of the Beatles."},
      {"celtic", "Celtic F.C.",
       "Celtic Football Club is a Scottish professional club based in Glasgow, where Mjällby "
       "and Lennon played together in defence and midfield."},
      {"month", "Month",
       "A month is a unit of time used with calendars that is approximately as long as a natural "
       "orbital period of the Moon; twelve months make a year."},
      {"sweden", "Sweden national football team",
       "The Sweden national football team represents Sweden in men's international football and "
       "is controlled by the Swedish Football Association."},
  };
}

std::vector<ScriptedRule> birthdate_rules() {
  std::vector<ScriptedRule> rules;
  auto add = [&](std::vector<std::string> match, std::string output) {
    ScriptedRule rule;
    rule.match_substrings = std::move(match);
    rule.output_choices = {std::move(output)};
    rules.push_back(std::move(rule));
  };

  // Sub-query generation, deepest history first. After the third step the
  // only follow-up on offer repeats step 3, which the engine rejects as
  // degenerate, so decoding proceeds to the final answer.
  add({kSubQueryMarker, kBirthdateQuery, depth_marker(3)}, kBirthdateSubQuery3);
  add({kSubQueryMarker, kBirthdateQuery, depth_marker(2)}, kBirthdateSubQuery3);
  add({kSubQueryMarker, kBirthdateQuery, depth_marker(1)}, kBirthdateSubQuery2);
  add({kSubQueryMarker, kBirthdateQuery}, kBirthdateSubQuery1);

  // Grounded sub-answers.
  add({kSubAnswerMarker, kBirthdateSubQuery3}, "4 months");
  add({kSubAnswerMarker, kBirthdateSubQuery1}, "9 February 1971");
  add({kSubAnswerMarker, kBirthdateSubQuery2}, "25 June 1971");

  // Final answer: correct once the date-difference step is in the history,
  // the plain retrieval-only guess otherwise.
  add({kFinalMarker, kBirthdateQuery, depth_marker(3)}, kBirthdateGold);
  add({kFinalMarker, kBirthdateQuery}, kBirthdateNoChainAnswer);

  rules.push_back(default_rule());
  return rules;
}

// ---------------------------------------------------------------------------
// Maze scenario family
// ---------------------------------------------------------------------------

std::string ScenarioSpec::query() const {
  return "What waits at the end of maze " + std::to_string(id) + "?";
}

std::string ScenarioSpec::probe(int level, int variant) const {
  return "probe " + std::to_string(id) + "." + std::to_string(level) + "." +
         std::string(1, static_cast<char>('a' + variant)) + "?";
}

std::string ScenarioSpec::finding(int level, int variant) const {
  return "finding " + std::to_string(id) + "." + std::to_string(level) + "." +
         std::string(1, static_cast<char>('a' + variant));
}

std::string ScenarioSpec::gold() const { return "relic " + std::to_string(id); }

std::string ScenarioSpec::wrong() const { return "dead end " + std::to_string(id); }

std::vector<ScriptedRule> scenario_rules(const ScenarioSpec& spec) {
  std::vector<ScriptedRule> rules;
  const std::string query = spec.query();
  const int max_depth = spec.levels + 4;  // histories may outrun the level count

  // Probe answers and their sentinel scores.
  for (int level = 1; level <= spec.levels; ++level) {
    for (int v = 0; v < spec.variants; ++v) {
      ScriptedRule answer;
      answer.match_substrings = {kSubAnswerMarker, spec.probe(level, v)};
      answer.output_choices = {spec.finding(level, v)};
      rules.push_back(std::move(answer));

      ScriptedRule sentinel_score;
      sentinel_score.match_substrings = {kSubAnswerMarker, spec.probe(level, v)};
      sentinel_score.match_continuation = kSentinel;
      sentinel_score.per_token_logprob =
          v == spec.informative_variant ? spec.informative_logprob : spec.background_logprob;
      rules.push_back(std::move(sentinel_score));
    }
  }

  // Sub-query choices per depth, deepest history first.
  for (int k = spec.levels - 1; k >= 0; --k) {
    ScriptedRule rule;
    rule.match_substrings = {kSubQueryMarker, query};
    if (k > 0) rule.match_substrings.push_back(depth_marker(k));
    for (int v = 0; v < spec.variants; ++v) rule.output_choices.push_back(spec.probe(k + 1, v));
    rules.push_back(std::move(rule));
  }

  // Gold scoring keyed on the last history line. Deepest keys first: a long
  // history contains the marker lines of all its prefixes, so emitting
  // shallow keys first would shadow the deeper ones.
  for (auto it = spec.gold_by_last_step.rbegin(); it != spec.gold_by_last_step.rend(); ++it) {
    const auto& [key, logprob] = *it;
    ScriptedRule rule;
    rule.match_substrings = {kFinalMarker, query,
                             depth_marker(key.first) + " " + spec.finding(key.first, key.second)};
    rule.match_continuation = spec.gold();
    rule.per_token_logprob = logprob;
    rules.push_back(std::move(rule));
  }

  // Final answer and gold scoring per history depth.
  for (int k = max_depth; k >= 0; --k) {
    std::vector<std::string> matchers = {kFinalMarker, query};
    if (k > 0) matchers.push_back(depth_marker(k));

    ScriptedRule final_rule;
    final_rule.match_substrings = matchers;
    bool correct = spec.gold_depth >= 0 && k >= spec.gold_depth;
    final_rule.output_choices = {correct ? spec.gold() : spec.wrong()};
    rules.push_back(std::move(final_rule));

    ScriptedRule gold_score;
    gold_score.match_substrings = std::move(matchers);
    gold_score.match_continuation = spec.gold();
    gold_score.per_token_logprob = static_cast<std::size_t>(k) < spec.gold_avg_logprobs.size()
                                       ? spec.gold_avg_logprobs[static_cast<std::size_t>(k)]
                                       : spec.default_gold_logprob;
    rules.push_back(std::move(gold_score));
  }

  // Stop probe logits per depth.
  for (int k = max_depth; k >= 0; --k) {
    ScriptedRule rule;
    rule.match_substrings = {kStopMarker, query};
    if (k > 0) rule.match_substrings.push_back(depth_marker(k));
    double yes = static_cast<std::size_t>(k) < spec.stop_yes_logits.size()
                     ? spec.stop_yes_logits[static_cast<std::size_t>(k)]
                     : spec.default_stop_logit;
    rule.token_logits = {{"Yes", yes}, {"No", 0.0}};
    rules.push_back(std::move(rule));
  }

  rules.push_back(default_rule());
  return rules;
}

std::vector<Document> scenario_corpus(const ScenarioSpec& spec, int n_docs) {
  static const char* const kWords[] = {"wall",    "torch",   "passage", "echo",  "lantern",
                                       "stair",   "vault",   "mirror",  "gate",  "cipher",
                                       "compass", "archway", "tunnel",  "mosaic"};
  constexpr int kWordCount = static_cast<int>(sizeof(kWords) / sizeof(kWords[0]));

  std::vector<Document> docs;
  corag::Rng rng(corag::mix_seed(spec.id, 0xD0C5ull));
  for (int i = 0; i < n_docs; ++i) {
    std::ostringstream text;
    text << "maze " << spec.id << " chamber " << i << " holds";
    int words = 6 + static_cast<int>(rng.bounded(8));
    for (int w = 0; w < words; ++w)
      text << ' ' << kWords[rng.bounded(kWordCount)];
    if (i == 0) text << ". Legend says the relic " << spec.id << " rests here.";
    text << '.';
    docs.push_back(Document{
        std::to_string(spec.id) + "-doc-" + std::to_string(i),
        "maze " + std::to_string(spec.id) + " chamber " + std::to_string(i),
        text.str(),
    });
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Misc helpers
// ---------------------------------------------------------------------------

std::string rules_to_json(const std::vector<ScriptedRule>& rules) {
  json arr = json::array();
  for (const auto& rule : rules) {
    json j;
    if (!rule.match_substrings.empty()) j["match_substrings"] = rule.match_substrings;
    if (rule.match_continuation) j["match_continuation_substring"] = *rule.match_continuation;
    if (!rule.output_choices.empty()) j["output_choices"] = rule.output_choices;
    if (!rule.token_logits.empty()) j["token_logits"] = rule.token_logits;
    if (rule.per_token_logprob) j["per_token_logprob"] = *rule.per_token_logprob;
    if (!rule.per_token_logprob_list.empty())
      j["per_token_logprob_list"] = rule.per_token_logprob_list;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "corag-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
