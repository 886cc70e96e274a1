#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "corag/document.hpp"

// Prompt construction for the four LM tasks: follow-up sub-query generation,
// document-grounded intermediate answers, final answer synthesis, and the
// stop/continue judgement. Templates are plain text assets with {name}
// placeholders; the same renderer serves training-data emission and decoding
// so the two can never drift apart.

namespace corag::prompts {

inline constexpr const char* kNoInfoSentinel = "No relevant information found";
inline constexpr const char* kEmptyHistory = "(none)";
inline constexpr const char* kNoDocuments = "(no documents retrieved)";

struct QaTurn {
  std::string sub_query;
  std::string sub_answer;
};
using ChainHistory = std::vector<QaTurn>;

struct TaskDescription {
  std::string dataset_id;
  std::string description;  // non-empty
};

// dataset_id -> instruction line, loaded from a JSON object file.
class TaskTable {
 public:
  static TaskTable load(const std::filesystem::path& file);
  static TaskTable from_map(std::map<std::string, std::string> entries);

  // Throws std::out_of_range naming the dataset_id when unknown.
  TaskDescription resolve(const std::string& dataset_id) const;
  bool contains(const std::string& dataset_id) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, std::string> entries_;
};

struct PromptSet {
  std::string sub_query;
  std::string sub_answer;
  std::string final_answer;
  std::string stop;

  // Reads sub_query.txt, sub_answer.txt, final_answer.txt, stop.txt.
  // Trailing newlines are stripped; missing file or missing placeholder
  // throws std::runtime_error naming the file.
  static PromptSet load_from_dir(const std::filesystem::path& dir);
};

// "Intermediate query i: ...\nIntermediate answer i: ..." lines, numbered
// from 1; "(none)" for an empty history.
std::string format_history(const ChainHistory& history);

// "Doc r: title\ntext" blocks separated by blank lines, rank from 1;
// "(no documents retrieved)" for an empty list.
std::string format_documents(std::span<const Document> docs);

// Renderers substitute every placeholder; output never contains a template
// marker. render_subanswer_prompt and render_final_prompt reject empty
// document lists (callers that want the sentinel block pass it explicitly
// via the *_with_documents_block variants).
std::string render_subquery_prompt(const PromptSet& set, const std::string& query,
                                   const ChainHistory& history, const TaskDescription& task);
std::string render_subanswer_prompt(const PromptSet& set, const std::string& sub_query,
                                    std::span<const Document> docs);
std::string render_subanswer_prompt_with_documents_block(const PromptSet& set,
                                                         const std::string& sub_query,
                                                         const std::string& documents_block);
std::string render_final_prompt(const PromptSet& set, const std::string& query,
                                const ChainHistory& history, std::span<const Document> docs,
                                const TaskDescription& task);
std::string render_final_prompt_with_documents_block(const PromptSet& set,
                                                     const std::string& query,
                                                     const ChainHistory& history,
                                                     const std::string& documents_block,
                                                     const TaskDescription& task);
std::string render_stop_prompt(const PromptSet& set, const std::string& query,
                               const ChainHistory& history);

}  // namespace corag::prompts
