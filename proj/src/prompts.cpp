#include "corag/prompts.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace corag::prompts {
namespace {

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read template file: " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  return text;
}

void require_placeholder(const std::string& tmpl, std::string_view name,
                         const std::filesystem::path& file) {
  std::string marker = "{" + std::string(name) + "}";
  if (tmpl.find(marker) == std::string::npos)
    throw std::runtime_error("template " + file.string() + " lacks placeholder " + marker);
}

// Single-pass substitution: placeholder markers inside substituted values are
// left untouched.
std::string render(const std::string& tmpl,
                   const std::vector<std::pair<std::string_view, const std::string*>>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos, std::string::npos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    bool matched = false;
    for (const auto& [name, value] : values) {
      if (tmpl.compare(open + 1, name.size(), name) == 0 &&
          open + 1 + name.size() < tmpl.size() && tmpl[open + 1 + name.size()] == '}') {
        out += *value;
        pos = open + name.size() + 2;
        matched = true;
        break;
      }
    }
    if (!matched) {
      out += '{';
      pos = open + 1;
    }
  }
  return out;
}

}  // namespace

TaskTable TaskTable::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read task description file: " + file.string());
  nlohmann::json j;
  in >> j;
  if (!j.is_object()) throw std::runtime_error("task description file must hold a JSON object");
  std::map<std::string, std::string> entries;
  for (auto& [key, value] : j.items()) entries[key] = value.get<std::string>();
  return from_map(std::move(entries));
}

TaskTable TaskTable::from_map(std::map<std::string, std::string> entries) {
  for (const auto& [id, desc] : entries)
    if (desc.empty())
      throw std::runtime_error("empty task description for dataset_id: " + id);
  TaskTable table;
  table.entries_ = std::move(entries);
  return table;
}

TaskDescription TaskTable::resolve(const std::string& dataset_id) const {
  auto it = entries_.find(dataset_id);
  if (it == entries_.end())
    throw std::out_of_range("no task description for dataset_id: " + dataset_id);
  return TaskDescription{it->first, it->second};
}

bool TaskTable::contains(const std::string& dataset_id) const {
  return entries_.count(dataset_id) != 0;
}

PromptSet PromptSet::load_from_dir(const std::filesystem::path& dir) {
  PromptSet set;
  auto load = [&](const char* name, std::string& slot,
                  std::initializer_list<std::string_view> placeholders) {
    auto file = dir / name;
    slot = read_text_file(file);
    for (auto p : placeholders) require_placeholder(slot, p, file);
  };
  load("sub_query.txt", set.sub_query, {"history", "task_description", "query"});
  load("sub_answer.txt", set.sub_answer, {"documents", "sub_query"});
  load("final_answer.txt", set.final_answer,
       {"documents", "history", "task_description", "query"});
  load("stop.txt", set.stop, {"history", "query"});
  return set;
}

std::string format_history(const ChainHistory& history) {
  if (history.empty()) return kEmptyHistory;
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i) out += '\n';
    out += "Intermediate query " + std::to_string(i + 1) + ": " + history[i].sub_query;
    out += "\nIntermediate answer " + std::to_string(i + 1) + ": " + history[i].sub_answer;
  }
  return out;
}

std::string format_documents(std::span<const Document> docs) {
  if (docs.empty()) return kNoDocuments;
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i) out += "\n\n";
    out += "Doc " + std::to_string(i + 1) + ": " + docs[i].title + "\n" + docs[i].text;
  }
  return out;
}

std::string render_subquery_prompt(const PromptSet& set, const std::string& query,
                                   const ChainHistory& history, const TaskDescription& task) {
  std::string hist = format_history(history);
  return render(set.sub_query, {{"history", &hist},
                                {"task_description", &task.description},
                                {"query", &query}});
}

std::string render_subanswer_prompt_with_documents_block(const PromptSet& set,
                                                         const std::string& sub_query,
                                                         const std::string& documents_block) {
  return render(set.sub_answer, {{"documents", &documents_block}, {"sub_query", &sub_query}});
}

std::string render_subanswer_prompt(const PromptSet& set, const std::string& sub_query,
                                    std::span<const Document> docs) {
  if (docs.empty())
    throw std::invalid_argument("render_subanswer_prompt: no documents to ground the answer");
  return render_subanswer_prompt_with_documents_block(set, sub_query, format_documents(docs));
}

std::string render_final_prompt_with_documents_block(const PromptSet& set,
                                                     const std::string& query,
                                                     const ChainHistory& history,
                                                     const std::string& documents_block,
                                                     const TaskDescription& task) {
  std::string hist = format_history(history);
  return render(set.final_answer, {{"documents", &documents_block},
                                   {"history", &hist},
                                   {"task_description", &task.description},
                                   {"query", &query}});
}

std::string render_final_prompt(const PromptSet& set, const std::string& query,
                                const ChainHistory& history, std::span<const Document> docs,
                                const TaskDescription& task) {
  if (docs.empty())
    throw std::invalid_argument("render_final_prompt: no documents to ground the answer");
  return render_final_prompt_with_documents_block(set, query, history, format_documents(docs),
                                                  task);
}

std::string render_stop_prompt(const PromptSet& set, const std::string& query,
                               const ChainHistory& history) {
  std::string hist = format_history(history);
  return render(set.stop, {{"history", &hist}, {"query", &query}});
}

}  // namespace corag::prompts
