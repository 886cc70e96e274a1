#include "corag/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <httplib.h>
#include <json.hpp>

namespace corag::retrieval {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    bool alnum = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (alnum) {
      current += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void Bm25Index::Builder::add(Document doc) {
  if (doc.doc_id.empty()) throw std::invalid_argument("document with empty doc_id");
  if (doc.text.empty()) throw std::invalid_argument("document has empty text: " + doc.doc_id);
  if (!by_id_.emplace(doc.doc_id, docs_.size()).second)
    throw std::invalid_argument("duplicate doc_id: " + doc.doc_id);
  docs_.push_back(std::move(doc));
}

Bm25Index Bm25Index::Builder::build() {
  if (docs_.empty()) throw std::invalid_argument("cannot build index over an empty corpus");
  Bm25Index index;
  index.params_ = params_;
  index.docs_ = std::move(docs_);
  index.by_id_ = std::move(by_id_);
  index.doc_len_.reserve(index.docs_.size());
  std::uint64_t total_len = 0;
  for (std::size_t d = 0; d < index.docs_.size(); ++d) {
    auto tokens = tokenize(index.docs_[d].text);
    index.doc_len_.push_back(static_cast<std::uint32_t>(tokens.size()));
    total_len += tokens.size();
    std::unordered_map<std::string, std::uint32_t> tf;
    for (auto& t : tokens) ++tf[t];
    for (auto& [term, count] : tf)
      index.postings_[term].push_back(Posting{static_cast<std::uint32_t>(d), count});
  }
  index.avg_doc_len_ =
      static_cast<double>(total_len) / static_cast<double>(index.docs_.size());
  return index;
}

RankedList Bm25Index::search(const std::string& query, int k) {
  if (k < 1) throw std::invalid_argument("search k must be >= 1");
  auto tokens = tokenize(query);
  if (tokens.empty()) return {};

  const double n_docs = static_cast<double>(docs_.size());
  std::unordered_map<std::uint32_t, double> scores;
  // Token-major accumulation: each document receives its term contributions
  // in query order, the same order the definition (and the test oracle) uses.
  for (const auto& token : tokens) {
    auto it = postings_.find(token);
    if (it == postings_.end()) continue;
    const auto& plist = it->second;
    double df = static_cast<double>(plist.size());
    double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& posting : plist) {
      double tf = static_cast<double>(posting.tf);
      double dl = static_cast<double>(doc_len_[posting.doc]);
      double norm = 1.0 - params_.b + params_.b * dl / avg_doc_len_;
      scores[posting.doc] += idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
    }
  }

  RankedList ranked;
  ranked.reserve(scores.size());
  for (const auto& [doc, score] : scores)
    ranked.push_back(ScoredDoc{docs_[doc].doc_id, score});
  std::sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));
  return ranked;
}

std::optional<Document> Bm25Index::fetch(const std::string& doc_id) const {
  auto it = by_id_.find(doc_id);
  if (it == by_id_.end()) return std::nullopt;
  return docs_[it->second];
}

void Bm25Index::save(const std::filesystem::path& file) const {
  nlohmann::json j;
  j["format"] = "bm25-snapshot-v1";
  j["k1"] = params_.k1;
  j["b"] = params_.b;
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& doc : docs_) docs.push_back({doc.doc_id, doc.title, doc.text});
  j["docs"] = std::move(docs);
  auto bytes = nlohmann::json::to_msgpack(j);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write index file: " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

Bm25Index Bm25Index::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read index file: " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  nlohmann::json j = nlohmann::json::from_msgpack(bytes);
  if (j.value("format", std::string()) != "bm25-snapshot-v1")
    throw std::runtime_error("unrecognized index file format: " + file.string());
  Bm25Params params{j.at("k1").get<double>(), j.at("b").get<double>()};
  Builder builder(params);
  for (const auto& entry : j.at("docs"))
    builder.add(Document{entry.at(0).get<std::string>(), entry.at(1).get<std::string>(),
                         entry.at(2).get<std::string>()});
  return builder.build();
}

Bm25Index Bm25Index::from_documents(std::vector<Document> docs, Bm25Params params) {
  Builder builder(params);
  for (auto& doc : docs) builder.add(std::move(doc));
  return builder.build();
}

Bm25Index Bm25Index::load_corpus_jsonl(const std::filesystem::path& file, Bm25Params params) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read corpus file: " + file.string());
  Builder builder(params);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      builder.add(Document{j.at("id").get<std::string>(), j.value("title", std::string()),
                           j.at("text").get<std::string>()});
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus " + file.string() + " line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return builder.build();
}

RankedList rrf_merge(const std::vector<RankedList>& rankings, int k_rrf, int depth) {
  if (rankings.empty()) throw std::invalid_argument("rrf_merge: no rankings given");
  if (k_rrf < 1) throw std::invalid_argument("rrf_merge: k_rrf must be >= 1");
  if (depth < 1) throw std::invalid_argument("rrf_merge: depth must be >= 1");

  std::map<std::string, std::vector<double>> contributions;
  for (const auto& ranking : rankings) {
    std::size_t limit = std::min<std::size_t>(ranking.size(), static_cast<std::size_t>(depth));
    for (std::size_t i = 0; i < limit; ++i)
      contributions[ranking[i].doc_id].push_back(1.0 / (k_rrf + static_cast<double>(i + 1)));
  }

  RankedList fused;
  fused.reserve(contributions.size());
  for (auto& [doc_id, parts] : contributions) {
    std::sort(parts.begin(), parts.end(), std::greater<>());
    double score = 0.0;
    for (double p : parts) score += p;
    fused.push_back(ScoredDoc{doc_id, score});
  }
  std::sort(fused.begin(), fused.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  return fused;
}

std::vector<Document> hydrate(const Retriever& retriever, const RankedList& ranked,
                              std::size_t limit) {
  std::vector<Document> docs;
  docs.reserve(std::min(limit, ranked.size()));
  for (std::size_t i = 0; i < ranked.size() && i < limit; ++i) {
    auto doc = retriever.fetch(ranked[i].doc_id);
    if (!doc) throw std::runtime_error("retriever cannot resolve doc_id: " + ranked[i].doc_id);
    docs.push_back(std::move(*doc));
  }
  return docs;
}

HttpRetriever::HttpRetriever(Config config, std::vector<Document> local_corpus)
    : config_(std::move(config)) {
  if (config_.base_url.empty()) throw std::invalid_argument("http retriever needs a base_url");
  for (auto& doc : local_corpus) store_.emplace(doc.doc_id, std::move(doc));
}

RankedList HttpRetriever::search(const std::string& query, int k) {
  if (k < 1) throw std::invalid_argument("search k must be >= 1");
  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  nlohmann::json body = {{"query", query}, {"k", k}};
  auto res = client.Post(config_.search_path, body.dump(), "application/json");
  if (!res)
    throw std::runtime_error("retriever transport failure: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw std::runtime_error("retriever request rejected (" + std::to_string(res->status) +
                             "): " + res->body);
  nlohmann::json reply = nlohmann::json::parse(res->body);
  RankedList ranked;
  for (const auto& item : reply.at("results")) {
    ScoredDoc entry{item.at("doc_id").get<std::string>(), item.value("score", 0.0)};
    if (item.contains("text")) {
      std::lock_guard<std::mutex> lock(mu_);
      store_[entry.doc_id] = Document{entry.doc_id, item.value("title", std::string()),
                                      item.at("text").get<std::string>()};
    }
    ranked.push_back(std::move(entry));
  }
  return ranked;
}

std::optional<Document> HttpRetriever::fetch(const std::string& doc_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = store_.find(doc_id);
  if (it == store_.end()) return std::nullopt;
  return it->second;
}

}  // namespace corag::retrieval
