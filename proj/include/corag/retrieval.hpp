#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corag/document.hpp"

// Lexical retrieval over an in-memory corpus plus reciprocal-rank fusion.
// Scoring is Okapi BM25 with the non-negative idf ln(1 + (N-df+0.5)/(df+0.5)).
// All orderings are total: score descending, then doc_id ascending, so equal
// corpora always produce byte-identical result lists.

namespace corag::retrieval {

// Lowercased terms split on non-alphanumeric bytes; no stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;
};

class Retriever {
 public:
  virtual ~Retriever() = default;
  // Top-k by score; fewer when fewer documents match. k >= 1.
  virtual RankedList search(const std::string& query, int k) = 0;
  // Resolve a doc_id to its content; nullopt when unknown.
  virtual std::optional<Document> fetch(const std::string& doc_id) const = 0;
};

class Bm25Index : public Retriever {
 public:
  class Builder {
   public:
    explicit Builder(Bm25Params params = {}) : params_(params) {}
    // Rejects duplicate or empty doc_ids and empty text.
    void add(Document doc);
    Bm25Index build();

   private:
    Bm25Params params_;
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
  };

  RankedList search(const std::string& query, int k) override;
  std::optional<Document> fetch(const std::string& doc_id) const override;

  std::size_t doc_count() const { return docs_.size(); }
  const Bm25Params& params() const { return params_; }

  // Snapshot holds params and documents; postings are rebuilt on load, which
  // is deterministic, so saved and rebuilt indexes answer identically.
  void save(const std::filesystem::path& file) const;
  static Bm25Index load(const std::filesystem::path& file);

  static Bm25Index from_documents(std::vector<Document> docs, Bm25Params params = {});
  // One {"id","title","text"} object per line.
  static Bm25Index load_corpus_jsonl(const std::filesystem::path& file, Bm25Params params = {});

 private:
  friend class Builder;
  struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;
  };

  Bm25Params params_;
  std::vector<Document> docs_;
  std::vector<std::uint32_t> doc_len_;
  double avg_doc_len_ = 0.0;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

// Reciprocal-rank fusion: score(d) = sum over lists of 1/(k_rrf + rank) for
// ranks 1..depth. Contributions are summed largest-first so the fused score
// is independent of the order of the input lists. Output covers every fused
// document, sorted (score desc, doc_id asc).
RankedList rrf_merge(const std::vector<RankedList>& rankings, int k_rrf = 60, int depth = 100);

// Resolve the top `limit` entries to full documents. Throws when an id is
// unknown to the retriever.
std::vector<Document> hydrate(const Retriever& retriever, const RankedList& ranked,
                              std::size_t limit);

// Client for an external ranking service: POST {"query","k"} to search_path,
// reply {"results":[{"doc_id","score","title"?,"text"?}]}. Content returned
// inline is cached for fetch(); a local corpus may also back fetch().
class HttpRetriever : public Retriever {
 public:
  struct Config {
    std::string base_url;
    std::string search_path = "/search";
    int timeout_seconds = 60;
  };

  explicit HttpRetriever(Config config, std::vector<Document> local_corpus = {});

  RankedList search(const std::string& query, int k) override;
  std::optional<Document> fetch(const std::string& doc_id) const override;

 private:
  Config config_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Document> store_;
};

}  // namespace corag::retrieval
