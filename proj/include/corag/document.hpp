#pragma once

#include <string>
#include <vector>

namespace corag {

struct Document {
  std::string doc_id;
  std::string title;
  std::string text;
};

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
};

// Ranked retrieval result: scores non-increasing, doc_ids distinct,
// ties broken by doc_id ascending.
using RankedList = std::vector<ScoredDoc>;

}  // namespace corag
