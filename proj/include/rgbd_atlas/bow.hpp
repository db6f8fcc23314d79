#pragma once

// Visual vocabulary (k-means over descriptors) and tf-idf bag-of-words
// retrieval with a temporal exclusion window.

#include "rgbd_atlas/sift.hpp"

#include <map>

namespace rgbd {

struct Vocabulary {
  std::vector<std::array<float, 128>> words;
  std::vector<int> doc_frequency;  // per word
  int num_docs = 0;

  bool empty() const { return words.empty(); }
  int quantize(const std::array<float, 128>& descriptor) const;
};

/// k-means++ with Lloyd iterations over all descriptors, fixed seed.
Vocabulary build_vocabulary(const std::vector<std::vector<Feature>>& keyframe_features,
                            int num_words = 256, uint64_t seed = 42);

/// Sparse tf-idf signature: word -> tf * log(num_docs / doc_frequency).
using BowSignature = std::map<int, double>;

BowSignature bow_signature(const std::vector<Feature>& features, const Vocabulary& vocab);

double cosine_similarity(const BowSignature& a, const BowSignature& b);

struct BowEntry {
  int keyframe_id = 0;  // index within its session
  int session_id = 0;
  BowSignature signature;
};

struct BowMatch {
  int entry_index = 0;
  double similarity = 0;
};

class BowDatabase {
 public:
  int add(int keyframe_id, int session_id, const BowSignature& sig) {
    entries_.push_back({keyframe_id, session_id, sig});
    return int(entries_.size()) - 1;
  }

  /// Top-k entries by cosine similarity, excluding keyframes within
  /// exclusion_window of the query in the same session.
  std::vector<BowMatch> query(const BowSignature& sig, int query_keyframe_id, int query_session_id,
                              int top_k = 5, int exclusion_window = 30) const;

  const BowEntry& entry(int i) const { return entries_[size_t(i)]; }
  size_t size() const { return entries_.size(); }

 private:
  std::vector<BowEntry> entries_;
};

}  // namespace rgbd
