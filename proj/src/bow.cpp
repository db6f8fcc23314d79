#include "rgbd_atlas/bow.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rgbd {

namespace {

double dist2(const std::array<float, 128>& a, const std::array<float, 128>& b) {
  double d = 0;
  for (int i = 0; i < 128; ++i) {
    double t = double(a[i]) - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace

int Vocabulary::quantize(const std::array<float, 128>& descriptor) const {
  if (words.empty()) throw std::invalid_argument("bow: empty vocabulary");
  int best = 0;
  double best_d = dist2(descriptor, words[0]);
  for (size_t i = 1; i < words.size(); ++i) {
    double d = dist2(descriptor, words[i]);
    if (d < best_d) {
      best_d = d;
      best = int(i);
    }
  }
  return best;
}

Vocabulary build_vocabulary(const std::vector<std::vector<Feature>>& keyframe_features,
                            int num_words, uint64_t seed) {
  std::vector<const std::array<float, 128>*> descs;
  for (const auto& kf : keyframe_features)
    for (const auto& f : kf) descs.push_back(&f.descriptor);
  if (descs.empty()) throw std::invalid_argument("build_vocabulary: no descriptors");

  int k = std::min<int>(num_words, int(descs.size()));
  std::mt19937_64 rng(seed);
  Vocabulary vocab;

  // k-means++ seeding.
  std::vector<double> min_d2(descs.size(), 1e30);
  vocab.words.push_back(*descs[rng() % descs.size()]);
  while (int(vocab.words.size()) < k) {
    double total = 0;
    for (size_t i = 0; i < descs.size(); ++i) {
      min_d2[i] = std::min(min_d2[i], dist2(*descs[i], vocab.words.back()));
      total += min_d2[i];
    }
    if (total <= 0) break;
    double r = std::uniform_real_distribution<double>(0, total)(rng);
    size_t pick = 0;
    for (; pick + 1 < descs.size(); ++pick) {
      r -= min_d2[pick];
      if (r <= 0) break;
    }
    vocab.words.push_back(*descs[pick]);
  }
  k = int(vocab.words.size());

  // Lloyd iterations until assignments change by < 0.1% or 25 rounds.
  std::vector<int> assign(descs.size(), -1);
  for (int iter = 0; iter < 25; ++iter) {
    size_t changed = 0;
    for (size_t i = 0; i < descs.size(); ++i) {
      int a = vocab.quantize(*descs[i]);
      if (a != assign[i]) {
        assign[i] = a;
        ++changed;
      }
    }
    if (changed * 1000 < descs.size()) break;
    std::vector<std::array<double, 128>> sums(k);
    std::vector<int> counts(k, 0);
    for (auto& s : sums) s.fill(0.0);
    for (size_t i = 0; i < descs.size(); ++i) {
      for (int j = 0; j < 128; ++j) sums[assign[i]][j] += (*descs[i])[j];
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (!counts[c]) continue;
      for (int j = 0; j < 128; ++j) vocab.words[c][j] = float(sums[c][j] / counts[c]);
    }
  }

  // Document frequencies over the keyframes used for training.
  vocab.doc_frequency.assign(k, 0);
  vocab.num_docs = 0;
  for (const auto& kf : keyframe_features) {
    if (kf.empty()) continue;
    std::vector<char> seen(k, 0);
    for (const auto& f : kf) seen[vocab.quantize(f.descriptor)] = 1;
    for (int c = 0; c < k; ++c) vocab.doc_frequency[c] += seen[c];
    ++vocab.num_docs;
  }
  return vocab;
}

BowSignature bow_signature(const std::vector<Feature>& features, const Vocabulary& vocab) {
  if (vocab.empty()) throw std::invalid_argument("bow_signature: empty vocabulary");
  BowSignature sig;
  for (const auto& f : features) sig[vocab.quantize(f.descriptor)] += 1.0;
  for (auto& [word, tf] : sig) {
    double df = std::max(1, vocab.doc_frequency[size_t(word)]);
    double idf = std::log(double(std::max(vocab.num_docs, 1)) / df);
    tf *= std::max(idf, 1e-3);  // keep ubiquitous words with a small weight
  }
  return sig;
}

double cosine_similarity(const BowSignature& a, const BowSignature& b) {
  double dot = 0, na = 0, nb = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first)
      ++ia;
    else if (ib->first < ia->first)
      ++ib;
    else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  for (auto& [w, v] : a) na += v * v;
  for (auto& [w, v] : b) nb += v * v;
  if (na <= 0 || nb <= 0) return 0;
  return dot / std::sqrt(na * nb);
}

std::vector<BowMatch> BowDatabase::query(const BowSignature& sig, int query_keyframe_id,
                                         int query_session_id, int top_k,
                                         int exclusion_window) const {
  std::vector<BowMatch> matches;
  for (size_t i = 0; i < entries_.size(); ++i) {
    const BowEntry& e = entries_[i];
    if (e.session_id == query_session_id &&
        std::abs(e.keyframe_id - query_keyframe_id) <= exclusion_window)
      continue;
    matches.push_back({int(i), cosine_similarity(sig, e.signature)});
  }
  std::sort(matches.begin(), matches.end(), [](const BowMatch& a, const BowMatch& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity
                                        : a.entry_index < b.entry_index;
  });
  if (int(matches.size()) > top_k) matches.resize(top_k);
  return matches;
}

}  // namespace rgbd
