#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "treff/embedding_store.hpp"
#include "treff/zero_shot.hpp"

namespace treff {

// FNV-1a, 64-bit. Used as a content fingerprint for run manifests.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_digest(const std::filesystem::path& path) { return hex64(fnv1a64(read_file_bytes(path))); }

// Text embeddings in vocabulary order. A labeled file carries its own
// vocabulary (labels must be a permutation of 0..n-1); an unlabeled file is
// taken to follow `fallback`.
inline std::pair<EmbeddingSet, ClassVocabulary> load_text_embeddings(const std::filesystem::path& path,
                                                                     const ClassVocabulary* fallback) {
  auto file = read_embeddings(path);
  if (!file.labels) {
    if (fallback == nullptr || fallback->size() != file.embeddings.rows())
      throw Error(ErrorCode::vocab_mismatch, path.string() + " has no vocabulary and row count does not match");
    return {std::move(file.embeddings), *fallback};
  }
  const auto& labels = *file.labels;
  if (labels.size() != file.vocab->size())
    throw Error(ErrorCode::vocab_mismatch, path.string() + ": expected one text row per class");
  std::vector<std::size_t> order(labels.size(), labels.size());
  for (std::size_t row = 0; row < labels.size(); ++row) {
    if (order[labels[row]] != labels.size())
      throw Error(ErrorCode::vocab_mismatch, path.string() + ": class '" + file.vocab->name(labels[row]) + "' repeated");
    order[labels[row]] = row;
  }
  return {file.embeddings.select(order), std::move(*file.vocab)};
}

// Relabels `data` into `target` vocabulary order (matched by class name).
inline SupportSet align_to_vocab(const SupportSet& data, const ClassVocabulary& target) {
  if (data.vocab() == target) return data;
  std::vector<ClassId> map(data.num_classes());
  for (ClassId c = 0; c < data.num_classes(); ++c) {
    auto found = target.find(data.vocab().name(c));
    if (!found) throw Error(ErrorCode::vocab_mismatch, "class '" + data.vocab().name(c) + "' missing from text vocabulary");
    map[c] = *found;
  }
  Labels labels;
  labels.reserve(data.size());
  for (ClassId id : data.labels()) labels.push_back(map[id]);
  return SupportSet(data.embeddings(), std::move(labels), target);
}

}  // namespace treff
