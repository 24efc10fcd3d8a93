#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "treff/error.hpp"
#include "treff/matrix.hpp"

namespace treff {

using ClassId = std::uint32_t;
using Labels = std::vector<ClassId>;

// Row embeddings in the shared audio-language space. Never empty, always finite.
class EmbeddingSet {
 public:
  explicit EmbeddingSet(Matrix data) : data_(std::move(data)) {
    if (data_.rows() < 1 || data_.cols() < 1)
      throw Error(ErrorCode::invalid_argument, "embedding set must have at least one row and one column");
    if (!all_finite(data_)) throw Error(ErrorCode::non_finite, "embedding set contains NaN or Inf");
  }

  const Matrix& data() const noexcept { return data_; }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(data_.cols()); }

  // Rows picked by index, in the given order.
  EmbeddingSet select(std::span<const std::size_t> indices) const {
    Matrix out(static_cast<Eigen::Index>(indices.size()), data_.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= rows()) throw Error(ErrorCode::out_of_range, "row index " + std::to_string(indices[i]));
      out.row(static_cast<Eigen::Index>(i)) = data_.row(static_cast<Eigen::Index>(indices[i]));
    }
    return EmbeddingSet(std::move(out));
  }

  friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
    return a.data_.rows() == b.data_.rows() && a.data_.cols() == b.data_.cols() && a.data_ == b.data_;
  }

 private:
  Matrix data_;
};

// Ordered, unique class names; position is the class id.
class ClassVocabulary {
 public:
  ClassVocabulary() = default;
  explicit ClassVocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    std::unordered_set<std::string> seen;
    for (const auto& name : names_) {
      if (name.empty()) throw Error(ErrorCode::invalid_argument, "empty class name");
      if (!seen.insert(name).second) throw Error(ErrorCode::invalid_argument, "duplicate class name '" + name + "'");
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(ClassId id) const {
    if (id >= names_.size()) throw Error(ErrorCode::out_of_range, "class id " + std::to_string(id));
    return names_[id];
  }
  std::optional<ClassId> find(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<ClassId>(it - names_.begin());
  }

  friend bool operator==(const ClassVocabulary&, const ClassVocabulary&) = default;

 private:
  std::vector<std::string> names_;
};

// Labeled embeddings. Used both for an episode's support set and for whole
// labeled datasets that episodes are drawn from.
class SupportSet {
 public:
  SupportSet(EmbeddingSet embeddings, Labels labels, ClassVocabulary vocab)
      : embeddings_(std::move(embeddings)), labels_(std::move(labels)), vocab_(std::move(vocab)) {
    if (labels_.size() != embeddings_.rows())
      throw Error(ErrorCode::invalid_argument, "labels length " + std::to_string(labels_.size()) +
                                                   " != rows " + std::to_string(embeddings_.rows()));
    for (ClassId id : labels_)
      if (id >= vocab_.size())
        throw Error(ErrorCode::out_of_range, "label " + std::to_string(id) + " outside vocabulary of size " +
                                                 std::to_string(vocab_.size()));
  }

  const EmbeddingSet& embeddings() const noexcept { return embeddings_; }
  const Labels& labels() const noexcept { return labels_; }
  const ClassVocabulary& vocab() const noexcept { return vocab_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return vocab_.size(); }

 private:
  EmbeddingSet embeddings_;
  Labels labels_;
  ClassVocabulary vocab_;
};

inline ScoreMatrix one_hot(std::span<const ClassId> labels, std::size_t n) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n)
      throw Error(ErrorCode::out_of_range, "label " + std::to_string(labels[i]) + " >= n=" + std::to_string(n));
    m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return ScoreMatrix(std::move(m), ScoreRole::one_hot);
}

// ---------------------------------------------------------------------------
// TREFFEMB v1, little-endian:
//   "TREFFEMB" | u32 version=1 | u32 rows | u32 dim | u8 flags (bit0 labels)
//   rows*dim f32 row-major
//   [labels: rows*u32 | u32 n | n * (u32 len, utf-8 bytes)]
// ---------------------------------------------------------------------------

inline constexpr char kTreffembMagic[8] = {'T', 'R', 'E', 'F', 'F', 'E', 'M', 'B'};
inline constexpr std::uint32_t kTreffembVersion = 1;
inline constexpr std::size_t kTreffembHeaderSize = 8 + 4 + 4 + 4 + 1;

struct EmbeddingFile {
  EmbeddingSet embeddings;
  std::optional<Labels> labels;
  std::optional<ClassVocabulary> vocab;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::truncated, std::string("while reading ") + what);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> raw(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingSet& set, const Labels* labels,
                                                   const ClassVocabulary* vocab) {
  if ((labels == nullptr) != (vocab == nullptr))
    throw Error(ErrorCode::invalid_argument, "labels and vocabulary must be given together");
  if (labels != nullptr) SupportSet(set, *labels, *vocab);  // validates arity and range

  std::vector<std::uint8_t> out(std::begin(kTreffembMagic), std::end(kTreffembMagic));
  detail::put_u32(out, kTreffembVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(set.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(set.dim()));
  out.push_back(labels != nullptr ? 1 : 0);
  const Matrix& m = set.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
  if (labels != nullptr) {
    for (ClassId id : *labels) detail::put_u32(out, id);
    detail::put_u32(out, static_cast<std::uint32_t>(vocab->size()));
    for (const auto& name : vocab->names()) {
      detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
      out.insert(out.end(), name.begin(), name.end());
    }
  }
  return out;
}

inline EmbeddingFile decode_embeddings(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes);
  auto magic = in.raw(8, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kTreffembMagic)))
    throw Error(ErrorCode::bad_magic, "not a TREFFEMB file");
  const std::uint32_t version = in.u32("version");
  if (version != kTreffembVersion)
    throw Error(ErrorCode::unsupported_version, "version " + std::to_string(version));
  const std::uint32_t rows = in.u32("rows");
  const std::uint32_t dim = in.u32("dim");
  const std::uint8_t flags = in.u8("flags");
  if (rows == 0 || dim == 0) throw Error(ErrorCode::invalid_argument, "empty embedding set");

  const std::uint64_t count = static_cast<std::uint64_t>(rows) * dim;
  in.need(count * 4, "payload");
  Matrix m(rows, dim);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < dim; ++c) {
      const float v = std::bit_cast<float>(in.u32("payload"));
      if (!std::isfinite(v))
        throw Error(ErrorCode::non_finite, "row " + std::to_string(r) + " col " + std::to_string(c));
      m(r, c) = v;
    }

  EmbeddingFile file{EmbeddingSet(std::move(m)), std::nullopt, std::nullopt};
  if (flags & 1u) {
    in.need(static_cast<std::size_t>(rows) * 4, "labels");
    Labels labels(rows);
    for (auto& id : labels) id = in.u32("labels");
    const std::uint32_t n = in.u32("class count");
    std::vector<std::string> names;
    names.reserve(std::min<std::uint32_t>(n, 1u << 16));
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::uint32_t len = in.u32("class name length");
      auto raw = in.raw(len, "class name");
      names.emplace_back(raw.begin(), raw.end());
    }
    ClassVocabulary vocab(std::move(names));
    SupportSet(file.embeddings, labels, vocab);  // range check
    file.labels = std::move(labels);
    file.vocab = std::move(vocab);
  }
  if (!in.at_end()) throw Error(ErrorCode::invalid_argument, "trailing bytes after TREFFEMB payload");
  return file;
}

inline void write_embeddings(const EmbeddingSet& set, const std::optional<Labels>& labels,
                             const std::optional<ClassVocabulary>& vocab, const std::filesystem::path& path) {
  const auto bytes = encode_embeddings(set, labels ? &*labels : nullptr, vocab ? &*vocab : nullptr);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

inline void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  write_embeddings(set, std::nullopt, std::nullopt, path);
}

inline void write_embeddings(const SupportSet& set, const std::filesystem::path& path) {
  write_embeddings(set.embeddings(), set.labels(), set.vocab(), path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline EmbeddingFile read_embeddings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_embeddings(bytes);
}

// Reads a file that must carry labels.
inline SupportSet read_labeled_embeddings(const std::filesystem::path& path) {
  auto file = read_embeddings(path);
  if (!file.labels) throw Error(ErrorCode::invalid_argument, path.string() + " has no labels");
  return SupportSet(std::move(file.embeddings), std::move(*file.labels), std::move(*file.vocab));
}

}  // namespace treff
