#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vpfa {

// HR, or LR at an integer downsampling rate >= 2. Stored as the rate with 0
// meaning HR, matching the on-disk byte.
class Resolution {
 public:
  constexpr Resolution() = default;

  static constexpr Resolution hr() { return Resolution(); }
  static Resolution lr(int rate);

  constexpr bool is_hr() const { return rate_ == 0; }
  constexpr bool is_lr() const { return rate_ != 0; }
  constexpr int rate() const { return rate_; }
  constexpr std::uint8_t code() const { return rate_; }

  // "HR" or "LRx<rate>".
  std::string to_string() const;
  static std::optional<Resolution> parse(std::string_view text);
  static std::optional<Resolution> from_code(std::uint8_t code);

  friend constexpr bool operator==(Resolution, Resolution) = default;

 private:
  std::uint8_t rate_ = 0;
};

struct EmbeddingRecord {
  std::uint32_t identity = 0;
  std::uint16_t camera = 0;
  Resolution resolution;
  std::vector<double> vector;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

// Immutable, dimension-consistent collection of labeled feature vectors.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  // Throws Error(Dimension) if a record's width differs from dim and
  // Error(Numeric) on non-finite entries.
  EmbeddingSet(std::size_t dim, std::vector<EmbeddingRecord> records,
               std::string source_label = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::string& source_label() const { return source_label_; }

  auto begin() const { return records_.begin(); }
  auto end() const { return records_.end(); }

  // Sorted unique identity IDs.
  std::vector<std::uint32_t> identities() const;
  // Sorted unique LR rates present.
  std::vector<int> lr_rates() const;

  // Content equality (dim and records); the source label is provenance only.
  bool same_content(const EmbeddingSet& other) const;

 private:
  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::string source_label_;
};

enum class FileFormat { Csv, Binary };

std::optional<FileFormat> parse_format(std::string_view name);
// Sniffs the magic bytes; anything not starting with the binary magic is CSV.
FileFormat detect_format(const std::string& path);

EmbeddingSet load_set(const std::string& path, FileFormat format);
EmbeddingSet load_set(const std::string& path);
void save_set(const EmbeddingSet& set, const std::string& path, FileFormat format);

using RecordPredicate = std::function<bool(const EmbeddingRecord&)>;

EmbeddingSet partition(const EmbeddingSet& set, const RecordPredicate& keep);

// First ceil(K/2) of the given sorted identity list.
std::vector<std::uint32_t> first_half(const std::vector<std::uint32_t>& sorted_ids);

}  // namespace vpfa
