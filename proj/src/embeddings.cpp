#include "embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "binary_io.hpp"
#include "error.hpp"

namespace vpfa {

namespace {

constexpr char kSetMagic[4] = {'V', 'P', 'F', 'A'};
constexpr std::uint32_t kSetVersion = 1;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
std::optional<T> parse_uint(std::string_view s) {
  s = trim(s);
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

EmbeddingSet load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);

  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    if (text.substr(0, 4) == std::string_view(kSetMagic, 4)) {
      fail(ErrorCode::Format, path + ": binary set file read as csv");
    }
    if (text.substr(0, 4) != "dim=") {
      fail(ErrorCode::Format, path + ": line " + std::to_string(line_no) +
                                  ": expected header 'dim=<D>'");
    }
    dim = parse_uint<std::size_t>(text.substr(4));
    if (!dim || *dim == 0) {
      fail(ErrorCode::Format, path + ": line " + std::to_string(line_no) +
                                  ": malformed header '" + std::string(text) + "'");
    }
    break;
  }
  if (!dim) fail(ErrorCode::Format, path + ": missing 'dim=<D>' header");

  std::vector<EmbeddingRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty()) continue;
    const std::size_t row = records.size();
    const auto where = [&] {
      return path + ": line " + std::to_string(line_no) + " (row " + std::to_string(row) + ")";
    };
    const auto fields = split_fields(text);
    if (fields.size() != *dim + 3) {
      fail(ErrorCode::Dimension, where() + ": expected " + std::to_string(*dim + 3) +
                                     " fields, found " + std::to_string(fields.size()));
    }
    EmbeddingRecord rec;
    const auto identity = parse_uint<std::uint32_t>(fields[0]);
    if (!identity) fail(ErrorCode::Format, where() + ": bad identity '" + std::string(fields[0]) + "'");
    const auto camera = parse_uint<std::uint16_t>(fields[1]);
    if (!camera) fail(ErrorCode::Format, where() + ": bad camera '" + std::string(fields[1]) + "'");
    const auto res = Resolution::parse(trim(fields[2]));
    if (!res) {
      fail(ErrorCode::Format, where() + ": unknown resolution tag '" + std::string(fields[2]) + "'");
    }
    rec.identity = *identity;
    rec.camera = *camera;
    rec.resolution = *res;
    rec.vector.reserve(*dim);
    for (std::size_t k = 0; k < *dim; ++k) {
      const auto value = parse_double(fields[k + 3]);
      if (!value) {
        fail(ErrorCode::Format, where() + ": bad number '" + std::string(fields[k + 3]) + "'");
      }
      if (!std::isfinite(*value)) {
        fail(ErrorCode::Numeric, "non-finite value at row " + std::to_string(row) + " (" +
                                     path + ": line " + std::to_string(line_no) +
                                     ", component " + std::to_string(k) + ")");
      }
      rec.vector.push_back(*value);
    }
    records.push_back(std::move(rec));
  }
  return EmbeddingSet(*dim, std::move(records), path);
}

EmbeddingSet load_binary(const std::string& path) {
  const auto buf = binary::read_file(path);
  binary::Reader reader(buf, path);
  char magic[4];
  if (buf.size() < 4 || (reader.bytes(magic, 4), !std::equal(magic, magic + 4, kSetMagic))) {
    fail(ErrorCode::Format, path + ": not a binary set file (bad magic)");
  }
  const auto version = reader.uint<std::uint32_t>();
  if (version != kSetVersion) {
    fail(ErrorCode::Format, path + ": unsupported version " + std::to_string(version));
  }
  const auto dim = reader.uint<std::uint32_t>();
  if (dim == 0) fail(ErrorCode::Format, path + ": zero dimension in header");
  const auto count = reader.uint<std::uint64_t>();
  const std::uint64_t record_bytes = 4 + 2 + 1 + 8ULL * dim;
  if (count > reader.remaining() / record_bytes) {
    fail(ErrorCode::Format, path + ": header declares " + std::to_string(count) +
                                " records but only " + std::to_string(reader.remaining()) +
                                " bytes follow at offset " + std::to_string(reader.offset()));
  }

  std::vector<EmbeddingRecord> records(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& rec = records[i];
    const std::size_t at = reader.offset();
    rec.identity = reader.uint<std::uint32_t>();
    rec.camera = reader.uint<std::uint16_t>();
    const auto code = reader.uint<std::uint8_t>();
    const auto res = Resolution::from_code(code);
    if (!res) {
      fail(ErrorCode::Format, path + ": record " + std::to_string(i) + " at offset " +
                                  std::to_string(at) + ": unknown resolution code " +
                                  std::to_string(code));
    }
    rec.resolution = *res;
    rec.vector.resize(dim);
    for (auto& v : rec.vector) {
      const std::size_t value_at = reader.offset();
      v = reader.f64();
      if (!std::isfinite(v)) {
        fail(ErrorCode::Numeric, "non-finite value at row " + std::to_string(i) + " (" + path +
                                     ": offset " + std::to_string(value_at) + ")");
      }
    }
  }
  if (reader.remaining() != 0) {
    fail(ErrorCode::Format, path + ": " + std::to_string(reader.remaining()) +
                                " trailing bytes at offset " + std::to_string(reader.offset()));
  }
  return EmbeddingSet(dim, std::move(records), path);
}

void save_csv(const EmbeddingSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out << "dim=" << set.dim() << '\n';
  char num[32];
  std::string line;
  for (const auto& rec : set) {
    line.clear();
    line += std::to_string(rec.identity);
    line += ',';
    line += std::to_string(rec.camera);
    line += ',';
    line += rec.resolution.to_string();
    for (double v : rec.vector) {
      std::snprintf(num, sizeof num, "%.17g", v);
      line += ',';
      line += num;
    }
    line += '\n';
    out << line;
  }
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

void save_binary(const EmbeddingSet& set, const std::string& path) {
  if (set.dim() > UINT32_MAX) fail(ErrorCode::InvalidArgument, "dimension too large for binary format");
  binary::Writer w;
  w.bytes(kSetMagic, 4);
  w.uint<std::uint32_t>(kSetVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(set.dim()));
  w.uint<std::uint64_t>(set.size());
  for (const auto& rec : set) {
    w.uint<std::uint32_t>(rec.identity);
    w.uint<std::uint16_t>(rec.camera);
    w.uint<std::uint8_t>(rec.resolution.code());
    for (double v : rec.vector) w.f64(v);
  }
  binary::write_file(path, w.buffer());
}

}  // namespace

namespace binary {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<unsigned char>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) fail(ErrorCode::Io, "write failed: " + path);
}

}  // namespace binary

Resolution Resolution::lr(int rate) {
  if (rate < 2 || rate > 255) {
    fail(ErrorCode::InvalidArgument, "LR rate must be in [2, 255], got " + std::to_string(rate));
  }
  Resolution r;
  r.rate_ = static_cast<std::uint8_t>(rate);
  return r;
}

std::string Resolution::to_string() const {
  return is_hr() ? std::string("HR") : "LRx" + std::to_string(rate_);
}

std::optional<Resolution> Resolution::parse(std::string_view text) {
  if (text == "HR") return hr();
  if (text.substr(0, 3) != "LRx") return std::nullopt;
  const auto rate = parse_uint<unsigned>(text.substr(3));
  if (!rate || *rate < 2 || *rate > 255) return std::nullopt;
  return lr(static_cast<int>(*rate));
}

std::optional<Resolution> Resolution::from_code(std::uint8_t code) {
  if (code == 0) return hr();
  if (code == 1) return std::nullopt;
  return lr(code);
}

EmbeddingSet::EmbeddingSet(std::size_t dim, std::vector<EmbeddingRecord> records,
                           std::string source_label)
    : dim_(dim), records_(std::move(records)), source_label_(std::move(source_label)) {
  if (dim_ == 0) fail(ErrorCode::InvalidArgument, "embedding dimension must be positive");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& v = records_[i].vector;
    if (v.size() != dim_) {
      fail(ErrorCode::Dimension, "record " + std::to_string(i) + " has width " +
                                     std::to_string(v.size()) + ", set dim is " +
                                     std::to_string(dim_));
    }
    for (double x : v) {
      if (!std::isfinite(x)) {
        fail(ErrorCode::Numeric, "non-finite value at row " + std::to_string(i));
      }
    }
  }
}

std::vector<std::uint32_t> EmbeddingSet::identities() const {
  std::set<std::uint32_t> ids;
  for (const auto& rec : records_) ids.insert(rec.identity);
  return {ids.begin(), ids.end()};
}

std::vector<int> EmbeddingSet::lr_rates() const {
  std::set<int> rates;
  for (const auto& rec : records_) {
    if (rec.resolution.is_lr()) rates.insert(rec.resolution.rate());
  }
  return {rates.begin(), rates.end()};
}

bool EmbeddingSet::same_content(const EmbeddingSet& other) const {
  return dim_ == other.dim_ && records_ == other.records_;
}

std::optional<FileFormat> parse_format(std::string_view name) {
  if (name == "csv") return FileFormat::Csv;
  if (name == "bin" || name == "binary") return FileFormat::Binary;
  return std::nullopt;
}

FileFormat detect_format(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::equal(magic, magic + 4, kSetMagic)) return FileFormat::Binary;
  return FileFormat::Csv;
}

EmbeddingSet load_set(const std::string& path, FileFormat format) {
  return format == FileFormat::Csv ? load_csv(path) : load_binary(path);
}

EmbeddingSet load_set(const std::string& path) { return load_set(path, detect_format(path)); }

void save_set(const EmbeddingSet& set, const std::string& path, FileFormat format) {
  if (format == FileFormat::Csv) {
    save_csv(set, path);
  } else {
    save_binary(set, path);
  }
}

EmbeddingSet partition(const EmbeddingSet& set, const RecordPredicate& keep) {
  std::vector<EmbeddingRecord> kept;
  for (const auto& rec : set) {
    if (keep(rec)) kept.push_back(rec);
  }
  return EmbeddingSet(set.dim(), std::move(kept), set.source_label());
}

std::vector<std::uint32_t> first_half(const std::vector<std::uint32_t>& sorted_ids) {
  const std::size_t n = (sorted_ids.size() + 1) / 2;
  return {sorted_ids.begin(), sorted_ids.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace vpfa
