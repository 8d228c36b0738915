#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <bit>
#include <cstring>
#include <limits>

#include "embeddings.hpp"
#include "error.hpp"
#include "test_util.hpp"

using namespace vpfa;
using vpfa::test::tmp_path;

namespace {

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

EmbeddingSet random_set(std::uint64_t seed, std::size_t n, std::size_t dim) {
  Rng rng(seed);
  std::vector<EmbeddingRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const auto res = rng.below(2) ? Resolution::hr() : Resolution::lr(2 + static_cast<int>(rng.below(6)));
    recs.push_back({static_cast<std::uint32_t>(rng.below(40)), static_cast<std::uint16_t>(rng.below(7)), res,
                    test::random_vector(rng, dim, std::pow(10.0, static_cast<double>(rng.below(20)) - 10.0))});
  }
  return EmbeddingSet(dim, std::move(recs));
}

ErrorCode load_error(const std::string& path, FileFormat fmt, std::string* message = nullptr) {
  try {
    load_set(path, fmt);
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("expected load to fail");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("resolution tags") {
  CHECK(Resolution::parse("HR")->is_hr());
  CHECK(Resolution::parse("LRx2")->rate() == 2);
  CHECK(Resolution::parse("LRx7")->to_string() == "LRx7");
  CHECK_FALSE(Resolution::parse("LRx1"));
  CHECK_FALSE(Resolution::parse("LR2"));
  CHECK_FALSE(Resolution::parse("hr"));
  CHECK_THROWS_AS(Resolution::lr(1), Error);
  CHECK_FALSE(Resolution::from_code(1));
}

TEST_CASE("csv: minimal file parses in order") {
  const auto path = tmp_path("emb_min.csv");
  write(path, "dim=3\n4,1,HR,0.5,1,-2\n4,2,LRx3,1e-3,0,7\n");
  const auto set = load_set(path, FileFormat::Csv);
  REQUIRE(set.dim() == 3);
  REQUIRE(set.size() == 2);
  CHECK(set[0].identity == 4);
  CHECK(set[0].camera == 1);
  CHECK(set[0].resolution.is_hr());
  CHECK(set[0].vector == std::vector<double>{0.5, 1, -2});
  CHECK(set[1].resolution == Resolution::lr(3));
  CHECK(set[1].vector[0] == 1e-3);
}

TEST_CASE("csv: header only gives an empty set") {
  const auto path = tmp_path("emb_empty.csv");
  write(path, "dim=5\n");
  const auto set = load_set(path, FileFormat::Csv);
  CHECK(set.dim() == 5);
  CHECK(set.empty());
}

TEST_CASE("csv: parse errors carry location") {
  const auto path = tmp_path("emb_bad.csv");
  std::string msg;

  write(path, "dim=2\n0,0,HR,1,2\n0,0,HR,NaN,2\n");
  CHECK(load_error(path, FileFormat::Csv, &msg) == ErrorCode::Numeric);
  CHECK(msg.find("non-finite value at row 1") != std::string::npos);

  write(path, "dim=2\n0,0,HR,1,inf\n");
  CHECK(load_error(path, FileFormat::Csv) == ErrorCode::Numeric);

  write(path, "dim=2\n0,0,HR,1,2\n0,0,HR,1\n");
  CHECK(load_error(path, FileFormat::Csv, &msg) == ErrorCode::Dimension);
  CHECK(msg.find("line 3") != std::string::npos);

  write(path, "dims=2\n");
  CHECK(load_error(path, FileFormat::Csv) == ErrorCode::Format);

  write(path, "dim=x\n");
  CHECK(load_error(path, FileFormat::Csv) == ErrorCode::Format);

  write(path, "dim=2\n0,0,MR,1,2\n");
  CHECK(load_error(path, FileFormat::Csv, &msg) == ErrorCode::Format);
  CHECK(msg.find("unknown resolution tag") != std::string::npos);

  write(path, "dim=2\n0,70000,HR,1,2\n");
  CHECK(load_error(path, FileFormat::Csv) == ErrorCode::Format);

  write(path, "");
  CHECK(load_error(path, FileFormat::Csv) == ErrorCode::Format);
}

TEST_CASE("csv: 17 significant digits round-trip exactly") {
  const auto path = tmp_path("emb_rt.csv");
  const EmbeddingSet small(2, {test::record(1, 0, Resolution::lr(2), {0.1, -3.5e-8})});
  save_set(small, path, FileFormat::Csv);
  const auto back = load_set(path, FileFormat::Csv);
  CHECK(back.same_content(small));

  std::vector<double> extremes = {std::numeric_limits<double>::min(), std::numeric_limits<double>::denorm_min(),
                                  std::numeric_limits<double>::max(), -0.0, 1.0 / 3.0, -2.5e-300};
  const EmbeddingSet edge(extremes.size(), {test::record(0, 0, Resolution::hr(), extremes)});
  save_set(edge, path, FileFormat::Csv);
  CHECK(load_set(path, FileFormat::Csv).same_content(edge));

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto set = random_set(seed, 40, 6);
    save_set(set, path, FileFormat::Csv);
    CHECK(load_set(path, FileFormat::Csv).same_content(set));
  }
}

TEST_CASE("binary: round-trip is bitwise and order-preserving") {
  const auto path = tmp_path("emb_rt.vpfa");
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const auto set = random_set(seed, 100, 9);
    save_set(set, path, FileFormat::Binary);
    const auto back = load_set(path, FileFormat::Binary);
    REQUIRE(back.size() == set.size());
    CHECK(back.same_content(set));
    for (std::size_t i = 0; i < set.size(); ++i) {
      CHECK(std::memcmp(back[i].vector.data(), set[i].vector.data(), 9 * sizeof(double)) == 0);
    }
  }
  // Byte layout: 4 magic + 4 version + 4 dim + 8 count + N * (4 + 2 + 1 + 8D).
  const auto set = random_set(3, 7, 5);
  save_set(set, path, FileFormat::Binary);
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  CHECK(static_cast<std::size_t>(in.tellg()) == 20 + 7 * (7 + 8 * 5));
}

TEST_CASE("format mismatch and corrupted binaries are rejected") {
  const auto set = random_set(4, 10, 3);
  const auto bin = tmp_path("emb_fmt.vpfa");
  const auto csv = tmp_path("emb_fmt.csv");
  save_set(set, bin, FileFormat::Binary);
  save_set(set, csv, FileFormat::Csv);
  CHECK(load_error(bin, FileFormat::Csv) == ErrorCode::Format);
  CHECK(load_error(csv, FileFormat::Binary) == ErrorCode::Format);
  CHECK(detect_format(bin) == FileFormat::Binary);
  CHECK(detect_format(csv) == FileFormat::Csv);
  CHECK(load_set(bin).same_content(load_set(csv)));

  std::ifstream in(bin, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto broken = tmp_path("emb_broken.vpfa");
  std::string msg;
  write(broken, bytes.substr(0, bytes.size() - 3));
  CHECK(load_error(broken, FileFormat::Binary, &msg) == ErrorCode::Format);
  CHECK(msg.find("offset") != std::string::npos);
  write(broken, bytes + "x");
  CHECK(load_error(broken, FileFormat::Binary) == ErrorCode::Format);
  auto bad_version = bytes;
  bad_version[4] = 2;
  write(broken, bad_version);
  CHECK(load_error(broken, FileFormat::Binary) == ErrorCode::Format);
  auto bad_res = bytes;
  bad_res[20 + 6] = 1;  // resolution byte of record 0
  write(broken, bad_res);
  CHECK(load_error(broken, FileFormat::Binary) == ErrorCode::Format);
  auto nan_bytes = bytes;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan_bytes.data() + 20 + 7, &nan, 8);
  write(broken, nan_bytes);
  CHECK(load_error(broken, FileFormat::Binary) == ErrorCode::Numeric);
}

TEST_CASE("set construction enforces width and finiteness") {
  CHECK_THROWS_AS(EmbeddingSet(2, {test::record(0, 0, Resolution::hr(), {1, 2, 3})}), Error);
  CHECK_THROWS_AS(EmbeddingSet(1, {test::record(0, 0, Resolution::hr(), {INFINITY})}), Error);
  CHECK_THROWS_AS(EmbeddingSet(0, {}), Error);
}

TEST_CASE("unwritable path is an io error") {
  const auto set = random_set(5, 2, 2);
  try {
    save_set(set, "/nonexistent-dir/x.vpfa", FileFormat::Binary);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}

TEST_CASE("partition") {
  const auto set = random_set(6, 60, 3);

  SUBCASE("resolution predicate keeps order") {
    const auto hr = partition(set, [](const EmbeddingRecord& r) { return r.resolution.is_hr(); });
    std::vector<EmbeddingRecord> expected;
    std::copy_if(set.begin(), set.end(), std::back_inserter(expected),
                 [](const EmbeddingRecord& r) { return r.resolution.is_hr(); });
    CHECK(hr.records() == expected);
    CHECK(hr.dim() == set.dim());
  }

  SUBCASE("sorted-id half split is deterministic") {
    const auto ids = set.identities();
    const auto half = first_half(ids);
    CHECK(half.size() == (ids.size() + 1) / 2);
    CHECK(std::is_sorted(ids.begin(), ids.end()));
    const auto in_half = [&](const EmbeddingRecord& r) {
      return std::binary_search(half.begin(), half.end(), r.identity);
    };
    const auto a = partition(set, in_half);
    const auto b = partition(set, [&](const EmbeddingRecord& r) { return !in_half(r); });
    for (const auto& r : a) CHECK(r.identity <= half.back());
    for (const auto& r : b) CHECK(r.identity > half.back());
    CHECK(partition(set, in_half).same_content(a));
  }

  SUBCASE("empty match keeps dim") {
    const auto none = partition(set, [](const EmbeddingRecord&) { return false; });
    CHECK(none.empty());
    CHECK(none.dim() == 3);
  }

  SUBCASE("p and not-p cover the set exactly") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const auto cut = static_cast<std::uint32_t>(rng.below(40));
      const auto cam = static_cast<std::uint16_t>(rng.below(7));
      const auto pred = [&](const EmbeddingRecord& r) { return r.identity < cut || r.camera == cam; };
      const auto yes = partition(set, pred);
      const auto no = partition(set, [&](const EmbeddingRecord& r) { return !pred(r); });
      CHECK(yes.size() + no.size() == set.size());
      std::vector<std::string> lhs, rhs;
      const auto key = [](const EmbeddingRecord& r) {
        std::string k = std::to_string(r.identity) + "/" + std::to_string(r.camera) + "/" + r.resolution.to_string();
        for (double v : r.vector) k += "/" + std::to_string(std::bit_cast<std::uint64_t>(v));
        return k;
      };
      for (const auto& r : set) lhs.push_back(key(r));
      for (const auto& r : yes) rhs.push_back(key(r));
      for (const auto& r : no) rhs.push_back(key(r));
      std::sort(lhs.begin(), lhs.end());
      std::sort(rhs.begin(), rhs.end());
      CHECK(lhs == rhs);
    }
  }
}
