#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "mminr/archive.hpp"
#include "mminr/errors.hpp"

using namespace mminr;
using testing::TempDir;

namespace {
RadarSequence sample_sequence() {
  RadarSequence s;
  s.id = "abc";
  s.interval_seconds = 300;
  for (int t = 0; t < 3; ++t) s.frames.push_back(testing::random_field(5, 7, 10 + t, 25.0));
  return s;
}

void edit_manifest(const std::filesystem::path& dir, const std::function<void(nlohmann::json&)>& fn) {
  std::ifstream in(dir / kManifestName);
  auto j = nlohmann::json::parse(in);
  in.close();
  fn(j);
  std::ofstream(dir / kManifestName) << j.dump();
}
}  // namespace

TEST_SUITE("archive") {
  TEST_CASE("round trip is bitwise, values above the cap kept") {
    TempDir tmp("archive-rt");
    const auto s = sample_sequence();
    write_archive(s, tmp / "a");
    const auto r = read_archive(tmp / "a");
    CHECK(r.id == s.id);
    CHECK(r.interval_seconds == s.interval_seconds);
    REQUIRE(r.frames.size() == s.frames.size());
    for (std::size_t i = 0; i < r.frames.size(); ++i) CHECK(r.frames[i].grid == s.frames[i].grid);
    CHECK(std::filesystem::file_size(tmp / "a" / kFramesName) == 3u * 5 * 7 * 4);
  }

  TEST_CASE("manifest shape mismatch is rejected") {
    TempDir tmp("archive-shape");
    write_archive(sample_sequence(), tmp / "a");
    edit_manifest(tmp / "a", [](nlohmann::json& j) { j["height"] = 6; });
    CHECK_THROWS_AS(read_archive(tmp / "a"), DataIntegrityError);
  }

  TEST_CASE("bad dtype and missing fields are rejected") {
    TempDir tmp("archive-dtype");
    write_archive(sample_sequence(), tmp / "a");
    edit_manifest(tmp / "a", [](nlohmann::json& j) { j["dtype"] = "f64le"; });
    CHECK_THROWS_AS(read_archive(tmp / "a"), DataIntegrityError);
    write_archive(sample_sequence(), tmp / "b");
    edit_manifest(tmp / "b", [](nlohmann::json& j) { j.erase("width"); });
    CHECK_THROWS_AS(read_archive(tmp / "b"), DataIntegrityError);
    CHECK_THROWS_AS(read_archive(tmp / "missing"), DataIntegrityError);
  }

  TEST_CASE("NaN and negative cells are rejected") {
    TempDir tmp("archive-nan");
    auto s = sample_sequence();
    s.frames[1].grid[3] = std::nanf("");
    write_archive(s, tmp / "a");
    CHECK_THROWS_AS(read_archive(tmp / "a"), DataIntegrityError);
    s = sample_sequence();
    s.frames[0].grid[0] = -0.5f;
    write_archive(s, tmp / "b");
    CHECK_THROWS_AS(read_archive(tmp / "b"), DataIntegrityError);
  }

  TEST_CASE("archive sets are ordered by directory name") {
    TempDir tmp("archive-set");
    auto a = sample_sequence(), b = sample_sequence();
    a.id = "z-last";
    b.id = "a-first";
    write_archive_set({a, b}, tmp.path());
    const auto set = read_archive_set(tmp.path());
    REQUIRE(set.size() == 2);
    CHECK(set[0].id == "a-first");
    CHECK(set[1].id == "z-last");
  }
}
