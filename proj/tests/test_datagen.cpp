#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "homalign/datagen.hpp"
#include "homalign/png_io.hpp"

using namespace homalign;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "homalign_test_datagen" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

TransformRanges zero_ranges() {
  TransformRanges r;
  r.max_rotation_deg = r.max_shear_deg = r.max_perspective_deg =
      r.max_translation_px = 0.0;
  r.scale_lo = r.scale_hi = 1.0;
  return r;
}

}  // namespace

TEST_CASE("generate_pair basics") {
  const Image src = synthetic_texture(32, 32, 1, 99);

  SUBCASE("zero ranges reproduce the source everywhere") {
    Rng rng(0);
    const TrainingPair p = generate_pair(src, zero_ranges(), rng);
    CHECK(p.affine_target.data == src.data);
    CHECK(p.homography_target.data == src.data);
    CHECK(p.gt_homography.to_array() ==
          std::array<double, 8>{1, 0, 0, 0, 1, 0, 0, 0});
  }

  SUBCASE("perspective-only ranges keep the affine target at the source") {
    TransformRanges r = zero_ranges();
    r.max_perspective_deg = 10.0;
    Rng rng(1);
    const TrainingPair p = generate_pair(src, r, rng);
    CHECK(p.affine_target.data == src.data);
    CHECK(p.homography_target.data != src.data);
  }

  SUBCASE("regenerating the homography target reproduces it bit-exactly") {
    TransformRanges r;
    r.max_rotation_deg = 30;
    r.max_shear_deg = 10;
    r.max_perspective_deg = 5;
    r.max_translation_px = 10;
    r.image_size_px = 32;
    Rng rng(2);
    const TrainingPair p = generate_pair(src, r, rng);
    const Image regen = warp_image(src, p.gt_homography);
    CHECK(regen.data == p.homography_target.data);
  }

  SUBCASE("labels follow the concatenation layout") {
    TransformRanges r;
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const TrainingPair p = generate_pair(src, r, rng);
      const auto h = p.gt_homography.to_array();
      const auto a = p.gt_affine.to_array();
      for (int k = 0; k < 6; ++k) CHECK(h[k] == a[k]);
      CHECK(h[6] == p.gt_perspective.h5);
      CHECK(h[7] == p.gt_perspective.h6);
      CHECK(homography_warpable(p.gt_homography));
    }
  }
}

TEST_CASE("dataset write/read round-trip") {
  const Image src = synthetic_texture(24, 24, 1, 7);
  TransformRanges r;
  r.max_rotation_deg = 20;
  r.max_shear_deg = 5;
  r.max_perspective_deg = 4;
  r.max_translation_px = 4;
  r.image_size_px = 24;

  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 3; ++i) {
    Rng rng(100 + i);
    pairs.push_back(generate_pair(src, r, rng));
  }

  const fs::path dir = fresh_dir("roundtrip");
  write_dataset(pairs, dir.string(), 24, 42);
  const Dataset ds = read_dataset(dir.string());

  REQUIRE(ds.size() == 3);
  CHECK(ds.manifest().image_size_px == 24);
  CHECK(ds.manifest().seed == 42);

  SUBCASE("parameters survive the text round-trip bit-exactly") {
    for (size_t i = 0; i < 3; ++i) {
      CHECK(ds.manifest().records[i].gt.to_array() ==
            pairs[i].gt_homography.to_array());
    }
  }

  SUBCASE("images match within PNG quantization") {
    const TrainingPair p = ds.load_pair(0);
    REQUIRE(p.source.data.size() == pairs[0].source.data.size());
    for (size_t i = 0; i < p.source.data.size(); ++i) {
      CHECK(std::abs(p.source.data[i] - pairs[0].source.data[i]) <= 1.0 / 255.0);
    }
    CHECK(p.gt_affine.to_array() == pairs[0].gt_affine.to_array());
  }

  SUBCASE("missing image file is reported with its path") {
    fs::remove(dir / "pair00001_aff.png");
    try {
      read_dataset(dir.string());
      FAIL("expected MissingFile");
    } catch (const MissingFile& e) {
      CHECK(std::string(e.what()).find("pair00001_aff.png") != std::string::npos);
    }
  }
}

TEST_CASE("empty dataset round-trips") {
  const fs::path dir = fresh_dir("empty");
  write_dataset({}, dir.string(), 64, 7);
  const Dataset ds = read_dataset(dir.string());
  CHECK(ds.size() == 0);
  CHECK(ds.manifest().seed == 7);
}

TEST_CASE("manifest parse errors carry line numbers") {
  const fs::path dir = fresh_dir("badmanifest");
  std::ofstream out(dir / "manifest.tsv", std::ios::binary);
  out << "# homalign-dataset v1  size=32  seed=0\n";
  out << "a.png\tb.png\tc.png\t1\t0\t0\t0\t1\t0\t0\n";  // 10 fields, not 11
  out.close();
  try {
    read_dataset(dir.string());
    FAIL("expected ManifestParseError");
  } catch (const ManifestParseError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  std::ofstream bad(dir / "manifest.tsv", std::ios::binary | std::ios::trunc);
  bad << "not a manifest\n";
  bad.close();
  CHECK_THROWS_AS(read_dataset(dir.string()), ManifestParseError);
}

TEST_CASE("dataset generation is deterministic per seed") {
  TransformRanges r;
  r.max_rotation_deg = 45;
  r.max_translation_px = 10;
  r.image_size_px = 24;

  auto build = [&](const fs::path& dir) {
    std::vector<TrainingPair> pairs;
    for (int i = 0; i < 2; ++i) {
      const Image src = synthetic_texture(24, 24, 1, 55);
      Rng rng(900 + i);
      pairs.push_back(generate_pair(src, r, rng));
    }
    write_dataset(pairs, dir.string(), 24, 900);
  };

  const fs::path d1 = fresh_dir("det1");
  const fs::path d2 = fresh_dir("det2");
  build(d1);
  build(d2);
  CHECK(slurp(d1 / "manifest.tsv") == slurp(d2 / "manifest.tsv"));
  CHECK(slurp(d1 / "pair00000_hom.png") == slurp(d2 / "pair00000_hom.png"));
  CHECK(slurp(d1 / "pair00001_src.png") == slurp(d2 / "pair00001_src.png"));
}

TEST_CASE("synthetic textures are deterministic and in range") {
  const Image a = synthetic_texture(48, 48, 3, 123);
  const Image b = synthetic_texture(48, 48, 3, 123);
  const Image c = synthetic_texture(48, 48, 3, 124);
  CHECK(a.data == b.data);
  CHECK(a.data != c.data);
  for (double v : a.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
