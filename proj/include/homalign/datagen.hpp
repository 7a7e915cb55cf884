#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homalign/image.hpp"
#include "homalign/loss.hpp"

namespace homalign {

/// Self-supervised triplet: a source image, its affine-warped target, its
/// homography-warped target, and the generating parameters as labels.
struct TrainingPair {
  Image source;
  Image affine_target;
  Image homography_target;
  AffineParams gt_affine;
  PerspectiveParams gt_perspective;
  HomographyParams gt_homography;

  PairLabels labels() const {
    return {gt_affine, gt_perspective, gt_homography};
  }
};

/// Samples a transform triple and renders both targets from the source.
/// The affine target drops the perspective block; the homography target uses
/// all eight parameters.
TrainingPair generate_pair(const Image& src, const TransformRanges& ranges,
                           Rng& rng);

struct DatasetRecord {
  std::string source_path;
  std::string affine_path;
  std::string homography_path;
  HomographyParams gt;  // affine = first six entries, perspective = last two
};

struct DatasetManifest {
  int version = 1;
  int image_size_px = 0;
  uint64_t seed = 0;
  TransformRanges ranges{};  // in-memory only; the manifest file stores size+seed
  std::vector<DatasetRecord> records;
};

/// Writes PNG triplets plus manifest.tsv:
///   # homalign-dataset v1  size=<px>  seed=<u64>
///   <src.png>\t<aff.png>\t<hom.png>\t<h1>\t...\t<h6>   (parameters %.17g)
void write_dataset(const std::vector<TrainingPair>& pairs,
                   const std::string& dir, int image_size_px, uint64_t seed);

/// Manifest plus lazy per-record image loading.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, std::string dir)
      : manifest_(std::move(manifest)), dir_(std::move(dir)) {}

  size_t size() const { return manifest_.records.size(); }
  const DatasetManifest& manifest() const { return manifest_; }
  const std::string& dir() const { return dir_; }
  /// Reads the record's three PNGs and reattaches the parameter labels.
  TrainingPair load_pair(size_t index) const;

 private:
  DatasetManifest manifest_;
  std::string dir_;
};

/// Parses dir/manifest.tsv; verifies every referenced file exists.
Dataset read_dataset(const std::string& dir);

/// Procedural source texture: multi-octave value noise overlaid with
/// axis-aligned rectangles, giving the straight-edged structure the
/// correlation layer keys on. Deterministic per seed.
Image synthetic_texture(int h, int w, int d, uint64_t seed);

}  // namespace homalign
