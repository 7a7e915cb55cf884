#include "homalign/datagen.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "homalign/png_io.hpp"

namespace homalign {

namespace fs = std::filesystem;

TrainingPair generate_pair(const Image& src, const TransformRanges& ranges,
                           Rng& rng) {
  const SampledTransform t = sample_random_homography(ranges, rng);
  TrainingPair pair;
  pair.source = src;
  pair.gt_affine = t.affine;
  pair.gt_perspective = t.perspective;
  pair.gt_homography = t.homography;
  pair.affine_target = warp_image(src, lift_affine(t.affine));
  pair.homography_target = warp_image(src, t.homography);
  return pair;
}

namespace {

std::string format_param(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_param(const std::string& s, int line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw ManifestParseError("manifest line " + std::to_string(line_no) +
                             ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_dataset(const std::vector<TrainingPair>& pairs,
                   const std::string& dir, int image_size_px, uint64_t seed) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("write_dataset: cannot create '" + dir + "': " + ec.message());

  std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::binary);
  if (!manifest) throw IoError("write_dataset: cannot open manifest for writing");
  manifest << "# homalign-dataset v1  size=" << image_size_px
           << "  seed=" << seed << "\n";

  char name[64];
  for (size_t i = 0; i < pairs.size(); ++i) {
    const TrainingPair& p = pairs[i];
    std::snprintf(name, sizeof(name), "pair%05zu_src.png", i);
    const std::string src_name = name;
    std::snprintf(name, sizeof(name), "pair%05zu_aff.png", i);
    const std::string aff_name = name;
    std::snprintf(name, sizeof(name), "pair%05zu_hom.png", i);
    const std::string hom_name = name;

    save_png(p.source, (fs::path(dir) / src_name).string());
    save_png(p.affine_target, (fs::path(dir) / aff_name).string());
    save_png(p.homography_target, (fs::path(dir) / hom_name).string());

    manifest << src_name << '\t' << aff_name << '\t' << hom_name;
    for (double v : p.gt_homography.to_array()) {
      manifest << '\t' << format_param(v);
    }
    manifest << '\n';
  }
  if (!manifest.good()) throw IoError("write_dataset: manifest write failed");
}

Dataset read_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw MissingFile("read_dataset: missing '" + manifest_path.string() + "'");

  DatasetManifest manifest;
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) {
    throw ManifestParseError("manifest line 1: empty file");
  }
  ++line_no;
  int size = 0;
  unsigned long long seed = 0;
  if (std::sscanf(line.c_str(), "# homalign-dataset v1  size=%d  seed=%llu",
                  &size, &seed) != 2) {
    throw ManifestParseError("manifest line 1: bad header '" + line + "'");
  }
  manifest.image_size_px = size;
  manifest.seed = seed;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 11) {
      throw ManifestParseError("manifest line " + std::to_string(line_no) +
                               ": expected 11 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    DatasetRecord rec;
    rec.source_path = fields[0];
    rec.affine_path = fields[1];
    rec.homography_path = fields[2];
    std::array<double, 8> params;
    for (int i = 0; i < 8; ++i) params[i] = parse_param(fields[3 + i], line_no);
    rec.gt = HomographyParams::from_array(params);
    manifest.records.push_back(std::move(rec));
  }

  for (const DatasetRecord& rec : manifest.records) {
    for (const std::string* p : {&rec.source_path, &rec.affine_path,
                                 &rec.homography_path}) {
      const fs::path full = fs::path(dir) / *p;
      if (!fs::exists(full)) {
        throw MissingFile("read_dataset: missing image '" + full.string() + "'");
      }
    }
  }
  return Dataset(std::move(manifest), dir);
}

TrainingPair Dataset::load_pair(size_t index) const {
  const DatasetRecord& rec = manifest_.records.at(index);
  TrainingPair pair;
  pair.source = load_png((fs::path(dir_) / rec.source_path).string());
  pair.affine_target = load_png((fs::path(dir_) / rec.affine_path).string());
  pair.homography_target = load_png((fs::path(dir_) / rec.homography_path).string());
  const std::array<double, 8> v = rec.gt.to_array();
  pair.gt_affine = AffineParams::from_array({v[0], v[1], v[2], v[3], v[4], v[5]});
  pair.gt_perspective = PerspectiveParams{v[6], v[7]};
  pair.gt_homography = rec.gt;
  return pair;
}

Image synthetic_texture(int h, int w, int d, uint64_t seed) {
  if (h < 2 || w < 2 || (d != 1 && d != 3)) {
    throw Error("synthetic_texture: bad dims");
  }
  Rng rng(seed);
  Image gray(h, w, 1);

  // Multi-octave value noise: random lattice values, bilinearly upsampled.
  double amp_total = 0.0;
  for (int octave = 0; octave < 4; ++octave) {
    const int cells = 4 << octave;  // 4, 8, 16, 32 lattice cells per axis
    const double amp = 1.0 / (1 << octave);
    amp_total += amp;
    std::vector<double> lattice((cells + 1) * (cells + 1));
    for (double& v : lattice) v = uniform_real(rng, 0.0, 1.0);
    for (int r = 0; r < h; ++r) {
      const double fy = static_cast<double>(r) / (h - 1) * cells;
      const int y0 = std::min(static_cast<int>(fy), cells - 1);
      const double ay = fy - y0;
      for (int c = 0; c < w; ++c) {
        const double fx = static_cast<double>(c) / (w - 1) * cells;
        const int x0 = std::min(static_cast<int>(fx), cells - 1);
        const double ax = fx - x0;
        const double v00 = lattice[y0 * (cells + 1) + x0];
        const double v01 = lattice[y0 * (cells + 1) + x0 + 1];
        const double v10 = lattice[(y0 + 1) * (cells + 1) + x0];
        const double v11 = lattice[(y0 + 1) * (cells + 1) + x0 + 1];
        const double v = (1 - ay) * ((1 - ax) * v00 + ax * v01) +
                         ay * ((1 - ax) * v10 + ax * v11);
        gray.at(r, c, 0) += amp * v;
      }
    }
  }
  for (double& v : gray.data) v /= amp_total;

  // High-contrast axis-aligned rectangles: building/road-like structure.
  const int n_rects = 6 + static_cast<int>(rng() % 5);
  for (int k = 0; k < n_rects; ++k) {
    const int rh = 2 + static_cast<int>(rng() % std::max(1, h / 3));
    const int rw = 2 + static_cast<int>(rng() % std::max(1, w / 3));
    const int r0 = static_cast<int>(rng() % std::max(1, h - rh));
    const int c0 = static_cast<int>(rng() % std::max(1, w - rw));
    const double val = uniform_real(rng, 0.0, 1.0) > 0.5
                           ? uniform_real(rng, 0.75, 1.0)
                           : uniform_real(rng, 0.0, 0.25);
    for (int r = r0; r < r0 + rh && r < h; ++r) {
      for (int c = c0; c < c0 + rw && c < w; ++c) {
        gray.at(r, c, 0) = 0.25 * gray.at(r, c, 0) + 0.75 * val;
      }
    }
  }

  if (d == 1) return gray;
  Image out(h, w, 3);
  const double tint[3] = {1.0, uniform_real(rng, 0.85, 1.0),
                          uniform_real(rng, 0.85, 1.0)};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = gray.at(r, c, 0) * tint[ch];
      }
    }
  }
  return out;
}

}  // namespace homalign
