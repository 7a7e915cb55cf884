// homalign: dataset generation, staged training, alignment, PCK evaluation
// and checkerboard overlays for the progressive homography estimation
// pipeline.
//
// Exit codes: 0 success, 2 bad flags or config file, 3 I/O failure,
// 4 missing/invalid checkpoint, 5 dimension mismatch.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "homalign/datagen.hpp"
#include "homalign/eval.hpp"
#include "homalign/png_io.hpp"
#include "homalign/training.hpp"

namespace fs = std::filesystem;
using namespace homalign;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitCheckpoint = 4;
constexpr int kExitDims = 5;

struct GenDataOpts {
  std::string sources;
  std::string out;
  int count = 100;
  uint64_t seed = 0;
  int size = 256;
  double rotation = 180.0;
  double shear = 60.0;
  double perspective = 20.0;
  double translation = 100.0;
  std::vector<double> scale{1.0, 1.0};
  int synthetic = 0;
  int channels = 1;
};

struct TrainOpts {
  std::string data;
  std::string stage = "affine";
  std::string out;
  std::string init;
  int epochs = 50;
  double lr = 1e-3;
  int batch = 8;
  uint64_t seed = 0;
  int grid_n = 20;
  double ensemble_weight = 0.5;
  size_t cache_mb = 1024;
};

struct AlignOpts {
  std::string model;
  std::string source;
  std::string target;
  std::string out;
  std::string params_out;
  std::string method = "ensemble";
  double ensemble_weight = 0.5;
};

struct EvalOpts {
  std::string model;
  std::string data;
  std::vector<double> taus{0.05, 0.03, 0.01};
  int keypoints = 20;
  double scale_up = 1.5;
  uint64_t seed = 0;
  bool macro = false;
  bool pretty = false;
  double rotation = 180.0;
  double shear = 60.0;
  double perspective = 20.0;
  double translation = 100.0;
  std::vector<double> scale{1.0, 1.0};
  double ensemble_weight = 0.5;
};

struct OverlayOpts {
  std::string image_a;
  std::string image_b;
  int tiles = 8;
  std::string out;
};

std::vector<std::string> list_pngs(const std::string& dir) {
  std::vector<std::string> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path().string());
    }
  }
  if (ec) throw IoError("cannot list '" + dir + "': " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

TransformRanges ranges_from(double rotation, double shear, double perspective,
                            double translation, const std::vector<double>& scale,
                            int size) {
  if (scale.size() != 2) throw Error("--scale expects LO,HI");
  TransformRanges r;
  r.max_rotation_deg = rotation;
  r.max_shear_deg = shear;
  r.max_perspective_deg = perspective;
  r.max_translation_px = translation;
  r.image_size_px = size;
  r.scale_lo = scale[0];
  r.scale_hi = scale[1];
  return r;
}

int cmd_gen_data(const GenDataOpts& o) {
  if (o.sources.empty() && o.synthetic <= 0) {
    std::cerr << "gen-data: provide --sources DIR or --synthetic N\n";
    return kExitUsage;
  }
  const TransformRanges ranges = ranges_from(o.rotation, o.shear,
                                             o.perspective, o.translation,
                                             o.scale, o.size);
  std::vector<Image> sources;
  if (!o.sources.empty()) {
    for (const std::string& path : list_pngs(o.sources)) {
      Image img = load_png(path);
      if (img.h != o.size || img.w != o.size) {
        img = resize_bilinear(img, o.size, o.size);
      }
      sources.push_back(std::move(img));
    }
    if (sources.empty()) {
      throw IoError("gen-data: no readable PNG in '" + o.sources + "'");
    }
  } else {
    for (int i = 0; i < o.synthetic; ++i) {
      sources.push_back(
          synthetic_texture(o.size, o.size, o.channels, o.seed + 1000003 * i));
    }
  }

  std::vector<TrainingPair> pairs;
  pairs.reserve(o.count);
  for (int i = 0; i < o.count; ++i) {
    Rng rng(o.seed + static_cast<uint64_t>(i));
    pairs.push_back(generate_pair(sources[i % sources.size()], ranges, rng));
  }
  write_dataset(pairs, o.out, o.size, o.seed);
  std::cerr << "gen-data: wrote " << pairs.size() << " pairs to " << o.out
            << "\n";
  return 0;
}

Stage parse_stage(const std::string& s) {
  if (s == "affine") return Stage::Affine;
  if (s == "persp-hom") return Stage::PerspectiveHom;
  if (s == "full") return Stage::FullEnsemble;
  throw Error("train: unknown stage '" + s + "'");
}

int cmd_train(const TrainOpts& o) {
  const Stage stage = parse_stage(o.stage);
  if (stage != Stage::Affine && o.init.empty()) {
    std::cerr << "train: --stage " << o.stage
              << " continues from a trained affine stage; pass --init CKPT\n";
    return kExitCheckpoint;
  }

  ModelState init_model;
  const bool have_init = !o.init.empty();
  if (have_init) {
    try {
      init_model = load_checkpoint(o.init);
    } catch (const Error& e) {
      std::cerr << "train: invalid --init checkpoint: " << e.what() << "\n";
      return kExitCheckpoint;
    }
  }

  const Dataset dataset = read_dataset(o.data);
  if (dataset.size() == 0) throw EmptyDataset("train: dataset has no records");

  // Keep images in memory when they fit; fall back to lazy PNG decoding.
  const TrainingPair probe = dataset.load_pair(0);
  if (have_init) {
    const Image& img = probe.source;
    if (init_model.extractor.conv1.cin != img.d ||
        init_model.affine_head.fh * 8 != img.h ||
        init_model.affine_head.fw * 8 != img.w) {
      std::cerr << "train: --init checkpoint was built for different "
                   "image dimensions than this dataset\n";
      return kExitCheckpoint;
    }
  }
  const size_t pair_bytes = probe.source.data.size() * sizeof(double) * 3;
  const bool eager = pair_bytes * dataset.size() < size_t{1500} * 1024 * 1024;
  std::vector<TrainingPair> eager_pairs;
  PairLoader loader;
  if (eager) {
    eager_pairs.reserve(dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
      eager_pairs.push_back(dataset.load_pair(i));
    }
    loader = [&eager_pairs](size_t i) { return eager_pairs[i]; };
  } else {
    loader = [&dataset](size_t i) { return dataset.load_pair(i); };
  }

  TrainConfig cfg;
  cfg.stage = stage;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.grid_n = o.grid_n;
  cfg.ensemble_weight = o.ensemble_weight;
  cfg.cache_budget_mb = o.cache_mb;
  cfg.epoch_callback = [](int epoch, const LossBreakdown& b) {
    std::printf("%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", epoch, b.l_aff, b.l_pers,
                b.l_hom, b.l_en, b.total);
    std::fflush(stdout);
  };

  auto [model, report] =
      train(loader, dataset.size(), cfg, have_init ? &init_model : nullptr);
  save_checkpoint(model, o.out);
  std::cerr << "train: " << report.history.size() << " steps, "
            << report.skipped_batches << " skipped batches, "
            << report.wall_seconds << " s, checkpoint " << o.out << "\n";
  return 0;
}

int cmd_align(const AlignOpts& o) {
  ModelState model;
  try {
    model = load_checkpoint(o.model);
  } catch (const Error& e) {
    std::cerr << "align: cannot load model: " << e.what() << "\n";
    return kExitIo;
  }
  const Image source = load_png(o.source);
  const Image target = load_png(o.target);
  if (!source.same_dims(target)) {
    throw DimensionMismatch("align: source and target dims differ");
  }
  if (source.h % 8 != 0 || source.w % 8 != 0) {
    throw DimensionNotDivisible("align: image dims must be divisible by 8");
  }

  const PipelineOutput out =
      infer_alignment(source, target, model, o.ensemble_weight);
  HomographyParams theta;
  if (o.method == "affine") {
    theta = lift_affine(out.theta_aff);
  } else if (o.method == "hom") {
    theta = out.theta_hom;
  } else if (o.method == "ensemble") {
    theta = out.theta_en;
  } else {
    std::cerr << "align: unknown --method '" << o.method << "'\n";
    return kExitUsage;
  }

  save_png(warp_image(source, theta), o.out);
  if (!o.params_out.empty()) {
    std::ofstream pf(o.params_out, std::ios::binary);
    if (!pf) throw IoError("align: cannot open '" + o.params_out + "'");
    char buf[40];
    const std::array<double, 8> v = theta.to_array();
    for (int i = 0; i < 8; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      pf << buf << (i + 1 < 8 ? '\t' : '\n');
    }
  }
  return 0;
}

int cmd_eval(const EvalOpts& o) {
  ModelState model;
  try {
    model = load_checkpoint(o.model);
  } catch (const Error& e) {
    std::cerr << "eval: cannot load model: " << e.what() << "\n";
    return kExitCheckpoint;
  }
  for (double tau : o.taus) {
    if (tau <= 0.0 || tau >= 1.0) {
      std::cerr << "eval: tau must lie in (0,1)\n";
      return kExitUsage;
    }
  }

  // --data may be a dataset directory (manifest.tsv: record sources are
  // used) or a plain directory of source PNGs.
  std::vector<Image> sources;
  if (fs::exists(fs::path(o.data) / "manifest.tsv")) {
    const Dataset ds = read_dataset(o.data);
    for (size_t i = 0; i < ds.size(); ++i) {
      sources.push_back(load_png(
          (fs::path(o.data) / ds.manifest().records[i].source_path).string()));
    }
  } else {
    for (const std::string& path : list_pngs(o.data)) {
      sources.push_back(load_png(path));
    }
  }
  if (sources.empty()) throw IoError("eval: no sources found in '" + o.data + "'");

  const TransformRanges ranges =
      ranges_from(o.rotation, o.shear, o.perspective, o.translation, o.scale,
                  std::max(sources[0].h, sources[0].w));
  Rng rng(o.seed);
  const std::vector<TestRecord> records =
      make_test_set(sources, ranges, o.scale_up, o.keypoints, rng);

  PckConfig cfg;
  cfg.taus = o.taus;
  cfg.h = sources[0].h;
  cfg.w = sources[0].w;
  const std::vector<EvalRow> rows =
      evaluate_model(model, records, cfg, o.ensemble_weight, o.macro);
  std::cout << render_report_tsv(rows);
  if (o.pretty) print_report_aligned(rows, std::cerr);
  return 0;
}

int cmd_overlay(const OverlayOpts& o) {
  const Image a = load_png(o.image_a);
  const Image b = load_png(o.image_b);
  save_png(checkerboard_overlay(a, b, o.tiles), o.out);
  return 0;
}

// ---- config file ----------------------------------------------------------

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<ConfigEntry> parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::vector<ConfigEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(line_no) +
                  ": expected 'key = value'");
    }
    ConfigEntry e;
    e.key = trim(t.substr(0, eq));
    e.value = trim(t.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty()) {
      throw Error("config line " + std::to_string(line_no) + ": empty key");
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

bool truthy(const std::string& v) {
  return v == "1" || v == "true" || v == "yes" || v == "on";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive homography alignment: affine, perspective and "
               "homography estimation between image pairs"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  // config-file entries are injected ahead of explicit flags; last one wins
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenDataOpts gen;
  CLI::App* sub_gen = app.add_subcommand(
      "gen-data", "Generate a self-supervised training dataset");
  sub_gen->add_option("--sources", gen.sources, "Directory of source PNGs");
  sub_gen->add_option("--out", gen.out, "Output dataset directory")->required();
  sub_gen->add_option("--count", gen.count, "Number of pairs");
  sub_gen->add_option("--seed", gen.seed, "Random seed");
  sub_gen->add_option("--size", gen.size, "Image size in px");
  sub_gen->add_option("--rotation", gen.rotation, "Max rotation (deg)");
  sub_gen->add_option("--shear", gen.shear, "Max shear (deg)");
  sub_gen->add_option("--perspective", gen.perspective, "Max perspective tilt (deg)");
  sub_gen->add_option("--translation", gen.translation, "Max translation (px)");
  sub_gen->add_option("--scale", gen.scale, "Scale range LO,HI")
      ->delimiter(',')->expected(1, 2);
  sub_gen->add_option("--synthetic", gen.synthetic,
                      "Generate N procedural source textures instead of --sources");
  sub_gen->add_option("--channels", gen.channels, "Synthetic texture channels (1 or 3)")
      ->check(CLI::IsMember({1, 3}));

  TrainOpts tr;
  CLI::App* sub_train =
      app.add_subcommand("train", "Train one stage of the schedule");
  sub_train->add_option("--data", tr.data, "Dataset directory")->required();
  sub_train->add_option("--stage", tr.stage, "affine | persp-hom | full")
      ->check(CLI::IsMember({"affine", "persp-hom", "full"}));
  sub_train->add_option("--out", tr.out, "Output checkpoint path")->required();
  sub_train->add_option("--init", tr.init, "Initial checkpoint");
  sub_train->add_option("--epochs", tr.epochs, "Training epochs");
  sub_train->add_option("--lr", tr.lr, "Learning rate");
  sub_train->add_option("--batch", tr.batch, "Batch size");
  sub_train->add_option("--seed", tr.seed, "Random seed");
  sub_train->add_option("--grid-n", tr.grid_n, "Grid side for the grid loss");
  sub_train->add_option("--ensemble-weight", tr.ensemble_weight,
                        "Weight of the regressed homography in the ensemble");
  sub_train->add_option("--cache-mb", tr.cache_mb,
                        "Frozen-extractor correlation cache budget (MB)");

  AlignOpts al;
  CLI::App* sub_align =
      app.add_subcommand("align", "Warp a source image onto a target");
  sub_align->add_option("--model", al.model, "Checkpoint")->required();
  sub_align->add_option("--source", al.source, "Source PNG")->required();
  sub_align->add_option("--target", al.target, "Target PNG")->required();
  sub_align->add_option("--out", al.out, "Output PNG")->required();
  sub_align->add_option("--params-out", al.params_out,
                        "Write the 8 estimated parameters as decimal text");
  sub_align->add_option("--method", al.method, "affine | hom | ensemble")
      ->check(CLI::IsMember({"affine", "hom", "ensemble"}));
  sub_align->add_option("--ensemble-weight", al.ensemble_weight,
                        "Weight of the regressed homography in the ensemble");

  EvalOpts ev;
  CLI::App* sub_eval =
      app.add_subcommand("eval", "PCK evaluation on a synthetic test set");
  sub_eval->add_option("--model", ev.model, "Checkpoint")->required();
  sub_eval->add_option("--data", ev.data,
                       "Dataset directory or directory of source PNGs")
      ->required();
  sub_eval->add_option("--taus", ev.taus, "Tolerance fractions")
      ->delimiter(',');
  sub_eval->add_option("--keypoints", ev.keypoints, "Keypoints per record");
  sub_eval->add_option("--scale-up", ev.scale_up,
                       "Range widening factor vs training");
  sub_eval->add_option("--seed", ev.seed, "Random seed");
  sub_eval->add_flag("--macro", ev.macro, "Macro-average across records");
  sub_eval->add_flag("--pretty", ev.pretty, "Aligned table on stderr");
  sub_eval->add_option("--rotation", ev.rotation, "Training max rotation (deg)");
  sub_eval->add_option("--shear", ev.shear, "Training max shear (deg)");
  sub_eval->add_option("--perspective", ev.perspective,
                       "Training max perspective tilt (deg)");
  sub_eval->add_option("--translation", ev.translation,
                       "Training max translation (px)");
  sub_eval->add_option("--scale", ev.scale, "Training scale range LO,HI")
      ->delimiter(',')->expected(1, 2);
  sub_eval->add_option("--ensemble-weight", ev.ensemble_weight,
                       "Weight of the regressed homography in the ensemble");

  OverlayOpts ov;
  CLI::App* sub_overlay = app.add_subcommand(
      "overlay", "Checkerboard overlay of two aligned images");
  sub_overlay->add_option("--image-a", ov.image_a, "First PNG")->required();
  sub_overlay->add_option("--image-b", ov.image_b, "Second PNG")->required();
  sub_overlay->add_option("--tiles", ov.tiles, "Tiles per axis")
      ->check(CLI::PositiveNumber);
  sub_overlay->add_option("--out", ov.out, "Output PNG")->required();

  for (CLI::App* sub : {sub_gen, sub_train, sub_align, sub_eval, sub_overlay}) {
    sub->add_option("--config", "Config file with 'key = value' lines");
  }

  // Pre-scan: pull out --config, expand its entries ahead of the explicit
  // flags so the command line keeps precedence.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty()) {
      CLI::App* sub = app.get_subcommand_no_throw(args[0]);
      if (sub != nullptr) {
        std::string config_path;
        std::vector<std::string> rest;
        for (size_t i = 1; i < args.size(); ++i) {
          if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            ++i;
          } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
          } else {
            rest.push_back(args[i]);
          }
        }
        if (!config_path.empty()) {
          std::vector<std::string> expanded;
          for (const ConfigEntry& e : parse_config_file(config_path)) {
            if (e.key == "config") {
              throw Error("config line " + std::to_string(e.line) +
                          ": 'config' cannot be set from a config file");
            }
            CLI::Option* opt = sub->get_option_no_throw("--" + e.key);
            if (opt == nullptr) {
              throw Error("config line " + std::to_string(e.line) +
                          ": unknown key '" + e.key + "'");
            }
            if (opt->get_expected_min() == 0) {  // flag
              if (truthy(e.value)) expanded.push_back("--" + e.key);
            } else {
              expanded.push_back("--" + e.key);
              expanded.push_back(e.value);
            }
          }
          args = {args[0]};
          args.insert(args.end(), expanded.begin(), expanded.end());
          args.insert(args.end(), rest.begin(), rest.end());
        }
      }
    }

    std::vector<const char*> cargv;
    cargv.push_back("homalign");
    for (const std::string& a : args) cargv.push_back(a.c_str());
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "homalign: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sub_gen->parsed()) return cmd_gen_data(gen);
    if (sub_train->parsed()) return cmd_train(tr);
    if (sub_align->parsed()) return cmd_align(al);
    if (sub_eval->parsed()) return cmd_eval(ev);
    if (sub_overlay->parsed()) return cmd_overlay(ov);
  } catch (const DimensionMismatch& e) {
    std::cerr << "homalign: " << e.what() << "\n";
    return kExitDims;
  } catch (const DimensionNotDivisible& e) {
    std::cerr << "homalign: " << e.what() << "\n";
    return kExitDims;
  } catch (const VersionMismatch& e) {
    std::cerr << "homalign: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const ChecksumMismatch& e) {
    std::cerr << "homalign: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const Error& e) {
    std::cerr << "homalign: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
