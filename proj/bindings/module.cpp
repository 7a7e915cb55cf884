#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "homalign/eval.hpp"
#include "homalign/png_io.hpp"
#include "homalign/training.hpp"

namespace py = pybind11;
using namespace homalign;

namespace {

Image image_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  const py::buffer_info info = arr.request();
  int h, w, d;
  if (info.ndim == 2) {
    h = static_cast<int>(info.shape[0]);
    w = static_cast<int>(info.shape[1]);
    d = 1;
  } else if (info.ndim == 3) {
    h = static_cast<int>(info.shape[0]);
    w = static_cast<int>(info.shape[1]);
    d = static_cast<int>(info.shape[2]);
  } else {
    throw DimensionMismatch("image_from_array: expected (h,w) or (h,w,d)");
  }
  if (d != 1 && d != 3) {
    throw DimensionMismatch("image_from_array: channel count must be 1 or 3");
  }
  Image img(h, w, d);
  const double* src = static_cast<const double*>(info.ptr);
  std::copy(src, src + img.data.size(), img.data.begin());
  return img;
}

py::array_t<double> image_to_array(const Image& img) {
  py::array_t<double> arr({img.h, img.w, img.d});
  std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
  return arr;
}

py::array_t<double> tensor_to_array(const nn::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> arr(shape);
  std::copy(t.data.begin(), t.data.end(), arr.mutable_data());
  return arr;
}

nn::Tensor tensor_from_array(
    py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  const py::buffer_info info = arr.request();
  std::vector<int> shape;
  for (py::ssize_t s : info.shape) shape.push_back(static_cast<int>(s));
  nn::Tensor t(shape);
  const double* src = static_cast<const double*>(info.ptr);
  std::copy(src, src + t.data.size(), t.data.begin());
  return t;
}

template <size_t N>
py::array_t<double> to_array(const std::array<double, N>& v,
                             std::vector<py::ssize_t> shape) {
  py::array_t<double> arr(shape);
  std::copy(v.begin(), v.end(), arr.mutable_data());
  return arr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Progressive homography alignment: geometry, warping, the "
            "correlation-regression pipeline, staged training and PCK "
            "evaluation.";

  // ---- errors ----
  auto base = py::register_exception<Error>(m, "HomalignError");
  py::register_exception<DegenerateDenominator>(m, "DegenerateDenominator", base);
  py::register_exception<SingularMatrix>(m, "SingularMatrix", base);
  py::register_exception<RangeUnsatisfiable>(m, "RangeUnsatisfiable", base);
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", base);
  py::register_exception<DimensionNotDivisible>(m, "DimensionNotDivisible", base);
  py::register_exception<UnsupportedFormat>(m, "UnsupportedFormat", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ManifestParseError>(m, "ManifestParseError", base);
  py::register_exception<MissingFile>(m, "MissingFile", base);
  py::register_exception<ChecksumMismatch>(m, "ChecksumMismatch", base);
  py::register_exception<VersionMismatch>(m, "VersionMismatch", base);
  py::register_exception<EmptyDataset>(m, "EmptyDataset", base);
  py::register_exception<NumericalOverflow>(m, "NumericalOverflow", base);

  // ---- geometry ----
  py::class_<Point>(m, "Point")
      .def(py::init<double, double>(), py::arg("x") = 0.0, py::arg("y") = 0.0)
      .def_readwrite("x", &Point::x)
      .def_readwrite("y", &Point::y)
      .def("__repr__", [](const Point& p) {
        return "Point(" + std::to_string(p.x) + ", " + std::to_string(p.y) + ")";
      });

  py::class_<AffineParams>(m, "AffineParams")
      .def(py::init<>())
      .def(py::init<double, double, double, double, double, double>(),
           py::arg("a1"), py::arg("a2"), py::arg("tx"), py::arg("a3"),
           py::arg("a4"), py::arg("ty"))
      .def_readwrite("a1", &AffineParams::a1)
      .def_readwrite("a2", &AffineParams::a2)
      .def_readwrite("tx", &AffineParams::tx)
      .def_readwrite("a3", &AffineParams::a3)
      .def_readwrite("a4", &AffineParams::a4)
      .def_readwrite("ty", &AffineParams::ty)
      .def("to_list", [](const AffineParams& p) {
        const auto a = p.to_array();
        return std::vector<double>(a.begin(), a.end());
      });

  py::class_<PerspectiveParams>(m, "PerspectiveParams")
      .def(py::init<>())
      .def(py::init<double, double>(), py::arg("h5"), py::arg("h6"))
      .def_readwrite("h5", &PerspectiveParams::h5)
      .def_readwrite("h6", &PerspectiveParams::h6);

  py::class_<HomographyParams>(m, "HomographyParams")
      .def(py::init<>())
      .def(py::init<double, double, double, double, double, double, double,
                    double>(),
           py::arg("h1"), py::arg("h2"), py::arg("tx"), py::arg("h3"),
           py::arg("h4"), py::arg("ty"), py::arg("h5"), py::arg("h6"))
      .def_readwrite("h1", &HomographyParams::h1)
      .def_readwrite("h2", &HomographyParams::h2)
      .def_readwrite("tx", &HomographyParams::tx)
      .def_readwrite("h3", &HomographyParams::h3)
      .def_readwrite("h4", &HomographyParams::h4)
      .def_readwrite("ty", &HomographyParams::ty)
      .def_readwrite("h5", &HomographyParams::h5)
      .def_readwrite("h6", &HomographyParams::h6)
      .def("to_list", [](const HomographyParams& p) {
        const auto a = p.to_array();
        return std::vector<double>(a.begin(), a.end());
      });

  py::class_<Grid>(m, "Grid")
      .def_static("uniform", &Grid::uniform, py::arg("n"))
      .def_readonly("n", &Grid::n)
      .def_readonly("points", &Grid::points);

  py::class_<TransformRanges>(m, "TransformRanges")
      .def(py::init<>())
      .def_readwrite("max_rotation_deg", &TransformRanges::max_rotation_deg)
      .def_readwrite("max_shear_deg", &TransformRanges::max_shear_deg)
      .def_readwrite("max_perspective_deg", &TransformRanges::max_perspective_deg)
      .def_readwrite("max_translation_px", &TransformRanges::max_translation_px)
      .def_readwrite("image_size_px", &TransformRanges::image_size_px)
      .def_readwrite("scale_lo", &TransformRanges::scale_lo)
      .def_readwrite("scale_hi", &TransformRanges::scale_hi);

  py::class_<SampledTransform>(m, "SampledTransform")
      .def_readonly("affine", &SampledTransform::affine)
      .def_readonly("perspective", &SampledTransform::perspective)
      .def_readonly("homography", &SampledTransform::homography);

  py::class_<Rng>(m, "Rng").def(py::init<uint64_t>(), py::arg("seed"));

  m.def("affine_to_matrix", [](const AffineParams& p) {
    return to_array(affine_to_matrix(p), {2, 3});
  });
  m.def("homography_to_matrix", [](const HomographyParams& p) {
    return to_array(homography_to_matrix(p), {3, 3});
  });
  m.def("concat_affine_perspective", &concat_affine_perspective);
  m.def("apply_homography", &apply_homography, py::arg("params"), py::arg("point"));
  m.def("transform_grid", &transform_grid);
  m.def("invert_homography", &invert_homography);
  m.def("homography_warpable", &homography_warpable);
  m.def("sample_random_homography", &sample_random_homography,
        py::arg("ranges"), py::arg("rng"));

  // ---- imaging ----
  py::class_<Image>(m, "Image")
      .def(py::init(&image_from_array), py::arg("array"))
      .def_readonly("h", &Image::h)
      .def_readonly("w", &Image::w)
      .def_readonly("d", &Image::d)
      .def("to_array", &image_to_array);

  m.def("bilinear_sample", [](const Image& img, Point pt) {
    const auto v = bilinear_sample(img, pt);
    return std::vector<double>(v.begin(), v.begin() + img.d);
  });
  m.def("warp_image", &warp_image, py::arg("image"), py::arg("params"));
  m.def("checkerboard_overlay", &checkerboard_overlay, py::arg("a"),
        py::arg("b"), py::arg("tiles"));
  m.def("resize_bilinear", &resize_bilinear);
  m.def("load_png", &load_png);
  m.def("save_png", &save_png, py::arg("image"), py::arg("path"));

  // ---- datagen ----
  py::class_<TrainingPair>(m, "TrainingPair")
      .def(py::init<>())
      .def_readwrite("source", &TrainingPair::source)
      .def_readwrite("affine_target", &TrainingPair::affine_target)
      .def_readwrite("homography_target", &TrainingPair::homography_target)
      .def_readwrite("gt_affine", &TrainingPair::gt_affine)
      .def_readwrite("gt_perspective", &TrainingPair::gt_perspective)
      .def_readwrite("gt_homography", &TrainingPair::gt_homography);

  py::class_<DatasetRecord>(m, "DatasetRecord")
      .def_readonly("source_path", &DatasetRecord::source_path)
      .def_readonly("affine_path", &DatasetRecord::affine_path)
      .def_readonly("homography_path", &DatasetRecord::homography_path)
      .def_readonly("gt", &DatasetRecord::gt);

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def("load_pair", &Dataset::load_pair, py::arg("index"))
      .def_property_readonly("image_size_px",
                             [](const Dataset& d) { return d.manifest().image_size_px; })
      .def_property_readonly("seed",
                             [](const Dataset& d) { return d.manifest().seed; })
      .def_property_readonly("records",
                             [](const Dataset& d) { return d.manifest().records; });

  m.def("generate_pair", &generate_pair, py::arg("source"), py::arg("ranges"),
        py::arg("rng"));
  m.def("synthetic_texture", &synthetic_texture, py::arg("h"), py::arg("w"),
        py::arg("d"), py::arg("seed"));
  m.def("write_dataset", &write_dataset, py::arg("pairs"), py::arg("dir"),
        py::arg("image_size_px"), py::arg("seed"));
  m.def("read_dataset", &read_dataset, py::arg("dir"));

  // ---- model / pipeline ----
  py::enum_<Component>(m, "Component")
      .value("Extractor", Component::Extractor)
      .value("AffineHead", Component::AffineHead)
      .value("PerspectiveHead", Component::PerspectiveHead)
      .value("HomographyHead", Component::HomographyHead);

  py::class_<ModelState>(m, "ModelState");

  m.def("make_model", &make_model, py::arg("input_channels"), py::arg("fh"),
        py::arg("fw"), py::arg("seed"));
  m.def("make_zero_model", &make_zero_model, py::arg("input_channels"),
        py::arg("fh"), py::arg("fw"));

  py::class_<PipelineOutput>(m, "PipelineOutput")
      .def_readonly("theta_aff", &PipelineOutput::theta_aff)
      .def_readonly("theta_pers", &PipelineOutput::theta_pers)
      .def_readonly("theta_hom", &PipelineOutput::theta_hom)
      .def_readonly("theta_guide", &PipelineOutput::theta_guide)
      .def_readonly("theta_en", &PipelineOutput::theta_en);

  m.def("forward_pipeline", &forward_pipeline, py::arg("source"),
        py::arg("affine_target"), py::arg("homography_target"),
        py::arg("model"), py::arg("ensemble_weight") = 0.5);
  m.def("infer_alignment", &infer_alignment, py::arg("source"),
        py::arg("target"), py::arg("model"), py::arg("ensemble_weight") = 0.5);
  m.def("ensemble", &ensemble, py::arg("hom"), py::arg("guide"),
        py::arg("lambda_") = 0.5);

  m.def("extract_features", [](const Image& img, const ModelState& model) {
    return tensor_to_array(extract_features(img, model.extractor));
  }, py::arg("image"), py::arg("model"));
  m.def("normalize_features", [](py::array_t<double> f) {
    return tensor_to_array(normalize_features(tensor_from_array(f)));
  });
  m.def("correlation_map", [](py::array_t<double> fS, py::array_t<double> fT) {
    return tensor_to_array(
        correlation_map(tensor_from_array(fS), tensor_from_array(fT)));
  }, py::arg("fS"), py::arg("fT"));

  // ---- loss ----
  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init<>())
      .def_readwrite("alpha", &LossWeights::alpha)
      .def_readwrite("beta", &LossWeights::beta)
      .def_readwrite("gamma", &LossWeights::gamma)
      .def_readwrite("delta", &LossWeights::delta);

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("l_aff", &LossBreakdown::l_aff)
      .def_readonly("l_pers", &LossBreakdown::l_pers)
      .def_readonly("l_hom", &LossBreakdown::l_hom)
      .def_readonly("l_en", &LossBreakdown::l_en)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<PairLabels>(m, "PairLabels")
      .def_readonly("affine", &PairLabels::affine)
      .def_readonly("perspective", &PairLabels::perspective)
      .def_readonly("homography", &PairLabels::homography);

  m.def("lift_affine", &lift_affine);
  m.def("grid_loss", &grid_loss, py::arg("pred"), py::arg("gt"), py::arg("grid"));
  m.def("perspective_mse", &perspective_mse, py::arg("pred"), py::arg("gt"));
  m.def("total_loss",
        [](const PipelineOutput& out, const TrainingPair& pair, const Grid& g,
           const LossWeights& w) { return total_loss(out, pair.labels(), g, w); },
        py::arg("output"), py::arg("pair"), py::arg("grid"), py::arg("weights"));

  // ---- training ----
  py::enum_<Stage>(m, "Stage")
      .value("Affine", Stage::Affine)
      .value("PerspectiveHom", Stage::PerspectiveHom)
      .value("FullEnsemble", Stage::FullEnsemble);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("stage", &TrainConfig::stage)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("loss_weights", &TrainConfig::loss_weights)
      .def_readwrite("grid_n", &TrainConfig::grid_n)
      .def_readwrite("ensemble_weight", &TrainConfig::ensemble_weight)
      .def_readwrite("freeze", &TrainConfig::freeze)
      .def_readwrite("train_extractor_all_stages",
                     &TrainConfig::train_extractor_all_stages)
      .def_readwrite("cache_budget_mb", &TrainConfig::cache_budget_mb)
      .def_readwrite("epoch_callback", &TrainConfig::epoch_callback);

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("history", &TrainReport::history)
      .def_readonly("steps_per_epoch", &TrainReport::steps_per_epoch)
      .def_readonly("wall_seconds", &TrainReport::wall_seconds)
      .def_readonly("final_checksum", &TrainReport::final_checksum)
      .def_readonly("skipped_batches", &TrainReport::skipped_batches);

  m.def("train",
        [](const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
           const ModelState* init) { return train(pairs, cfg, init); },
        py::arg("pairs"), py::arg("config"), py::arg("init") = nullptr);
  m.def("save_checkpoint", &save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def("serialize_model", [](const ModelState& model) {
    const std::vector<uint8_t> bytes = serialize_model(model);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("model_checksum", &model_checksum);

  // ---- eval ----
  py::class_<KeypointSet>(m, "KeypointSet")
      .def(py::init<>())
      .def(py::init([](std::vector<Point> pts) {
        KeypointSet kp;
        kp.points = std::move(pts);
        return kp;
      }), py::arg("points"))
      .def_readwrite("points", &KeypointSet::points)
      .def("__len__", &KeypointSet::count);

  py::class_<PckConfig>(m, "PckConfig")
      .def(py::init<>())
      .def_readwrite("taus", &PckConfig::taus)
      .def_readwrite("h", &PckConfig::h)
      .def_readwrite("w", &PckConfig::w);

  py::class_<TestRecord>(m, "TestRecord")
      .def_readonly("pair", &TestRecord::pair)
      .def_readonly("keypoints", &TestRecord::keypoints);

  py::class_<EvalRow>(m, "EvalRow")
      .def_readonly("method", &EvalRow::method)
      .def_readonly("tau", &EvalRow::tau)
      .def_readonly("pck", &EvalRow::pck);

  m.def("pck", &pck, py::arg("keypoints"), py::arg("theta_hat"),
        py::arg("theta_gt"), py::arg("config"), py::arg("tau"));
  m.def("scale_ranges", &scale_ranges, py::arg("ranges"), py::arg("scale_up"));
  m.def("make_test_set", &make_test_set, py::arg("sources"),
        py::arg("train_ranges"), py::arg("scale_up"), py::arg("n_keypoints"),
        py::arg("rng"));
  m.def("evaluate_model", &evaluate_model, py::arg("model"), py::arg("records"),
        py::arg("config"), py::arg("ensemble_weight") = 0.5,
        py::arg("macro_average") = false);
  m.def("render_report_tsv", &render_report_tsv);
}
