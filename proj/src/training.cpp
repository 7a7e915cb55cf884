#include "homalign/training.hpp"

#include <zlib.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

namespace homalign {

namespace {

bool finite_all(const nn::Tensor& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

struct GradRefs {
  std::vector<nn::Tensor*> tensors;
  std::vector<Component> owner;
};

template <typename F>
void visit_head(const char* prefix, const RegressionHead& head, F&& f) {
  f(std::string(prefix) + ".conv1.weight", head.conv1.weight);
  f(std::string(prefix) + ".conv1.bias", head.conv1.bias);
  f(std::string(prefix) + ".conv2.weight", head.conv2.weight);
  f(std::string(prefix) + ".conv2.bias", head.conv2.bias);
  for (size_t i = 0; i < head.fcs.size(); ++i) {
    const std::string fc = std::string(prefix) + ".fc" + std::to_string(i + 1);
    f(fc + ".weight", head.fcs[i].weight);
    f(fc + ".bias", head.fcs[i].bias);
  }
}

// Parallel walk over model weights, gradient mirror and velocity mirror.
struct Triple {
  nn::Tensor* w;
  nn::Tensor* g;
  nn::Tensor* v;
  Component comp;
};

void head_triples(RegressionHead& head, HeadGrads& g, HeadGrads& v,
                  Component comp, std::vector<Triple>& out) {
  out.push_back({&head.conv1.weight, &g.dw_conv1, &v.dw_conv1, comp});
  out.push_back({&head.conv1.bias, &g.db_conv1, &v.db_conv1, comp});
  out.push_back({&head.conv2.weight, &g.dw_conv2, &v.dw_conv2, comp});
  out.push_back({&head.conv2.bias, &g.db_conv2, &v.db_conv2, comp});
  for (size_t i = 0; i < head.fcs.size(); ++i) {
    out.push_back({&head.fcs[i].weight, &g.dw_fc[i], &v.dw_fc[i], comp});
    out.push_back({&head.fcs[i].bias, &g.db_fc[i], &v.db_fc[i], comp});
  }
}

std::vector<Triple> param_triples(ModelState& m, ModelGrads& g, ModelGrads& v) {
  std::vector<Triple> out;
  out.push_back({&m.extractor.conv1.weight, &g.extractor.dw1, &v.extractor.dw1,
                 Component::Extractor});
  out.push_back({&m.extractor.conv1.bias, &g.extractor.db1, &v.extractor.db1,
                 Component::Extractor});
  out.push_back({&m.extractor.conv2.weight, &g.extractor.dw2, &v.extractor.dw2,
                 Component::Extractor});
  out.push_back({&m.extractor.conv2.bias, &g.extractor.db2, &v.extractor.db2,
                 Component::Extractor});
  out.push_back({&m.extractor.conv3.weight, &g.extractor.dw3, &v.extractor.dw3,
                 Component::Extractor});
  out.push_back({&m.extractor.conv3.bias, &g.extractor.db3, &v.extractor.db3,
                 Component::Extractor});
  head_triples(m.affine_head, g.affine, v.affine, Component::AffineHead, out);
  head_triples(m.perspective_head, g.perspective, v.perspective,
               Component::PerspectiveHead, out);
  head_triples(m.homography_head, g.homography, v.homography,
               Component::HomographyHead, out);
  return out;
}

void fisher_yates(std::vector<size_t>& idx, Rng& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace

ModelGrads ModelGrads::zeros_like(const ModelState& m) {
  ModelGrads g;
  g.extractor = ExtractorGrads::zeros_like(m.extractor);
  g.affine = HeadGrads::zeros_like(m.affine_head);
  g.perspective = HeadGrads::zeros_like(m.perspective_head);
  g.homography = HeadGrads::zeros_like(m.homography_head);
  return g;
}

void ModelGrads::zero() {
  for (nn::Tensor* t : {&extractor.dw1, &extractor.db1, &extractor.dw2,
                        &extractor.db2, &extractor.dw3, &extractor.db3}) {
    t->zero();
  }
  for (HeadGrads* h : {&affine, &perspective, &homography}) {
    h->dw_conv1.zero();
    h->db_conv1.zero();
    h->dw_conv2.zero();
    h->db_conv2.zero();
    for (nn::Tensor& t : h->dw_fc) t.zero();
    for (nn::Tensor& t : h->db_fc) t.zero();
  }
}

namespace {

void add_tensor(nn::Tensor& dst, const nn::Tensor& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// Elementwise dst += src; one addition per weight, so summing identical
// per-element contributions is exact.
void add_grads(ModelGrads& dst, const ModelGrads& src) {
  add_tensor(dst.extractor.dw1, src.extractor.dw1);
  add_tensor(dst.extractor.db1, src.extractor.db1);
  add_tensor(dst.extractor.dw2, src.extractor.dw2);
  add_tensor(dst.extractor.db2, src.extractor.db2);
  add_tensor(dst.extractor.dw3, src.extractor.dw3);
  add_tensor(dst.extractor.db3, src.extractor.db3);
  const HeadGrads* srcs[] = {&src.affine, &src.perspective, &src.homography};
  HeadGrads* dsts[] = {&dst.affine, &dst.perspective, &dst.homography};
  for (int h = 0; h < 3; ++h) {
    add_tensor(dsts[h]->dw_conv1, srcs[h]->dw_conv1);
    add_tensor(dsts[h]->db_conv1, srcs[h]->db_conv1);
    add_tensor(dsts[h]->dw_conv2, srcs[h]->dw_conv2);
    add_tensor(dsts[h]->db_conv2, srcs[h]->db_conv2);
    for (size_t i = 0; i < srcs[h]->dw_fc.size(); ++i) {
      add_tensor(dsts[h]->dw_fc[i], srcs[h]->dw_fc[i]);
      add_tensor(dsts[h]->db_fc[i], srcs[h]->db_fc[i]);
    }
  }
}

}  // namespace

std::set<Component> effective_freeze(const TrainConfig& cfg) {
  std::set<Component> frozen = cfg.freeze;
  switch (cfg.stage) {
    case Stage::Affine:
      frozen.insert(Component::PerspectiveHead);
      frozen.insert(Component::HomographyHead);
      break;
    case Stage::FullEnsemble:
      frozen.insert(Component::PerspectiveHead);
      [[fallthrough]];
    case Stage::PerspectiveHom:
      frozen.insert(Component::AffineHead);
      if (!cfg.train_extractor_all_stages) {
        frozen.insert(Component::Extractor);
      }
      break;
  }
  return frozen;
}

namespace {

// Values a frozen-extractor training stage may reuse across epochs.
struct CachedRecord {
  PairLabels labels;
  std::optional<nn::Tensor> corr_aff;   // only when the affine head trains
  std::optional<nn::Tensor> corr_pers;  // absent when theta_pers is cached
  std::optional<nn::Tensor> corr_hom;
  std::optional<AffineParams> theta_aff;    // affine head frozen
  std::optional<double> l_aff;
  std::optional<PerspectiveParams> theta_pers;  // perspective head frozen
  std::optional<double> l_pers;
};

struct ForwardPlan {
  bool affine_only = false;
  bool need_extractor_grads = false;
  bool aff_weights = false;   // accumulate affine head weight grads
  bool pers_weights = false;
  bool hom_weights = false;
};

std::vector<double> to_vec(const std::array<double, 8>& a, int n) {
  return std::vector<double>(a.begin(), a.begin() + n);
}

// Single code path for loss-only evaluation (grads == nullptr), full
// training gradients, and the cached frozen-extractor fast path.
LossBreakdown pipeline_pass(const TrainingPair& pair, const PairLabels& gt,
                            const ModelState& m, const Grid& grid,
                            const LossWeights& lw, double lambda,
                            const ForwardPlan& plan,
                            const CachedRecord* cache, ModelGrads* grads) {
  const bool backward = grads != nullptr;

  // ---- feature extraction (skipped entirely when correlation maps come
  // from the cache) ----
  ExtractorTrace trS, trTa, trTh;
  nn::Tensor fS, fTa, fTh;    // pre-normalization (kept for backward)
  nn::Tensor nS, nTa, nTh;    // normalized
  const bool need_fS = !cache && (true);  // source feeds corr_aff and corr_hom
  const bool need_fTh = !cache && !plan.affine_only;
  if (!cache) {
    if (pair.source.h % 8 != 0 || pair.source.w % 8 != 0) {
      throw DimensionNotDivisible("pipeline: image dims not divisible by 8");
    }
    fS = extract_features_traced(image_to_tensor(pair.source), m.extractor, trS);
    nS = normalize_features(fS);
    fTa = extract_features_traced(image_to_tensor(pair.affine_target),
                                  m.extractor, trTa);
    nTa = normalize_features(fTa);
    if (need_fTh) {
      fTh = extract_features_traced(image_to_tensor(pair.homography_target),
                                    m.extractor, trTh);
      nTh = normalize_features(fTh);
    }
  }

  // ---- correlation maps ----
  nn::Tensor corr_aff_local, corr_pers_local, corr_hom_local;
  const nn::Tensor* corr_aff = nullptr;
  const nn::Tensor* corr_pers = nullptr;
  const nn::Tensor* corr_hom = nullptr;
  const bool theta_aff_cached = cache && cache->theta_aff.has_value();
  const bool theta_pers_cached = cache && cache->theta_pers.has_value();
  if (cache) {
    if (cache->corr_aff) corr_aff = &*cache->corr_aff;
    if (cache->corr_pers) corr_pers = &*cache->corr_pers;
    if (cache->corr_hom) corr_hom = &*cache->corr_hom;
  } else {
    if (!theta_aff_cached) {
      corr_aff_local = correlation_map(nS, nTa);
      corr_aff = &corr_aff_local;
    }
    if (!plan.affine_only) {
      if (!theta_pers_cached) {
        corr_pers_local = correlation_map(nTa, nTh);
        corr_pers = &corr_pers_local;
      }
      corr_hom_local = correlation_map(nS, nTh);
      corr_hom = &corr_hom_local;
    }
  }

  // ---- heads forward ----
  HeadTrace trA, trP, trH;
  PipelineOutput out;
  if (theta_aff_cached) {
    out.theta_aff = *cache->theta_aff;
  } else {
    const std::vector<double> v = regress_traced(*corr_aff, m.affine_head, trA);
    out.theta_aff = {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  if (!plan.affine_only) {
    if (theta_pers_cached) {
      out.theta_pers = *cache->theta_pers;
    } else {
      const std::vector<double> v =
          regress_traced(*corr_pers, m.perspective_head, trP);
      out.theta_pers = {v[0], v[1]};
    }
    const std::vector<double> v =
        regress_traced(*corr_hom, m.homography_head, trH);
    out.theta_hom = {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
    out.theta_guide = concat_affine_perspective(out.theta_aff, out.theta_pers);
    out.theta_en = ensemble(out.theta_hom, out.theta_guide, lambda);
  }

  // ---- losses ----
  LossBreakdown bd;
  const HomographyParams aff_lift = lift_affine(out.theta_aff);
  const HomographyParams gt_aff_lift = lift_affine(gt.affine);
  bd.l_aff = (cache && cache->l_aff) ? *cache->l_aff
                                     : grid_loss(aff_lift, gt_aff_lift, grid);
  if (plan.affine_only) {
    bd.total = lw.alpha * bd.l_aff;
  } else {
    bd.l_pers = (cache && cache->l_pers)
                    ? *cache->l_pers
                    : perspective_mse(out.theta_pers, gt.perspective);
    bd.l_hom = grid_loss(out.theta_hom, gt.homography, grid);
    bd.l_en = grid_loss(out.theta_en, gt.homography, grid);
    bd.total = lw.alpha * bd.l_aff + lw.beta * bd.l_pers +
               lw.gamma * bd.l_hom + lw.delta * bd.l_en;
  }
  if (!backward) return bd;

  // ---- gradients at the parameter outputs ----
  std::vector<double> d_aff(6, 0.0), d_pers(2, 0.0), d_hom(8, 0.0);
  const bool run_aff = !theta_aff_cached &&
                       (plan.aff_weights || plan.need_extractor_grads);
  const bool run_pers = !plan.affine_only && !theta_pers_cached &&
                        (plan.pers_weights || plan.need_extractor_grads);
  const bool run_hom = !plan.affine_only &&
                       (plan.hom_weights || plan.need_extractor_grads);

  if (plan.affine_only) {
    if (run_aff) {
      const std::array<double, 8> g =
          grid_loss_grad(aff_lift, gt_aff_lift, grid);
      for (int i = 0; i < 6; ++i) d_aff[i] = lw.alpha * g[i];
    }
  } else {
    const std::array<double, 8> gE =
        grid_loss_grad(out.theta_en, gt.homography, grid);
    if (run_aff) {
      const std::array<double, 8> gA =
          grid_loss_grad(aff_lift, gt_aff_lift, grid);
      for (int i = 0; i < 6; ++i) {
        d_aff[i] = lw.alpha * gA[i] + lw.delta * (1.0 - lambda) * gE[i];
      }
    }
    if (run_pers) {
      const std::array<double, 2> gP =
          perspective_mse_grad(out.theta_pers, gt.perspective);
      for (int i = 0; i < 2; ++i) {
        d_pers[i] = lw.beta * gP[i] + lw.delta * (1.0 - lambda) * gE[6 + i];
      }
    }
    if (run_hom) {
      const std::array<double, 8> gH =
          grid_loss_grad(out.theta_hom, gt.homography, grid);
      for (int i = 0; i < 8; ++i) {
        d_hom[i] = lw.gamma * gH[i] + lw.delta * lambda * gE[i];
      }
    }
  }

  // ---- heads backward ----
  nn::Tensor d_corr_aff, d_corr_pers, d_corr_hom;
  if (run_aff) {
    head_backward(m.affine_head, trA, d_aff,
                  plan.aff_weights ? &grads->affine : nullptr,
                  plan.need_extractor_grads ? &d_corr_aff : nullptr);
  }
  if (run_pers) {
    head_backward(m.perspective_head, trP, d_pers,
                  plan.pers_weights ? &grads->perspective : nullptr,
                  plan.need_extractor_grads ? &d_corr_pers : nullptr);
  }
  if (run_hom) {
    head_backward(m.homography_head, trH, d_hom,
                  plan.hom_weights ? &grads->homography : nullptr,
                  plan.need_extractor_grads ? &d_corr_hom : nullptr);
  }

  // ---- correlation, normalization, extractor backward ----
  if (plan.need_extractor_grads) {
    nn::Tensor dnS(nS.shape), dnTa(nTa.shape);
    nn::Tensor dnTh;
    if (need_fTh) dnTh = nn::Tensor(nTh.shape);
    if (run_aff) {
      nn::correlation_backward(nS, nTa, d_corr_aff, &dnS, &dnTa);
    }
    if (run_pers) {
      nn::correlation_backward(nTa, nTh, d_corr_pers, &dnTa, &dnTh);
    }
    if (run_hom) {
      nn::correlation_backward(nS, nTh, d_corr_hom, &dnS, &dnTh);
    }
    extractor_backward(m.extractor, trS,
                       nn::l2_normalize_backward(fS, dnS), grads->extractor);
    extractor_backward(m.extractor, trTa,
                       nn::l2_normalize_backward(fTa, dnTa), grads->extractor);
    if (need_fTh) {
      extractor_backward(m.extractor, trTh,
                         nn::l2_normalize_backward(fTh, dnTh),
                         grads->extractor);
    }
  }
  return bd;
}

ForwardPlan plan_for(const std::set<Component>& frozen, bool affine_only) {
  ForwardPlan plan;
  plan.affine_only = affine_only;
  plan.need_extractor_grads = frozen.count(Component::Extractor) == 0;
  plan.aff_weights = frozen.count(Component::AffineHead) == 0;
  plan.pers_weights =
      !affine_only && frozen.count(Component::PerspectiveHead) == 0;
  plan.hom_weights =
      !affine_only && frozen.count(Component::HomographyHead) == 0;
  return plan;
}

void check_gradients_finite(const ModelGrads& g) {
  const nn::Tensor* all[] = {&g.extractor.dw1, &g.extractor.db1,
                             &g.extractor.dw2, &g.extractor.db2,
                             &g.extractor.dw3, &g.extractor.db3};
  for (const nn::Tensor* t : all) {
    if (!finite_all(*t)) throw NumericalOverflow("non-finite extractor gradient");
  }
  for (const HeadGrads* h : {&g.affine, &g.perspective, &g.homography}) {
    for (const nn::Tensor* t : {&h->dw_conv1, &h->db_conv1, &h->dw_conv2,
                                &h->db_conv2}) {
      if (!finite_all(*t)) throw NumericalOverflow("non-finite head gradient");
    }
    for (const nn::Tensor& t : h->dw_fc) {
      if (!finite_all(t)) throw NumericalOverflow("non-finite head gradient");
    }
    for (const nn::Tensor& t : h->db_fc) {
      if (!finite_all(t)) throw NumericalOverflow("non-finite head gradient");
    }
  }
}

}  // namespace

LossBreakdown compute_loss(const TrainingPair& pair, const ModelState& m,
                           const Grid& grid, const LossWeights& w,
                           double ensemble_weight, bool affine_only) {
  ForwardPlan plan;
  plan.affine_only = affine_only;
  return pipeline_pass(pair, pair.labels(), m, grid, w, ensemble_weight, plan,
                       nullptr, nullptr);
}

LossBreakdown compute_gradients(const TrainingPair& pair, const ModelState& m,
                                const Grid& grid, const LossWeights& w,
                                double ensemble_weight,
                                const std::set<Component>& frozen,
                                bool affine_only, ModelGrads& grads) {
  const ForwardPlan plan = plan_for(frozen, affine_only);
  const LossBreakdown bd = pipeline_pass(pair, pair.labels(), m, grid, w,
                                         ensemble_weight, plan, nullptr,
                                         &grads);
  check_gradients_finite(grads);
  return bd;
}

std::pair<ModelState, TrainReport> train(const PairLoader& loader,
                                         size_t count, const TrainConfig& cfg,
                                         const ModelState* init) {
  if (count == 0) throw EmptyDataset("train: dataset is empty");
  if (cfg.learning_rate <= 0) throw Error("train: learning_rate must be > 0");
  if (cfg.batch_size < 1) throw Error("train: batch_size must be >= 1");
  if (cfg.grid_n < 2) throw Error("train: grid_n must be >= 2");

  const auto t_start = std::chrono::steady_clock::now();
  const std::set<Component> frozen = effective_freeze(cfg);

  ModelState model;
  if (init) {
    model = *init;
  } else {
    const TrainingPair first = loader(0);
    if (first.source.h % 8 != 0 || first.source.w % 8 != 0) {
      throw DimensionNotDivisible("train: image dims not divisible by 8");
    }
    model = make_model(first.source.d, first.source.h / 8, first.source.w / 8,
                       cfg.seed);
  }
  model.frozen = frozen;

  const Grid grid = Grid::uniform(cfg.grid_n);
  const bool affine_only = cfg.stage == Stage::Affine;
  const ForwardPlan plan = plan_for(frozen, affine_only);
  const bool use_cache = frozen.count(Component::Extractor) > 0;
  const bool cache_theta_aff = use_cache && !plan.aff_weights;
  const bool cache_theta_pers =
      use_cache && !plan.pers_weights && !affine_only;

  std::vector<std::optional<CachedRecord>> cache(use_cache ? count : 0);
  size_t cache_bytes = 0;
  const size_t cache_budget = cfg.cache_budget_mb * 1024 * 1024;

  ModelGrads grads = ModelGrads::zeros_like(model);
  ModelGrads velocity = ModelGrads::zeros_like(model);

  TrainReport report;
  report.steps_per_epoch =
      static_cast<int>((count + cfg.batch_size - 1) / cfg.batch_size);

  Rng order_rng(cfg.seed + 0x517cc1b727220a95ULL);
  std::vector<size_t> indices(count);
  std::iota(indices.begin(), indices.end(), size_t{0});

  ModelGrads scratch = ModelGrads::zeros_like(model);
  auto element_pass = [&](size_t idx, ModelGrads* gptr) -> LossBreakdown {
    if (!use_cache) {
      const TrainingPair pair = loader(idx);
      return pipeline_pass(pair, pair.labels(), model, grid, cfg.loss_weights,
                           cfg.ensemble_weight, plan, nullptr, gptr);
    }
    if (!cache[idx]) {
      // First touch: run the frozen front end once and keep what fits.
      const TrainingPair pair = loader(idx);
      CachedRecord rec;
      rec.labels = pair.labels();
      const nn::Tensor nS =
          normalize_features(extract_features(pair.source, model.extractor));
      const nn::Tensor nTa = normalize_features(
          extract_features(pair.affine_target, model.extractor));
      nn::Tensor nTh;
      if (!affine_only) {
        nTh = normalize_features(
            extract_features(pair.homography_target, model.extractor));
      }
      if (cache_theta_aff) {
        const std::vector<double> v =
            regress(correlation_map(nS, nTa), model.affine_head);
        rec.theta_aff = AffineParams{v[0], v[1], v[2], v[3], v[4], v[5]};
        rec.l_aff = grid_loss(lift_affine(*rec.theta_aff),
                              lift_affine(rec.labels.affine), grid);
      } else {
        rec.corr_aff = correlation_map(nS, nTa);
      }
      if (!affine_only) {
        if (cache_theta_pers) {
          const std::vector<double> v = regress(correlation_map(nTa, nTh),
                                                model.perspective_head);
          rec.theta_pers = PerspectiveParams{v[0], v[1]};
          rec.l_pers = perspective_mse(*rec.theta_pers,
                                       rec.labels.perspective);
        } else {
          rec.corr_pers = correlation_map(nTa, nTh);
        }
        rec.corr_hom = correlation_map(nS, nTh);
      }
      size_t bytes = 0;
      for (const std::optional<nn::Tensor>* t :
           {&rec.corr_aff, &rec.corr_pers, &rec.corr_hom}) {
        if (*t) bytes += (*t)->numel() * sizeof(double);
      }
      if (cache_bytes + bytes <= cache_budget) {
        cache_bytes += bytes;
        cache[idx] = std::move(rec);
      } else {
        // Over budget: use the record once without storing it.
        return pipeline_pass(pair, rec.labels, model, grid, cfg.loss_weights,
                             cfg.ensemble_weight, plan, &rec, gptr);
      }
    }
    const CachedRecord& rec = *cache[idx];
    return pipeline_pass(TrainingPair{}, rec.labels, model, grid,
                         cfg.loss_weights, cfg.ensemble_weight, plan, &rec,
                         gptr);
  };

  std::vector<Triple> triples = param_triples(model, grads, velocity);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    fisher_yates(indices, order_rng);
    const size_t epoch_first_step = report.history.size();
    for (size_t start = 0; start < count; start += cfg.batch_size) {
      const size_t end = std::min(count, start + cfg.batch_size);
      grads.zero();
      LossBreakdown mean;
      bool skip = false;
      try {
        for (size_t k = start; k < end; ++k) {
          scratch.zero();
          const LossBreakdown bd = element_pass(indices[k], &scratch);
          add_grads(grads, scratch);
          mean.l_aff += bd.l_aff;
          mean.l_pers += bd.l_pers;
          mean.l_hom += bd.l_hom;
          mean.l_en += bd.l_en;
          mean.total += bd.total;
        }
        check_gradients_finite(grads);
      } catch (const NumericalOverflow&) {
        skip = true;
      } catch (const DegenerateDenominator&) {
        // a prediction wandered outside the warpable region; same guard
        skip = true;
      }
      const double inv_b = 1.0 / static_cast<double>(end - start);
      mean.l_aff *= inv_b;
      mean.l_pers *= inv_b;
      mean.l_hom *= inv_b;
      mean.l_en *= inv_b;
      mean.total *= inv_b;
      if (skip) {
        ++report.skipped_batches;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        report.history.push_back(LossBreakdown{nan, nan, nan, nan, nan});
        continue;
      }
      for (const Triple& t : triples) {
        if (frozen.count(t.comp)) continue;
        for (size_t i = 0; i < t.w->data.size(); ++i) {
          t.v->data[i] = cfg.momentum * t.v->data[i] + t.g->data[i] * inv_b;
          t.w->data[i] -= cfg.learning_rate * t.v->data[i];
        }
      }
      report.history.push_back(mean);
    }
    if (cfg.epoch_callback) {
      LossBreakdown epoch_mean;
      const size_t n_steps = report.history.size() - epoch_first_step;
      for (size_t s = epoch_first_step; s < report.history.size(); ++s) {
        const LossBreakdown& b = report.history[s];
        epoch_mean.l_aff += b.l_aff;
        epoch_mean.l_pers += b.l_pers;
        epoch_mean.l_hom += b.l_hom;
        epoch_mean.l_en += b.l_en;
        epoch_mean.total += b.total;
      }
      if (n_steps > 0) {
        const double inv = 1.0 / static_cast<double>(n_steps);
        epoch_mean.l_aff *= inv;
        epoch_mean.l_pers *= inv;
        epoch_mean.l_hom *= inv;
        epoch_mean.l_en *= inv;
        epoch_mean.total *= inv;
      }
      cfg.epoch_callback(epoch, epoch_mean);
    }
  }

  report.final_checksum = model_checksum(model);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(model), std::move(report)};
}

std::pair<ModelState, TrainReport> train(const std::vector<TrainingPair>& pairs,
                                         const TrainConfig& cfg,
                                         const ModelState* init) {
  return train([&pairs](size_t i) { return pairs[i]; }, pairs.size(), cfg,
               init);
}

// ---- checkpoint persistence ------------------------------------------------

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<uint64_t>(v));
}

struct Reader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) {
      throw IoError("checkpoint: unexpected end of file");
    }
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
};

struct ModelDims {
  int d, fh, fw;
};

ModelDims model_dims(const ModelState& m) {
  return {m.extractor.conv1.cin, m.affine_head.fh, m.affine_head.fw};
}

}  // namespace

std::vector<std::pair<std::string, const nn::Tensor*>> named_tensors(
    const ModelState& m) {
  std::vector<std::pair<std::string, const nn::Tensor*>> out;
  auto add = [&out](const std::string& name, const nn::Tensor& t) {
    out.emplace_back(name, &t);
  };
  add("extractor.conv1.weight", m.extractor.conv1.weight);
  add("extractor.conv1.bias", m.extractor.conv1.bias);
  add("extractor.conv2.weight", m.extractor.conv2.weight);
  add("extractor.conv2.bias", m.extractor.conv2.bias);
  add("extractor.conv3.weight", m.extractor.conv3.weight);
  add("extractor.conv3.bias", m.extractor.conv3.bias);
  visit_head("affine_head", m.affine_head, add);
  visit_head("perspective_head", m.perspective_head, add);
  visit_head("homography_head", m.homography_head, add);
  return out;
}

std::vector<uint8_t> serialize_model(const ModelState& m) {
  std::vector<uint8_t> out;
  out.push_back('H');
  out.push_back('A');
  out.push_back('L');
  out.push_back('N');
  put_u32(out, kCheckpointVersion);

  nn::Tensor meta({3});
  const ModelDims dims = model_dims(m);
  meta.data = {double(dims.d), double(dims.fh), double(dims.fw)};
  std::vector<std::pair<std::string, const nn::Tensor*>> tensors;
  tensors.emplace_back("meta", &meta);
  for (auto& nt : named_tensors(m)) tensors.push_back(nt);

  put_u32(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u64(out, t->shape.size());
    for (int d : t->shape) put_u64(out, static_cast<uint64_t>(d));
    for (double v : t->data) put_f64(out, v);
  }
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  put_u32(out, crc);
  return out;
}

uint32_t model_checksum(const ModelState& m) {
  const std::vector<uint8_t> bytes = serialize_model(m);
  // CRC over the payload, i.e. the file's trailing checksum field.
  uint32_t crc = 0;
  for (int i = 0; i < 4; ++i) {
    crc |= uint32_t(bytes[bytes.size() - 4 + i]) << (8 * i);
  }
  return crc;
}

void save_checkpoint(const ModelState& m, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_model(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out.good()) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
  if (buf.size() < 12) throw IoError("load_checkpoint: file too short");

  const uint32_t stored_crc = uint32_t(buf[buf.size() - 4]) |
                              uint32_t(buf[buf.size() - 3]) << 8 |
                              uint32_t(buf[buf.size() - 2]) << 16 |
                              uint32_t(buf[buf.size() - 1]) << 24;
  const uint32_t actual_crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(buf.size() - 4)));
  if (stored_crc != actual_crc) {
    throw ChecksumMismatch("load_checkpoint: CRC mismatch (stored " +
                           std::to_string(stored_crc) + ", computed " +
                           std::to_string(actual_crc) + ")");
  }

  Reader r{buf};
  if (r.str(4) != "HALN") {
    throw UnsupportedFormat("load_checkpoint: bad magic");
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("load_checkpoint: file version " +
                          std::to_string(version) + ", supported version " +
                          std::to_string(kCheckpointVersion));
  }
  const uint32_t n_tensors = r.u32();

  struct Loaded {
    std::vector<int> shape;
    std::vector<double> data;
  };
  std::vector<std::pair<std::string, Loaded>> loaded;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    const uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    const uint64_t rank = r.u64();
    if (rank > 8) throw UnsupportedFormat("load_checkpoint: rank too large");
    Loaded t;
    size_t numel = 1;
    for (uint64_t k = 0; k < rank; ++k) {
      const uint64_t dim = r.u64();
      t.shape.push_back(static_cast<int>(dim));
      numel *= dim;
    }
    t.data.resize(numel);
    for (size_t k = 0; k < numel; ++k) t.data[k] = r.f64();
    loaded.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos != buf.size() - 4) {
    throw UnsupportedFormat("load_checkpoint: trailing bytes before checksum");
  }

  if (loaded.empty() || loaded[0].first != "meta" ||
      loaded[0].second.data.size() != 3) {
    throw UnsupportedFormat("load_checkpoint: missing meta tensor");
  }
  const int d = static_cast<int>(loaded[0].second.data[0]);
  const int fh = static_cast<int>(loaded[0].second.data[1]);
  const int fw = static_cast<int>(loaded[0].second.data[2]);
  if (d < 1 || fh < 1 || fw < 1) {
    throw UnsupportedFormat("load_checkpoint: bad meta dims");
  }

  ModelState m = make_zero_model(d, fh, fw);
  std::vector<std::pair<std::string, const nn::Tensor*>> expected =
      named_tensors(m);
  if (loaded.size() != expected.size() + 1) {
    throw UnsupportedFormat("load_checkpoint: tensor count mismatch");
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, got] = loaded[i + 1];
    if (name != expected[i].first) {
      throw UnsupportedFormat("load_checkpoint: unexpected tensor '" + name +
                              "' (wanted '" + expected[i].first + "')");
    }
    nn::Tensor* dst = const_cast<nn::Tensor*>(expected[i].second);
    if (got.shape != dst->shape) {
      throw UnsupportedFormat("load_checkpoint: shape mismatch for '" + name +
                              "'");
    }
    dst->data.assign(got.data.begin(), got.data.end());
  }
  return m;
}

}  // namespace homalign
