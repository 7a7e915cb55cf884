#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "homalign/datagen.hpp"
#include "homalign/loss.hpp"
#include "homalign/regression.hpp"

namespace homalign {

/// Staged schedule:
///   Affine         — trains extractor + affine head, loss alpha*l_aff only.
///   PerspectiveHom — freezes {extractor, affine head}, trains perspective +
///                    homography heads with the full four-term loss.
///   FullEnsemble   — additionally freezes the perspective head and
///                    fine-tunes the homography head.
enum class Stage { Affine, PerspectiveHom, FullEnsemble };

struct TrainConfig {
  Stage stage = Stage::Affine;
  int epochs = 50;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  uint64_t seed = 0;
  LossWeights loss_weights{};
  int grid_n = 20;
  double ensemble_weight = 0.5;
  std::set<Component> freeze;  // extra freezes on top of the stage-implied set
  bool train_extractor_all_stages = false;
  size_t cache_budget_mb = 1024;  // cap on frozen-extractor correlation cache
  /// Invoked with (epoch index, mean breakdown of the epoch) after each
  /// epoch; purely observational.
  std::function<void(int, const LossBreakdown&)> epoch_callback;
};

struct TrainReport {
  std::vector<LossBreakdown> history;  // one entry per optimizer step
  int steps_per_epoch = 0;
  double wall_seconds = 0.0;
  uint32_t final_checksum = 0;  // CRC32 of the serialized final model
  /// Batches dropped by the explosion guard (non-finite gradient or a
  /// degenerate predicted transform); their history entries are NaN.
  int skipped_batches = 0;
};

/// Mirrors the trainable tensors of a ModelState; also reused as the
/// momentum buffer.
struct ModelGrads {
  ExtractorGrads extractor;
  HeadGrads affine, perspective, homography;

  static ModelGrads zeros_like(const ModelState& m);
  void zero();
};

/// Stage-implied freezes merged with cfg.freeze.
std::set<Component> effective_freeze(const TrainConfig& cfg);

/// Forward pass and total loss for one pair, sharing the exact code path of
/// the gradient computation. affine_only restricts the graph to the affine
/// branch (Stage A).
LossBreakdown compute_loss(const TrainingPair& pair, const ModelState& m,
                           const Grid& grid, const LossWeights& w,
                           double ensemble_weight, bool affine_only = false);

/// Reverse-mode gradients of the total loss for one pair, accumulated into
/// grads. Frozen components receive no gradient. Throws NumericalOverflow
/// when a non-finite gradient appears.
LossBreakdown compute_gradients(const TrainingPair& pair, const ModelState& m,
                                const Grid& grid, const LossWeights& w,
                                double ensemble_weight,
                                const std::set<Component>& frozen,
                                bool affine_only, ModelGrads& grads);

using PairLoader = std::function<TrainingPair(size_t)>;

/// SGD with momentum over the staged schedule. Deterministic given the
/// config seed: identical runs produce bit-identical models. init must be
/// given for stages past Affine (the CLI enforces this; the API accepts any
/// model of matching dims). Throws EmptyDataset when count == 0.
std::pair<ModelState, TrainReport> train(const PairLoader& loader,
                                         size_t count, const TrainConfig& cfg,
                                         const ModelState* init = nullptr);

std::pair<ModelState, TrainReport> train(const std::vector<TrainingPair>& pairs,
                                         const TrainConfig& cfg,
                                         const ModelState* init = nullptr);

// ---- checkpoint persistence ----------------------------------------------
// Binary format: magic "HALN"; format version u32 LE; tensor count u32 LE;
// per tensor: name length u32 LE, UTF-8 name, rank u64 LE, dims u64 LE each,
// payload as little-endian IEEE-754 doubles; trailing CRC32 (u32 LE, zlib
// polynomial) over all preceding bytes.

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& m, const std::string& path);
ModelState load_checkpoint(const std::string& path);

/// Serialized checkpoint image (identical bytes to the file).
std::vector<uint8_t> serialize_model(const ModelState& m);
uint32_t model_checksum(const ModelState& m);

/// Fixed-order (name, tensor) registry backing serialization.
std::vector<std::pair<std::string, const nn::Tensor*>> named_tensors(
    const ModelState& m);

}  // namespace homalign
