#ifndef MIXEDSEG_TRAINER_HPP_
#define MIXEDSEG_TRAINER_HPP_

#include <filesystem>
#include <vector>

#include "mixedseg/evaluation.hpp"
#include "mixedseg/io.hpp"
#include "mixedseg/losses.hpp"
#include "mixedseg/model.hpp"
#include "mixedseg/optimizer.hpp"
#include "mixedseg/sampling.hpp"

namespace mixedseg {

enum class TrainMode { kStandard, kMixed };

struct TrainOptions {
  TrainMode mode = TrainMode::kMixed;
  LossConfig loss;
  BatchComposition comp;
  OptimizerConfig opt;
  int iterations = 200;
  int checkpoint_every = 100;  // 0 disables periodic checkpoints
  int keep_last = 3;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // empty: keep everything in memory
  bool enforce_subclass_presence = false;
};

struct IterationLog {
  double loss_s = 0.0;
  double loss_c = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<IterationLog> log;
  std::string loss_csv;  // exact bytes of the loss log
};

// Standard mode trains the segmentation head only (a=1) on supervised batches
// (n must be 0); mixed mode trains both heads jointly. Deterministic per
// seed. Writes loss_log.csv, periodic checkpoints and model_final.msup into
// out_dir when one is given.
TrainResult train_loop(Model& model, const DatasetIndex& index, SliceSource& source,
                       const TrainOptions& options);

// Groups the master records of the given volumes into per-volume evaluation
// cases (each slice with its ground-truth mask).
std::vector<EvalCase> collect_eval_cases(const std::vector<SliceRecord>& master,
                                         const std::vector<int>& volume_ids,
                                         SliceSource& source);

}  // namespace mixedseg

#endif  // MIXEDSEG_TRAINER_HPP_
