#ifndef MIXEDSEG_CHECKPOINT_HPP_
#define MIXEDSEG_CHECKPOINT_HPP_

#include <filesystem>
#include <optional>

#include "mixedseg/model.hpp"
#include "mixedseg/optimizer.hpp"

namespace mixedseg {

// Versioned binary model container:
//   magic 'MSUP' | u32 version=1 | u32 len + model-config JSON |
//   u32 len + meta JSON | u32 entry count | entries, each
//   u32 name_len | name | u32 ndim | u64 dims[ndim] | f64 little-endian data.
// Entries: param/<name>, stats/<name> and, when the optimizer is included,
// opt/velocity/<name>. Iterations and optimizer hyperparameters live in the
// meta JSON. No timestamps anywhere: identical state gives identical bytes.
void save_checkpoint(const std::filesystem::path& path, Model& model,
                     const Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
  Model model;
  bool has_optimizer = false;
  OptimizerConfig optimizer_config;
  std::vector<std::vector<Real>> velocity;  // in model.parameters() order
  std::uint64_t iterations = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the optimizer resuming from the checkpoint's velocity/iterations.
Optimizer make_optimizer(const LoadedCheckpoint& ckpt, Model& model);

}  // namespace mixedseg

#endif  // MIXEDSEG_CHECKPOINT_HPP_
