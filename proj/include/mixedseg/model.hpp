#ifndef MIXEDSEG_MODEL_HPP_
#define MIXEDSEG_MODEL_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mixedseg/labelmap.hpp"
#include "mixedseg/ops.hpp"
#include "mixedseg/tape.hpp"
#include "mixedseg/tensor.hpp"

namespace mixedseg {

// Image-level classification branch: one mean-pooling, one 3x3 convolution and
// seven fully-connected layers, with the outputs of fc[skip_from] and
// fc[skip_to] concatenated into the input of the layer after skip_to.
struct BranchConfig {
  std::pair<int, int> pool_kernel{8, 8};
  std::pair<int, int> pool_stride{8, 8};
  int branch_conv_out = 32;
  std::vector<int> fc_widths{256, 128, 64, 64, 64, 32, 2};
  int skip_from = 1;  // 1-based layer indices
  int skip_to = 5;

  void validate() const;
};

struct ModelConfig {
  int input_channels = 4;
  std::pair<int, int> input_size{32, 32};  // H, W
  int depth = 2;       // number of pooling levels
  int base_width = 8;  // channels at the first level, doubling per level
  int num_classes = 2;
  Padding padding_mode = Padding::kSame;
  BranchConfig branch;

  // 1 branch for the binary model, one per tumor subclass otherwise.
  int num_branches() const { return num_classes == 2 ? 1 : num_classes - 1; }
  int level_width(int level) const { return base_width << level; }
  void validate() const;

  // 2-channel 32x32 binary model used throughout the tests.
  static ModelConfig toy_binary();
  static ModelConfig toy_multiclass();
  // Valid-padding schedule whose second-to-last layer is 64 maps of 101x101.
  static ModelConfig valid_101_demo();
};

// conv (no bias; batch norm supplies the shift) + batch norm + ReLU
struct ConvBnRelu {
  Tensor w;
  Tensor gamma, beta;
  RunningStats stats;
  ConvSpec spec;
};

struct FcLayer {
  Tensor w, b;
  bool relu = true;
};

struct Branch {
  ConvBnRelu conv;
  std::vector<FcLayer> fc;
};

struct ForwardOutput {
  Tensor seg_logits;                 // [N,K,H',W']
  std::vector<Tensor> class_logits;  // num_branches x [N,2]
};

class Model {
 public:
  ModelConfig config;
  std::vector<std::array<ConvBnRelu, 2>> encoder;
  std::array<ConvBnRelu, 2> bottleneck;
  std::vector<std::array<ConvBnRelu, 2>> decoder;  // decoder[i] runs at level i
  Tensor final_w, final_b;                         // 1x1 conv, K outputs
  std::vector<Branch> branches;

  // Deterministic iteration order; names are stable and used by checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  // Running batch-norm statistics, named alongside their layers.
  std::vector<std::pair<std::string, Tensor>> named_stats();

  void zero_grad();
};

// Deterministic fan-in-scaled uniform initialization from the seed.
Model build_model(const ModelConfig& config, std::uint64_t seed);

enum class ForwardMode { kTrain, kInfer };

// Train mode records on the tape and normalizes with batch statistics
// (updating the running averages); infer mode uses the running statistics and
// records nothing. `with_branches` off runs the plain segmentation network.
ForwardOutput forward(Model& model, const Tensor& batch_images, ForwardMode mode,
                      Tape* tape = nullptr, bool with_branches = true);

// Per-pixel argmax over the K classes, ties toward the lower class index.
// Accepts [C,H,W] or [N,C,H,W]; returns [H',W'] or [N,H',W'].
LabelMap predict_mask(Model& model, const Tensor& image);

// Layer-by-layer output shapes and parameter counts for the configured input
// size, plus the total; computed analytically.
std::string describe(const Model& model);

std::size_t parameter_count(const Model& model);

}  // namespace mixedseg

#endif  // MIXEDSEG_MODEL_HPP_
