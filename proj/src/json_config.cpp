#include "mixedseg/json_config.hpp"

namespace mixedseg {

namespace {

std::string padding_name(Padding p) {
  return p == Padding::kSame ? "same" : "valid";
}

Padding padding_from(const std::string& s) {
  if (s == "same") return Padding::kSame;
  if (s == "valid") return Padding::kValid;
  throw ConfigError("padding must be 'same' or 'valid', got '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const BranchConfig& c) {
  j = nlohmann::json{{"pool_kernel", {c.pool_kernel.first, c.pool_kernel.second}},
                     {"pool_stride", {c.pool_stride.first, c.pool_stride.second}},
                     {"branch_conv_out", c.branch_conv_out},
                     {"fc_widths", c.fc_widths},
                     {"skip_from", c.skip_from},
                     {"skip_to", c.skip_to}};
}

void from_json(const nlohmann::json& j, BranchConfig& c) {
  auto pk = j.at("pool_kernel").get<std::vector<int>>();
  auto ps = j.at("pool_stride").get<std::vector<int>>();
  if (pk.size() != 2 || ps.size() != 2) {
    throw ConfigError("pool_kernel/pool_stride must have two entries");
  }
  c.pool_kernel = {pk[0], pk[1]};
  c.pool_stride = {ps[0], ps[1]};
  c.branch_conv_out = j.at("branch_conv_out").get<int>();
  c.fc_widths = j.at("fc_widths").get<std::vector<int>>();
  c.skip_from = j.value("skip_from", 1);
  c.skip_to = j.value("skip_to", 5);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_channels", c.input_channels},
                     {"input_size", {c.input_size.first, c.input_size.second}},
                     {"depth", c.depth},
                     {"base_width", c.base_width},
                     {"num_classes", c.num_classes},
                     {"padding", padding_name(c.padding_mode)},
                     {"branch", c.branch}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.input_channels = j.at("input_channels").get<int>();
  auto sz = j.at("input_size").get<std::vector<int>>();
  if (sz.size() != 2) throw ConfigError("input_size must have two entries");
  c.input_size = {sz[0], sz[1]};
  c.depth = j.at("depth").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.padding_mode = padding_from(j.at("padding").get<std::string>());
  c.branch = j.at("branch").get<BranchConfig>();
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = nlohmann::json{{"a", c.a},
                     {"target_weights", c.target_weights},
                     {"strict_prefactor", c.strict_prefactor}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  c.a = j.at("a").get<double>();
  c.target_weights = j.at("target_weights").get<std::vector<double>>();
  c.strict_prefactor = j.value("strict_prefactor", false);
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"momentum", c.momentum},
                     {"batches_per_iteration", c.batches_per_iteration},
                     {"norm_epsilon", c.norm_epsilon},
                     {"lr_decay_every", c.lr_decay_every},
                     {"lr_decay_factor", c.lr_decay_factor},
                     {"normalize_after_momentum", c.normalize_after_momentum}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.batches_per_iteration = j.at("batches_per_iteration").get<int>();
  c.norm_epsilon = j.value("norm_epsilon", 1e-12);
  c.lr_decay_every = j.value("lr_decay_every", 2000);
  c.lr_decay_factor = j.value("lr_decay_factor", 0.5);
  c.normalize_after_momentum = j.value("normalize_after_momentum", false);
}

void to_json(nlohmann::json& j, const BatchComposition& c) {
  j = nlohmann::json{{"k", c.k}, {"m", c.m}, {"n", c.n}};
}

void from_json(const nlohmann::json& j, BatchComposition& c) {
  c.k = j.at("k").get<int>();
  c.m = j.at("m").get<int>();
  c.n = j.at("n").get<int>();
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"num_volumes", c.num_volumes},
                     {"tumor_fraction", c.tumor_fraction},
                     {"channels", c.channels},
                     {"depth", c.depth},
                     {"height", c.height},
                     {"width", c.width},
                     {"noise_sigma", c.noise_sigma},
                     {"num_classes", c.num_classes},
                     {"class_intensity", c.class_intensity},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c = GeneratorConfig::defaults();
  c.num_volumes = j.at("num_volumes").get<int>();
  c.tumor_fraction = j.at("tumor_fraction").get<double>();
  c.channels = j.value("channels", 2);
  c.depth = j.value("depth", 10);
  c.height = j.value("height", 32);
  c.width = j.value("width", 32);
  c.noise_sigma = j.value("noise_sigma", 0.08);
  c.num_classes = j.value("num_classes", 4);
  if (j.contains("class_intensity")) {
    c.class_intensity = j.at("class_intensity").get<std::vector<std::vector<double>>>();
  }
  c.seed = j.value("seed", std::uint64_t(0));
}

}  // namespace mixedseg
