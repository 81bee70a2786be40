#ifndef MIXEDSEG_JSON_CONFIG_HPP_
#define MIXEDSEG_JSON_CONFIG_HPP_

#include <json.hpp>

#include "mixedseg/data.hpp"
#include "mixedseg/losses.hpp"
#include "mixedseg/model.hpp"
#include "mixedseg/optimizer.hpp"
#include "mixedseg/sampling.hpp"

namespace mixedseg {

// ADL serializers so configs embed into run echoes and checkpoints.
void to_json(nlohmann::json& j, const BranchConfig& c);
void from_json(const nlohmann::json& j, BranchConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const BatchComposition& c);
void from_json(const nlohmann::json& j, BatchComposition& c);
void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

}  // namespace mixedseg

#endif  // MIXEDSEG_JSON_CONFIG_HPP_
