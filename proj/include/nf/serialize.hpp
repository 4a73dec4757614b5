#pragma once

#include <json.hpp>

#include "nf/density.hpp"
#include "nf/tpp.hpp"

namespace nf {

using json = nlohmann::ordered_json;

inline constexpr int kModelSchemaVersion = 1;

json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const json& j);

json embedding_to_json(const TimeEmbedding& e);
TimeEmbedding embedding_from_json(const json& j);

json mlp_to_json(const MLP& m);
MLP mlp_from_json(const json& j);

json flow_layer_to_json(const FlowLayer& layer);
std::unique_ptr<FlowLayer> flow_layer_from_json(const json& j);

json flow_stack_to_json(const FlowStack& stack);
FlowStack flow_stack_from_json(const json& j);

json vector_field_to_json(const VectorField& f);
VectorField vector_field_from_json(const json& j);

json solver_config_to_json(const SolverConfig& c);
SolverConfig solver_config_from_json(const json& j);

json encoder_to_json(const EventEncoder& e);
EventEncoder encoder_from_json(const json& j);

json xform_to_json(const InterEventTransform& x);
InterEventTransform xform_from_json(const json& j);

// Top-level model files: {"schema_version", "model_type", "model"}.
void save_model(const std::string& path, const std::string& model_type,
                const json& model);
json load_model(const std::string& path, std::string* model_type = nullptr);

struct TppMixtureModel {
  EventEncoder enc;
  MixtureDecoder dec;
  InterEventTransform xform;
};

struct TppIntensityModel {
  EventEncoder enc;
  IntensityHead head;
  InterEventTransform xform;
};

json tpp_mixture_to_json(const TppMixtureModel& m);
TppMixtureModel tpp_mixture_from_json(const json& j);
json tpp_intensity_to_json(const TppIntensityModel& m);
TppIntensityModel tpp_intensity_from_json(const json& j);

json density_coupling_to_json(const TimeVaryingCouplingDensity& m);
TimeVaryingCouplingDensity density_coupling_from_json(const json& j);
json density_cnf_to_json(const TimeVaryingCNF& m);
TimeVaryingCNF density_cnf_from_json(const json& j);

}  // namespace nf
