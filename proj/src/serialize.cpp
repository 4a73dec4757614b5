#include "nf/serialize.hpp"

#include <fstream>

namespace nf {

namespace {

// Deterministic placeholder engine for constructors; every parameter is
// overwritten right after construction.
Rng& scratch_rng() {
  static Rng rng(0);
  return rng;
}

std::string embed_kind_name(TimeEmbedding::Kind k) {
  switch (k) {
    case TimeEmbedding::Kind::Linear: return "linear";
    case TimeEmbedding::Kind::TanhLinear: return "tanh-linear";
    case TimeEmbedding::Kind::Fourier: return "fourier";
  }
  return "linear";
}

TimeEmbedding::Kind embed_kind_from_name(const std::string& s) {
  if (s == "linear") return TimeEmbedding::Kind::Linear;
  if (s == "tanh-linear") return TimeEmbedding::Kind::TanhLinear;
  if (s == "fourier") return TimeEmbedding::Kind::Fourier;
  throw std::invalid_argument("unknown embedding kind: " + s);
}

}  // namespace

json tensor_to_json(const Tensor& t) {
  return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("rows").get<std::size_t>(),
                j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

json embedding_to_json(const TimeEmbedding& e) {
  json j{{"kind", embed_kind_name(e.kind)},
         {"dim", e.dim},
         {"bounded", e.bounded},
         {"nonneg", e.nonneg},
         {"alpha", tensor_to_json(e.alpha.value)}};
  if (e.kind == TimeEmbedding::Kind::Fourier)
    j["beta"] = tensor_to_json(e.beta.value);
  return j;
}

TimeEmbedding embedding_from_json(const json& j) {
  TimeEmbedding e;
  e.kind = embed_kind_from_name(j.at("kind").get<std::string>());
  e.dim = j.at("dim").get<std::size_t>();
  e.bounded = j.at("bounded").get<bool>();
  e.nonneg = j.at("nonneg").get<bool>();
  e.alpha = Parameter(tensor_from_json(j.at("alpha")));
  if (e.kind == TimeEmbedding::Kind::Fourier)
    e.beta = Parameter(tensor_from_json(j.at("beta")));
  return e;
}

namespace {

json linear_layer_to_json(const LinearLayer& l) {
  return json{{"W", tensor_to_json(l.W.value)},
              {"b", tensor_to_json(l.b.value)},
              {"spectral_coeff", l.spectral_coeff},
              {"u", tensor_to_json(l.u)},
              {"v", tensor_to_json(l.v)}};
}

LinearLayer linear_layer_from_json(const json& j) {
  LinearLayer l;
  l.W = Parameter(tensor_from_json(j.at("W")));
  l.b = Parameter(tensor_from_json(j.at("b")));
  l.spectral_coeff = j.at("spectral_coeff").get<double>();
  l.u = tensor_from_json(j.at("u"));
  l.v = tensor_from_json(j.at("v"));
  return l;
}

}  // namespace

json mlp_to_json(const MLP& m) {
  json layers = json::array();
  for (const auto& l : m.layers) layers.push_back(linear_layer_to_json(l));
  return json{{"hidden_act", to_string(m.hidden_act)},
              {"output_act", to_string(m.output_act)},
              {"layers", layers}};
}

MLP mlp_from_json(const json& j) {
  MLP m;
  m.hidden_act = activation_from_string(j.at("hidden_act").get<std::string>());
  m.output_act = activation_from_string(j.at("output_act").get<std::string>());
  for (const auto& lj : j.at("layers"))
    m.layers.push_back(linear_layer_from_json(lj));
  return m;
}

namespace {

// (hidden units, hidden layer count) inferred from an MLP built as
// {in, hidden..., out}.
std::pair<std::size_t, std::size_t> mlp_shape(const MLP& m) {
  if (m.layers.size() <= 1) return {0, 0};
  return {m.layers.front().out_dim(), m.layers.size() - 1};
}

}  // namespace

json flow_layer_to_json(const FlowLayer& layer) {
  json j{{"kind", layer.kind()}, {"dim", layer.dim()}};
  if (const auto* r = dynamic_cast<const ResNetFlowLayer*>(&layer)) {
    j["phi"] = embedding_to_json(r->phi);
    j["g"] = mlp_to_json(r->g);
  } else if (const auto* g = dynamic_cast<const GRUFlowLayer*>(&layer)) {
    j["phi"] = embedding_to_json(g->phi);
    j["f_z"] = mlp_to_json(g->f_z);
    j["f_r"] = mlp_to_json(g->f_r);
    j["f_c"] = mlp_to_json(g->f_c);
  } else if (const auto* c = dynamic_cast<const CouplingFlowLayer*>(&layer)) {
    j["A"] = c->A;
    j["B"] = c->B;
    j["u"] = mlp_to_json(c->u);
    j["v"] = mlp_to_json(c->v);
    j["phi_u"] = embedding_to_json(c->phi_u);
    j["phi_v"] = embedding_to_json(c->phi_v);
  } else if (const auto* l = dynamic_cast<const LinearFlow*>(&layer)) {
    j["A"] = tensor_to_json(l->A_mat.value);
  } else {
    throw std::logic_error("flow_layer_to_json: unknown layer type");
  }
  return j;
}

std::unique_ptr<FlowLayer> flow_layer_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  const std::size_t d = j.at("dim").get<std::size_t>();
  Rng& rng = scratch_rng();
  if (kind == "resnet") {
    MLP g = mlp_from_json(j.at("g"));
    TimeEmbedding phi = embedding_from_json(j.at("phi"));
    auto [units, hl] = mlp_shape(g);
    auto layer = std::make_unique<ResNetFlowLayer>(
        d, units, hl, g.layers.front().spectral_coeff, rng,
        phi.kind == TimeEmbedding::Kind::Fourier
            ? TimeEmbedding::Kind::Fourier
            : TimeEmbedding::Kind::TanhLinear);
    layer->phi = std::move(phi);
    layer->g = std::move(g);
    return layer;
  }
  if (kind == "gru") {
    MLP f_z = mlp_from_json(j.at("f_z"));
    auto [units, hl] = mlp_shape(f_z);
    auto layer = std::make_unique<GRUFlowLayer>(
        d, units, hl, f_z.layers.front().spectral_coeff, rng);
    layer->phi = embedding_from_json(j.at("phi"));
    layer->f_z = std::move(f_z);
    layer->f_r = mlp_from_json(j.at("f_r"));
    layer->f_c = mlp_from_json(j.at("f_c"));
    return layer;
  }
  if (kind == "coupling") {
    auto A = j.at("A").get<std::vector<std::size_t>>();
    MLP u = mlp_from_json(j.at("u"));
    auto [units, hl] = mlp_shape(u);
    auto layer = std::make_unique<CouplingFlowLayer>(
        d, !A.empty() && A[0] == 0, units, hl, rng);
    layer->A = std::move(A);
    layer->B = j.at("B").get<std::vector<std::size_t>>();
    layer->u = std::move(u);
    layer->v = mlp_from_json(j.at("v"));
    layer->phi_u = embedding_from_json(j.at("phi_u"));
    layer->phi_v = embedding_from_json(j.at("phi_v"));
    return layer;
  }
  if (kind == "linear")
    return std::make_unique<LinearFlow>(tensor_from_json(j.at("A")));
  throw std::invalid_argument("unknown flow layer kind: " + kind);
}

json flow_stack_to_json(const FlowStack& stack) {
  json layers = json::array();
  for (const auto& l : stack.layers) layers.push_back(flow_layer_to_json(*l));
  return json{{"layers", layers}};
}

FlowStack flow_stack_from_json(const json& j) {
  FlowStack s;
  for (const auto& lj : j.at("layers"))
    s.layers.push_back(flow_layer_from_json(lj));
  return s;
}

json vector_field_to_json(const VectorField& f) {
  return json{{"f", mlp_to_json(f.f)}};
}

VectorField vector_field_from_json(const json& j) {
  VectorField f;
  f.f = mlp_from_json(j.at("f"));
  return f;
}

json solver_config_to_json(const SolverConfig& c) {
  return json{{"method", to_string(c.method)}, {"steps", c.steps},
              {"rtol", c.rtol},               {"atol", c.atol},
              {"h0", c.h0},                   {"max_steps", c.max_steps}};
}

SolverConfig solver_config_from_json(const json& j) {
  SolverConfig c;
  c.method = method_from_string(j.at("method").get<std::string>());
  c.steps = j.at("steps").get<std::size_t>();
  c.rtol = j.at("rtol").get<double>();
  c.atol = j.at("atol").get<double>();
  c.h0 = j.at("h0").get<double>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  return c;
}

json encoder_to_json(const EventEncoder& e) {
  json j{{"kind", to_string(e.kind)},
         {"hidden", e.hidden},
         {"h0", tensor_to_json(e.h0.value)},
         {"wz", linear_layer_to_json(e.cell.wz)},
         {"wr", linear_layer_to_json(e.cell.wr)},
         {"wc", linear_layer_to_json(e.cell.wc)}};
  if (e.kind == EncoderKind::JumpOde) {
    j["field"] = vector_field_to_json(e.field);
    j["ode_cfg"] = solver_config_to_json(e.ode_cfg);
  } else if (e.kind != EncoderKind::DiscreteGru) {
    j["flow"] = flow_stack_to_json(e.flow);
  }
  return j;
}

EventEncoder encoder_from_json(const json& j) {
  EventEncoder e;
  e.kind = encoder_kind_from_string(j.at("kind").get<std::string>());
  e.hidden = j.at("hidden").get<std::size_t>();
  e.h0 = Parameter(tensor_from_json(j.at("h0")));
  e.cell.wz = linear_layer_from_json(j.at("wz"));
  e.cell.wr = linear_layer_from_json(j.at("wr"));
  e.cell.wc = linear_layer_from_json(j.at("wc"));
  if (e.kind == EncoderKind::JumpOde) {
    e.field = vector_field_from_json(j.at("field"));
    e.ode_cfg = solver_config_from_json(j.at("ode_cfg"));
  } else if (e.kind != EncoderKind::DiscreteGru) {
    e.flow = flow_stack_from_json(j.at("flow"));
  }
  return e;
}

json xform_to_json(const InterEventTransform& x) {
  return json{{"mean_tau", x.mean_tau},
              {"normalize", x.normalize},
              {"log1p", x.log1p}};
}

InterEventTransform xform_from_json(const json& j) {
  InterEventTransform x;
  x.mean_tau = j.at("mean_tau").get<double>();
  x.normalize = j.at("normalize").get<bool>();
  x.log1p = j.at("log1p").get<bool>();
  return x;
}

void save_model(const std::string& path, const std::string& model_type,
                const json& model) {
  json j{{"schema_version", kModelSchemaVersion},
         {"model_type", model_type},
         {"model", model}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

json load_model(const std::string& path, std::string* model_type) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  json j = json::parse(is);
  if (j.at("schema_version").get<int>() != kModelSchemaVersion)
    throw std::runtime_error("unsupported model schema version in " + path);
  if (model_type) *model_type = j.at("model_type").get<std::string>();
  return j.at("model");
}

json tpp_mixture_to_json(const TppMixtureModel& m) {
  return json{{"encoder", encoder_to_json(m.enc)},
              {"K", m.dec.K},
              {"decoder", mlp_to_json(m.dec.net)},
              {"xform", xform_to_json(m.xform)}};
}

TppMixtureModel tpp_mixture_from_json(const json& j) {
  TppMixtureModel m;
  m.enc = encoder_from_json(j.at("encoder"));
  m.dec.K = j.at("K").get<std::size_t>();
  m.dec.net = mlp_from_json(j.at("decoder"));
  m.xform = xform_from_json(j.at("xform"));
  return m;
}

json tpp_intensity_to_json(const TppIntensityModel& m) {
  return json{{"encoder", encoder_to_json(m.enc)},
              {"head", mlp_to_json(m.head.net)},
              {"xform", xform_to_json(m.xform)}};
}

TppIntensityModel tpp_intensity_from_json(const json& j) {
  TppIntensityModel m;
  m.enc = encoder_from_json(j.at("encoder"));
  m.head.net = mlp_from_json(j.at("head"));
  m.xform = xform_from_json(j.at("xform"));
  return m;
}

json density_coupling_to_json(const TimeVaryingCouplingDensity& m) {
  return json{{"flow", flow_stack_to_json(m.flow)}};
}

TimeVaryingCouplingDensity density_coupling_from_json(const json& j) {
  TimeVaryingCouplingDensity m;
  m.flow = flow_stack_from_json(j.at("flow"));
  return m;
}

json density_cnf_to_json(const TimeVaryingCNF& m) {
  return json{{"field", vector_field_to_json(m.field)},
              {"cfg", solver_config_to_json(m.cfg)}};
}

TimeVaryingCNF density_cnf_from_json(const json& j) {
  TimeVaryingCNF m;
  m.field = vector_field_from_json(j.at("field"));
  m.cfg = solver_config_from_json(j.at("cfg"));
  return m;
}

}  // namespace nf
