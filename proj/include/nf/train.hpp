#pragma once

#include <map>

#include "nf/data.hpp"
#include "nf/optim.hpp"
#include "nf/serialize.hpp"

namespace nf {

// Flat experiment description; parsed strictly (unknown keys rejected).
struct ExperimentConfig {
  std::string experiment = "trajectory";  // trajectory | stiff | tpp | density

  std::string data = "sine";
  std::size_t n_series = 1000;
  std::uint64_t data_seed = 0;
  std::size_t queries_per_series = 50;

  // trajectory/stiff: resnet-flow | coupling-flow | gru-flow | ode
  // tpp: mixture | intensity; density: coupling | cnf
  std::string model = "resnet-flow";
  std::string encoder = "coupling-flow";  // tpp hidden-state evolution
  std::string embedding = "tanh-linear";  // resnet time embedding
  std::size_t flow_layers = 2;
  std::size_t units = 32;
  std::size_t hidden_dim = 32;  // tpp hidden-state dimension
  double spectral_coeff = 0.9;
  std::string solver = "dopri5";
  std::size_t solver_steps = 20;
  double rtol = 1e-3;
  double atol = 1e-4;
  std::size_t mixture_k = 8;
  std::size_t n_mc = 20;
  bool normalize_tau = true;
  bool log1p_tau = true;

  double lr = 1e-3;
  double weight_decay = 1e-4;
  double lr_decay = 1.0;  // multiplicative, per epoch
  std::size_t batch_size = 100;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  double gamma = 0.0;  // autonomous-penalty weight
  std::uint64_t seed = 0;

  static ExperimentConfig from_json(const json& j);
  static ExperimentConfig load(const std::string& path);
  json to_json() const;
  std::string hash() const;  // stable over semantically meaningful fields
  void validate() const;
};

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kReportCsvHeader =
    "epoch,train_loss,val_loss,epoch_seconds,cum_seconds,nfev";

struct EpochRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double epoch_seconds = 0.0;
  double cum_seconds = 0.0;
  std::size_t nfev = 0;
};

struct RunReport {
  std::vector<EpochRow> rows;
  std::map<std::string, double> metrics;
  std::string config_hash;
  double train_seconds = 0.0;  // epoch loop only
  double total_seconds = 0.0;  // including evaluation

  void save_csv(const std::string& path) const;
  void save_metrics_json(const std::string& path) const;
};

// Trajectory regression model: either a flow stack evaluated directly or
// a neural ODE integrated with the configured solver.
struct TrajectoryModel {
  bool is_ode = false;
  std::size_t dim = 0;
  FlowStack flow;
  VectorField field;
  SolverConfig scfg = SolverConfig::dopri5(1e-3, 1e-4);

  Tensor predict(const TrajectoryBatch& b, SolveStats* stats = nullptr) const;
  ad::Value predict(ad::Tape& tape, const TrajectoryBatch& b,
                    SolveStats* stats = nullptr) const;

  std::vector<Parameter*> params();
  void project();
  void save(const std::string& path) const;
  static TrajectoryModel load(const std::string& path);
};

TrajectoryModel make_trajectory_model(const ExperimentConfig& cfg,
                                      std::size_t dim, Rng& rng);

struct TppModel {
  bool mixture = true;
  TppMixtureModel mix;
  TppIntensityModel inten;

  std::vector<Parameter*> params();
  void project();
  void save(const std::string& path) const;
  static TppModel load(const std::string& path);
};

TppModel make_tpp_model(const ExperimentConfig& cfg,
                        const EventSequenceDataset& ds, Rng& rng);

struct DensityModel {
  bool cnf = false;
  TimeVaryingCouplingDensity coupling;
  TimeVaryingCNF field;

  std::vector<Parameter*> params();
  void save(const std::string& path) const;
  static DensityModel load(const std::string& path);
};

DensityModel make_density_model(const ExperimentConfig& cfg, Rng& rng);

TrajectoryDataset generate_trajectory_dataset(const ExperimentConfig& cfg);
EventSequenceDataset generate_event_dataset(const ExperimentConfig& cfg);
DensityDataset2D generate_density_dataset(const ExperimentConfig& cfg);

RunReport train_trajectory(const ExperimentConfig& cfg,
                           const TrajectoryDataset& ds, TrajectoryModel& model);
RunReport train_tpp(const ExperimentConfig& cfg,
                    const EventSequenceDataset& ds, TppModel& model);
RunReport train_density(const ExperimentConfig& cfg,
                        const DensityDataset2D& ds, DensityModel& model);

double eval_trajectory_mse(const TrajectoryModel& model,
                           const TrajectoryDataset& ds, Split split,
                           SolveStats* stats = nullptr);
double eval_tpp_nll(const TppModel& model, const EventSequenceDataset& ds,
                    Split split, std::size_t n_mc, std::uint64_t seed);
// Per-event NLL under the generating intensity, averaged over the split.
double mean_gt_nll(const EventSequenceDataset& ds, Split split);
// Mean NLL of the data under the model at t = 1 (the target endpoint).
double eval_density_nll(const DensityModel& model, const DensityDataset2D& ds,
                        Split split);

}  // namespace nf
