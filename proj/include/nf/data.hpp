#pragma once

#include <string>
#include <vector>

#include "nf/rng.hpp"
#include "nf/tensor.hpp"

namespace nf {

enum class Split { Train, Val, Test, ExtrapSpace, ExtrapTime };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

// One observation: the model maps the state x0 known at time t0 to the
// state at time t. All generators except the stiff one use t0 = 0.
struct TrajectoryRow {
  Split split = Split::Train;
  std::size_t series_id = 0;
  double t0 = 0.0;
  double t = 0.0;
  std::vector<double> x0;
  std::vector<double> target;
};

struct TrajectoryBatch {
  Tensor x0;       // n x d
  Tensor t0;       // n x 1
  Tensor t;        // n x 1
  Tensor target;   // n x d
};

struct TrajectoryDataset {
  std::string kind;
  std::size_t dim = 0;
  std::vector<TrajectoryRow> rows;

  std::vector<std::size_t> split_indices(Split s) const;
  TrajectoryBatch batch(const std::vector<std::size_t>& idx) const;

  void save_csv(const std::string& path) const;
  static TrajectoryDataset load_csv(const std::string& path);
  void save_binary(const std::string& path) const;
  static TrajectoryDataset load_binary(const std::string& path);
};

struct EventSequence {
  Split split = Split::Train;
  std::vector<double> times;  // strictly increasing, in (0, T]
  double T = 0.0;
  double gt_nll = 0.0;  // per-event NLL under the generating intensity
};

struct EventSequenceDataset {
  std::string kind;
  std::vector<EventSequence> seqs;

  std::vector<std::size_t> split_indices(Split s) const;

  void save_csv(const std::string& path) const;
  static EventSequenceDataset load_csv(const std::string& path);
  void save_binary(const std::string& path) const;
  static EventSequenceDataset load_binary(const std::string& path);
};

struct DensityDataset2D {
  std::vector<Split> split;
  Tensor samples;  // n x 2

  std::vector<std::size_t> split_indices(Split s) const;

  void save_csv(const std::string& path) const;
  static DensityDataset2D load_csv(const std::string& path);
  void save_binary(const std::string& path) const;
  static DensityDataset2D load_binary(const std::string& path);
};

enum class PeriodicKind { Sine, Sawtooth, Square, Triangle };
PeriodicKind periodic_kind_from_string(const std::string& s);

// Closed-form flows of the periodic signals.
double periodic_flow(PeriodicKind kind, double t, double x);

struct PeriodicOptions {
  double x_lo = -2.0, x_hi = 2.0;
  double t_lo = 0.0, t_hi = 10.0;
  double x_extrap_lo = -4.0, x_extrap_hi = 4.0;
  double t_extrap_hi = 30.0;
  std::size_t queries_per_series = 50;
};

TrajectoryDataset gen_periodic(PeriodicKind kind, std::size_t n,
                               std::uint64_t seed,
                               const PeriodicOptions& opts = {});

// Sink system x' = A x with A = [[-4, 10], [-3, 2]].
TrajectoryDataset gen_linear_system(std::size_t n, std::uint64_t seed,
                                    std::size_t queries_per_series = 50);
Tensor sink_matrix();

// Lotka-Volterra parametrization, targets from a high-accuracy solve.
TrajectoryDataset gen_ellipse(std::size_t n, std::uint64_t seed,
                              std::size_t queries_per_series = 50);

// Interval pairs (x(t1), t1) -> (x(t2), t2) along the closed-form stiff
// solution, plus an eval split covering the whole grid from x0 = 0.
TrajectoryDataset gen_stiff(std::size_t n, std::uint64_t seed,
                            double interval_len = 0.125, double t_max = 15.0);

enum class TppKind { Poisson, Renewal, Hawkes1, Hawkes2 };
TppKind tpp_kind_from_string(const std::string& s);
std::string to_string(TppKind k);

EventSequenceDataset gen_tpp(TppKind kind, std::size_t n_seq = 1000,
                             std::size_t seq_len = 100, std::uint64_t seed = 0);

DensityDataset2D gen_density2d(std::size_t n, std::uint64_t seed);

}  // namespace nf
