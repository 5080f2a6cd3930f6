#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tgg/aggnet.hpp"
#include "tgg/checkpoint.hpp"
#include "tgg/dataio.hpp"
#include "tgg/propagate.hpp"
#include "tgg/protograph.hpp"
#include "tgg/relkernel.hpp"
#include "tgg/synth.hpp"

namespace tgg {

enum class TaskMode { Zsl, Gzsl, Fsl };

std::string to_string(TaskMode mode);
TaskMode task_mode_from_string(const std::string& s);

struct AblationFlags {
  bool aggregation = true;  // false: raw features feed the relation kernel
  bool attention = true;    // false: mean aggregation in both heads
  bool gcn = true;          // false: no GCN refinement
  bool kernel_loss = true;  // false: the kernel regularizer is dropped
  bool dual_loss = true;    // false: the dual propagation term is dropped
};

struct ExperimentConfig {
  TaskMode mode = TaskMode::Zsl;
  int n_way = 5;
  int k_shot = 3;
  int t_query = 10;
  double lambda_dual = 0.5;
  double lambda_kernel = 0.5;
  double mu = 0.5;
  double bandwidth = 1.0;
  std::vector<int> agg_dims = {64, 32};
  std::vector<int> gcn_dims = {32, 16};
  std::vector<int> sample_sizes = {10, 5};
  int k_nn = 10;
  double crop_threshold = 0.3;
  int dummy_per_class = 0;  // 0: defaults to k_shot
  int fsl_support = 1;      // real unseen-class support instances in FSL mode
  AblationFlags ablation;
  std::uint64_t seed = 0;
  int episodes = 500;
  int patience = 50;       // episodes without validation improvement
  int val_every = 10;
  int val_episodes = 8;
  int val_class_count = 2;  // seen classes held out as pseudo-unseen
  int eval_trials = 10;
  int eval_batch = 30;
  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  double temperature = 1.0;
  double leaky_slope = 0.2;
  int edge_hidden = 32;
  double ridge = 1e-6;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;
  int wl_iterations = 2;
  bool standardize = false;

  int dummy_count() const { return dummy_per_class > 0 ? dummy_per_class : k_shot; }
  void check() const;

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

/// An N-way K-shot task: support rows (real or synthesized) then T query
/// rows, episode-local labels, the labeled mask and the domain partition.
struct Episode {
  std::vector<int> classes;         // episode label order
  Matrix features;                  // (N*K + T) x d
  std::vector<int> node_class_ids;  // ground-truth class id per node
  std::vector<int> node_labels;     // episode-local label per node
  std::vector<bool> labeled;        // true for support rows
  std::vector<bool> unseen_node;    // domain flag per node
  std::vector<int> query_rows;
  std::uint64_t seed = 0;

  Eigen::Index size() const { return features.rows(); }
  LabelMatrix label_matrix() const;
};

struct TggModel {
  ExperimentConfig cfg;
  std::optional<AggregateNetwork> agg;  // absent under the aggregation ablation
  RelationKernel kernel;

  ParamMap trainable_params() const;
  std::vector<Tensor> param_list() const;

  struct Snapshot {
    std::vector<Matrix> values;
    std::vector<Matrix> bn_stats;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);
};

TggModel build_model(const ExperimentConfig& cfg, Eigen::Index feature_dim);

void save_model(const TggModel& model, const std::string& path);
void load_model(TggModel& model, const std::string& path);

/// Dataset/graph/synthesizer preparation shared by training and
/// checkpoint-based evaluation: FSL support injection, optional
/// standardization, pseudo-unseen validation class selection, synthesizer fit
/// (excluding the validation classes) and graph cropping. Deterministic under
/// the config seed.
struct Prepared {
  Dataset data;
  PrototypeGraph graph;
  ConditionalSynthesizer synth;
  std::vector<int> val_classes;
  std::vector<int> train_seen;  // seen classes minus the validation holdout
};

Prepared prepare(const Dataset& ds, const PrototypeGraph& g, const ExperimentConfig& cfg);

enum class EpisodeRole { Train, Validation };

Episode build_episode(const Prepared& prep, const ExperimentConfig& cfg,
                      std::uint64_t seed, EpisodeRole role);

struct EpisodeOutput {
  Tensor y_star;
  Tensor loss_c, loss_d, loss_k, total;
  Matrix probabilities;  // query rows x episode classes
  double query_accuracy = 0.0;
};

EpisodeOutput run_episode(TggModel& model, const Episode& episode,
                          const PrototypeGraph& g, BatchNormMode mode,
                          bool want_losses);

struct TrainResult {
  TggModel model;
  Prepared prep;
  std::string log_csv;
  double best_val = 0.0;
  int episodes_run = 0;
};

/// Episodic training with Adam, periodic validation on pseudo-unseen classes
/// and early stopping; restores the best-validation parameters. Aborts with
/// the episode seed if the loss turns non-finite.
TrainResult train(const Dataset& ds, const PrototypeGraph& g,
                  const ExperimentConfig& cfg);

struct Metrics {
  TaskMode mode = TaskMode::Zsl;
  double accuracy = 0.0;                    // zsl / fsl top-1 on unseen
  double acc_seen = 0.0, acc_unseen = 0.0;  // gzsl
  double hm = 0.0;
  std::vector<double> per_trial;
  std::string to_json_text() const;
};

double harmonic_mean(double acc_seen, double acc_unseen);

Metrics evaluate(TggModel& model, const Prepared& prep, TaskMode mode);

struct SweepRow {
  double threshold;
  double accuracy;
};

/// Trains and evaluates (ZSL) once per crop threshold; rows sorted by
/// threshold.
std::vector<SweepRow> sensitivity_sweep(const Dataset& ds, const PrototypeGraph& g,
                                        const ExperimentConfig& cfg,
                                        std::vector<double> thresholds);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Deterministic stream-splitting helper for deriving independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace tgg
