#include "tgg/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace tgg {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined streams
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string to_string(TaskMode mode) {
  switch (mode) {
    case TaskMode::Zsl: return "zsl";
    case TaskMode::Gzsl: return "gzsl";
    case TaskMode::Fsl: return "fsl";
  }
  return "zsl";
}

TaskMode task_mode_from_string(const std::string& s) {
  if (s == "zsl") return TaskMode::Zsl;
  if (s == "gzsl") return TaskMode::Gzsl;
  if (s == "fsl") return TaskMode::Fsl;
  throw ConfigError("unknown mode '" + s + "' (expected zsl, gzsl or fsl)");
}

void ExperimentConfig::check() const {
  if (n_way < 2) throw ConfigError("n_way must be at least 2");
  if (k_shot < 1 || t_query < 1) throw ConfigError("k_shot and t_query must be positive");
  if (lambda_dual < 0.0 || lambda_kernel < 0.0)
    throw ConfigError("loss weights must be non-negative");
  if (!(mu > 0.0 && mu < 1.0)) throw ConfigError("mu must lie in (0,1)");
  if (bandwidth <= 0.0) throw ConfigError("bandwidth must be positive");
  if (agg_dims.empty() && ablation.aggregation)
    throw ConfigError("agg_dims must not be empty");
  if (sample_sizes.size() != agg_dims.size())
    throw ConfigError("sample_sizes must match agg_dims (one per hop)");
  if (mode == TaskMode::Fsl && fsl_support != 1 && fsl_support != 3)
    throw ConfigError("fsl_support must be 1 or 3");
  if (episodes < 1) throw ConfigError("episodes must be positive");
  if (val_class_count > 0 && (val_every < 1 || val_episodes < 1))
    throw ConfigError("validation cadence must be positive");
  if (eval_trials < 1 || eval_batch < 1)
    throw ConfigError("evaluation settings must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (wl_iterations < 1) throw ConfigError("wl_iterations must be >= 1");
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

namespace {

const char* const kKnownKeys[] = {
    "mode", "n_way", "k_shot", "t_query", "lambda_dual", "lambda_kernel", "mu",
    "bandwidth", "agg_dims", "gcn_dims", "sample_sizes", "k_nn", "crop_threshold",
    "dummy_per_class", "fsl_support", "ablation", "seed", "episodes", "patience",
    "val_every", "val_episodes", "val_class_count", "eval_trials", "eval_batch",
    "learning_rate", "weight_decay", "temperature", "leaky_slope", "edge_hidden",
    "ridge", "bn_epsilon", "bn_momentum", "wl_iterations", "standardize",
    "data", "output"};  // data/output sections belong to the CLI

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  for (const auto& [key, value] : doc.items()) {
    if (std::find_if(std::begin(kKnownKeys), std::end(kKnownKeys),
                     [&](const char* k) { return key == k; }) == std::end(kKnownKeys))
      throw ConfigError("config: unknown key '" + key + "'");
  }
  ExperimentConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::decay_t<decltype(field)>>();
  };
  if (doc.contains("mode")) cfg.mode = task_mode_from_string(doc.at("mode").get<std::string>());
  get("n_way", cfg.n_way);
  get("k_shot", cfg.k_shot);
  get("t_query", cfg.t_query);
  get("lambda_dual", cfg.lambda_dual);
  get("lambda_kernel", cfg.lambda_kernel);
  get("mu", cfg.mu);
  get("bandwidth", cfg.bandwidth);
  get("agg_dims", cfg.agg_dims);
  get("gcn_dims", cfg.gcn_dims);
  get("sample_sizes", cfg.sample_sizes);
  get("k_nn", cfg.k_nn);
  get("crop_threshold", cfg.crop_threshold);
  get("dummy_per_class", cfg.dummy_per_class);
  get("fsl_support", cfg.fsl_support);
  if (doc.contains("ablation")) {
    const auto& ab = doc.at("ablation");
    auto get_flag = [&](const char* key, bool& field) {
      if (ab.contains(key)) field = ab.at(key).get<bool>();
    };
    get_flag("aggregation", cfg.ablation.aggregation);
    get_flag("attention", cfg.ablation.attention);
    get_flag("gcn", cfg.ablation.gcn);
    get_flag("kernel_loss", cfg.ablation.kernel_loss);
    get_flag("dual_loss", cfg.ablation.dual_loss);
  }
  get("seed", cfg.seed);
  get("episodes", cfg.episodes);
  get("patience", cfg.patience);
  get("val_every", cfg.val_every);
  get("val_episodes", cfg.val_episodes);
  get("val_class_count", cfg.val_class_count);
  get("eval_trials", cfg.eval_trials);
  get("eval_batch", cfg.eval_batch);
  get("learning_rate", cfg.learning_rate);
  get("weight_decay", cfg.weight_decay);
  get("temperature", cfg.temperature);
  get("leaky_slope", cfg.leaky_slope);
  get("edge_hidden", cfg.edge_hidden);
  get("ridge", cfg.ridge);
  get("bn_epsilon", cfg.bn_epsilon);
  get("bn_momentum", cfg.bn_momentum);
  get("wl_iterations", cfg.wl_iterations);
  get("standardize", cfg.standardize);
  cfg.check();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ExperimentConfig::to_json_text() const {
  nlohmann::json doc;
  doc["mode"] = to_string(mode);
  doc["n_way"] = n_way;
  doc["k_shot"] = k_shot;
  doc["t_query"] = t_query;
  doc["lambda_dual"] = lambda_dual;
  doc["lambda_kernel"] = lambda_kernel;
  doc["mu"] = mu;
  doc["bandwidth"] = bandwidth;
  doc["agg_dims"] = agg_dims;
  doc["gcn_dims"] = gcn_dims;
  doc["sample_sizes"] = sample_sizes;
  doc["k_nn"] = k_nn;
  doc["crop_threshold"] = crop_threshold;
  doc["dummy_per_class"] = dummy_per_class;
  doc["fsl_support"] = fsl_support;
  doc["ablation"] = {{"aggregation", ablation.aggregation},
                     {"attention", ablation.attention},
                     {"gcn", ablation.gcn},
                     {"kernel_loss", ablation.kernel_loss},
                     {"dual_loss", ablation.dual_loss}};
  doc["seed"] = seed;
  doc["episodes"] = episodes;
  doc["patience"] = patience;
  doc["val_every"] = val_every;
  doc["val_episodes"] = val_episodes;
  doc["val_class_count"] = val_class_count;
  doc["eval_trials"] = eval_trials;
  doc["eval_batch"] = eval_batch;
  doc["learning_rate"] = learning_rate;
  doc["weight_decay"] = weight_decay;
  doc["temperature"] = temperature;
  doc["leaky_slope"] = leaky_slope;
  doc["edge_hidden"] = edge_hidden;
  doc["ridge"] = ridge;
  doc["bn_epsilon"] = bn_epsilon;
  doc["bn_momentum"] = bn_momentum;
  doc["wl_iterations"] = wl_iterations;
  doc["standardize"] = standardize;
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

LabelMatrix Episode::label_matrix() const {
  LabelMatrix lm;
  lm.onehot = Matrix::Zero(size(), static_cast<Eigen::Index>(classes.size()));
  for (Eigen::Index i = 0; i < size(); ++i)
    lm.onehot(i, node_labels[static_cast<std::size_t>(i)]) = 1.0;
  lm.labeled = labeled;
  return lm;
}

TggModel build_model(const ExperimentConfig& cfg, Eigen::Index feature_dim) {
  TggModel model;
  model.cfg = cfg;
  Rng rng(mix_seed(cfg.seed, 0x0d31));
  Eigen::Index kernel_input = feature_dim;
  if (cfg.ablation.aggregation) {
    AggregateNetwork agg = AggregateNetwork::create(feature_dim, cfg.agg_dims, rng);
    agg.attention_enabled = cfg.ablation.attention;
    agg.leaky_slope = cfg.leaky_slope;
    agg.bn_epsilon = cfg.bn_epsilon;
    agg.bn_momentum = cfg.bn_momentum;
    kernel_input = agg.output_dim();
    model.agg = std::move(agg);
  }
  model.kernel = RelationKernel::create(kernel_input, cfg.gcn_dims, cfg.edge_hidden,
                                        cfg.bandwidth, cfg.wl_iterations,
                                        cfg.ablation.gcn, rng);
  return model;
}

ParamMap TggModel::trainable_params() const {
  ParamMap out;
  if (agg) agg->collect_params("agg.", out);
  kernel.collect_params("kernel.", out);
  return out;
}

std::vector<Tensor> TggModel::param_list() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : trainable_params()) out.push_back(tensor);
  return out;
}

TggModel::Snapshot TggModel::snapshot() const {
  Snapshot s;
  for (auto& [name, tensor] : trainable_params()) s.values.push_back(tensor.value());
  if (agg)
    for (const auto& layer : agg->layers) {
      s.bn_stats.push_back(layer.bn_state.running_mean);
      s.bn_stats.push_back(layer.bn_state.running_var);
    }
  return s;
}

void TggModel::restore(const Snapshot& s) {
  auto params = trainable_params();
  if (s.values.size() != params.size())
    throw ShapeError("snapshot does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].second.set_value(s.values[i]);
  if (agg) {
    std::size_t k = 0;
    for (auto& layer : agg->layers) {
      layer.bn_state.running_mean = s.bn_stats.at(k++);
      layer.bn_state.running_var = s.bn_stats.at(k++);
    }
  }
}

void save_model(const TggModel& model, const std::string& path) {
  ParamMap entries = model.trainable_params();
  if (model.agg)
    for (std::size_t i = 0; i < model.agg->layers.size(); ++i) {
      const auto& st = model.agg->layers[i].bn_state;
      const std::string base = "agg.layer" + std::to_string(i) + ".";
      entries.emplace_back(base + "bn_running_mean", Tensor::constant(st.running_mean));
      entries.emplace_back(base + "bn_running_var", Tensor::constant(st.running_var));
    }
  save_checkpoint(entries, path);
}

void load_model(TggModel& model, const std::string& path) {
  ParamMap entries = model.trainable_params();
  std::vector<Tensor> bn_slots;
  if (model.agg)
    for (std::size_t i = 0; i < model.agg->layers.size(); ++i) {
      const auto& st = model.agg->layers[i].bn_state;
      const std::string base = "agg.layer" + std::to_string(i) + ".";
      bn_slots.push_back(Tensor::constant(st.running_mean));
      entries.emplace_back(base + "bn_running_mean", bn_slots.back());
      bn_slots.push_back(Tensor::constant(st.running_var));
      entries.emplace_back(base + "bn_running_var", bn_slots.back());
    }
  load_checkpoint(entries, path);
  if (model.agg) {
    std::size_t k = 0;
    for (auto& layer : model.agg->layers) {
      layer.bn_state.running_mean = bn_slots[k++].value();
      layer.bn_state.running_var = bn_slots[k++].value();
    }
  }
}

// ---------------------------------------------------------------------------
// Preparation and episode construction
// ---------------------------------------------------------------------------

Prepared prepare(const Dataset& ds_in, const PrototypeGraph& g, const ExperimentConfig& cfg) {
  cfg.check();
  Prepared prep;
  Dataset ds = ds_in;
  if (cfg.mode == TaskMode::Fsl)
    ds = with_fsl_support(ds, cfg.fsl_support, mix_seed(cfg.seed, 0xf51));
  if (cfg.standardize) ds = standardize(ds);
  prep.data = std::move(ds);

  // pseudo-unseen validation classes, held out from episodes and the fit
  const int n_val = std::min<int>(cfg.val_class_count,
                                  std::max<int>(0, int(prep.data.seen_classes.size()) - 2));
  if (n_val > 0) {
    Rng rng(mix_seed(cfg.seed, 0x7a1));
    prep.val_classes = rng.sample_without_replacement(prep.data.seen_classes,
                                                      static_cast<std::size_t>(n_val));
    std::sort(prep.val_classes.begin(), prep.val_classes.end());
  }
  for (int c : prep.data.seen_classes)
    if (!std::binary_search(prep.val_classes.begin(), prep.val_classes.end(), c))
      prep.train_seen.push_back(c);

  prep.synth = fit_synthesizer(prep.data, cfg.ridge, prep.val_classes);
  prep.graph = crop(g, cfg.crop_threshold);
  for (int c : prep.data.class_ids) prep.graph.index_of(c);  // graph covers every class
  return prep;
}

namespace {

std::vector<int> pick_instances(const Dataset& ds, const std::string& split, int class_id,
                                int count, Rng& rng, bool allow_repeat) {
  std::vector<int> pool = ds.instances_of_class(split, class_id);
  if (pool.empty())
    throw EpisodeError("class " + std::to_string(class_id) + " has no instances in split '" +
                       split + "'");
  if (static_cast<int>(pool.size()) >= count && !allow_repeat)
    return rng.sample_without_replacement(pool, static_cast<std::size_t>(count));
  if (static_cast<int>(pool.size()) < count && !allow_repeat)
    throw EpisodeError("class " + std::to_string(class_id) + " has only " +
                       std::to_string(pool.size()) + " instances in split '" + split +
                       "', need " + std::to_string(count));
  std::vector<int> out;
  for (int i = 0; i < count; ++i) out.push_back(pool[rng.uniform_index(pool.size())]);
  return out;
}

}  // namespace

Episode build_episode(const Prepared& prep, const ExperimentConfig& cfg,
                      std::uint64_t seed, EpisodeRole role) {
  const Dataset& ds = prep.data;
  Rng rng(seed);

  const std::vector<int>& seen_pool = prep.train_seen;
  const std::vector<int>& unseen_pool =
      role == EpisodeRole::Train ? ds.unseen_classes : prep.val_classes;
  if (unseen_pool.empty())
    throw EpisodeError(role == EpisodeRole::Train
                           ? "dataset has no unseen classes"
                           : "validation requires val_class_count > 0");

  const int total_classes = static_cast<int>(seen_pool.size() + unseen_pool.size());
  if (cfg.n_way > total_classes)
    throw EpisodeError("n_way exceeds the available class count");
  int n_unseen = static_cast<int>(std::lround(
      double(cfg.n_way) * double(unseen_pool.size()) / double(total_classes)));
  n_unseen = std::max(1, std::min({n_unseen, cfg.n_way - 1, int(unseen_pool.size())}));
  const int n_seen = cfg.n_way - n_unseen;
  if (n_seen > static_cast<int>(seen_pool.size()))
    throw EpisodeError("not enough seen classes for the episode");

  Episode ep;
  ep.seed = seed;
  auto seen_cs = rng.sample_without_replacement(seen_pool, static_cast<std::size_t>(n_seen));
  auto unseen_cs =
      rng.sample_without_replacement(unseen_pool, static_cast<std::size_t>(n_unseen));
  ep.classes = seen_cs;
  ep.classes.insert(ep.classes.end(), unseen_cs.begin(), unseen_cs.end());

  const int k = cfg.k_shot;
  const Eigen::Index d = ds.feature_dim();
  std::vector<Eigen::RowVectorXd> rows;
  auto push_node = [&](const Eigen::RowVectorXd& x, int class_id, int label, bool is_support,
                       bool is_unseen) {
    rows.push_back(x);
    ep.node_class_ids.push_back(class_id);
    ep.node_labels.push_back(label);
    ep.labeled.push_back(is_support);
    ep.unseen_node.push_back(is_unseen);
  };

  // support rows, class-major
  std::vector<std::vector<int>> support_used(ep.classes.size());
  for (std::size_t ci = 0; ci < ep.classes.size(); ++ci) {
    const int c = ep.classes[ci];
    const bool is_unseen = ci >= static_cast<std::size_t>(n_seen);
    if (!is_unseen) {
      auto chosen = pick_instances(ds, "train", c, k, rng, false);
      support_used[ci] = chosen;
      for (int idx : chosen)
        push_node(ds.features.row(idx), c, static_cast<int>(ci), true, false);
    } else if (role == EpisodeRole::Train && cfg.mode == TaskMode::Fsl) {
      // the provided few-shot instances, reused when K exceeds them
      auto chosen = pick_instances(ds, "train", c, k, rng, true);
      support_used[ci] = chosen;
      for (int idx : chosen)
        push_node(ds.features.row(idx), c, static_cast<int>(ci), true, true);
    } else if (role == EpisodeRole::Validation && cfg.mode == TaskMode::Fsl) {
      auto chosen = pick_instances(ds, "val", c, std::min<int>(k, cfg.fsl_support), rng, false);
      for (int i = 0; i < k; ++i)
        push_node(ds.features.row(chosen[static_cast<std::size_t>(i) % chosen.size()]), c,
                  static_cast<int>(ci), true, true);
    } else {
      const int count = role == EpisodeRole::Train ? cfg.dummy_count() : k;
      Matrix dummies = prep.synth.sample(c, count, rng.raw());
      for (Eigen::Index i = 0; i < dummies.rows(); ++i)
        push_node(dummies.row(i), c, static_cast<int>(ci), true, true);
    }
  }

  // query rows
  for (int t = 0; t < cfg.t_query; ++t) {
    const std::size_t ci = rng.uniform_index(ep.classes.size());
    const int c = ep.classes[ci];
    const bool is_unseen = ci >= static_cast<std::size_t>(n_seen);
    ep.query_rows.push_back(static_cast<int>(rows.size()));
    if (role == EpisodeRole::Validation) {
      auto pool = ds.instances_of_class("val", c);
      if (pool.empty()) throw EpisodeError("validation split lacks class " + std::to_string(c));
      push_node(ds.features.row(pool[rng.uniform_index(pool.size())]), c,
                static_cast<int>(ci), false, is_unseen);
    } else if (!is_unseen) {
      auto pool = ds.instances_of_class("train", c);
      std::vector<int> fresh;
      for (int idx : pool)
        if (std::find(support_used[ci].begin(), support_used[ci].end(), idx) ==
            support_used[ci].end())
          fresh.push_back(idx);
      const auto& source = fresh.empty() ? pool : fresh;
      push_node(ds.features.row(source[rng.uniform_index(source.size())]), c,
                static_cast<int>(ci), false, false);
    } else if (cfg.mode == TaskMode::Fsl) {
      // the provided instances are the only unseen-class data: reuse one
      const auto& sup = support_used[ci];
      const int idx = sup[rng.uniform_index(sup.size())];
      push_node(ds.features.row(idx), c, static_cast<int>(ci), false, true);
    } else {
      push_node(prep.synth.sample(c, 1, rng.raw()).row(0), c, static_cast<int>(ci), false,
                true);
    }
  }

  ep.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    ep.features.row(static_cast<Eigen::Index>(i)) = rows[i];
  return ep;
}

// ---------------------------------------------------------------------------
// Forward pass and losses
// ---------------------------------------------------------------------------

EpisodeOutput run_episode(TggModel& model, const Episode& episode,
                          const PrototypeGraph& g, BatchNormMode mode,
                          bool want_losses) {
  const ExperimentConfig& cfg = model.cfg;
  EpisodeOutput out;

  Tensor features = Tensor::constant(episode.features);
  Tensor h = features;
  if (model.agg) {
    auto candidates = build_initial_instance_graph(episode.features,
                                                   episode.node_class_ids, g, cfg.k_nn);
    auto nb = sample_neighbors(candidates, episode.node_class_ids, cfg.sample_sizes,
                               mix_seed(episode.seed, 0x5a11), true);
    h = aggnet_forward(*model.agg, features, nb, g, mode);
  }
  auto [refined, adjacency] = model.kernel.forward(h);

  LabelMatrix labels = episode.label_matrix();
  out.y_star = propagate_closed_form(adjacency, labels.labeled_only(), cfg.mu);
  out.probabilities = predict(out.y_star.value(), episode.query_rows, cfg.temperature);

  long correct = 0;
  for (std::size_t q = 0; q < episode.query_rows.size(); ++q) {
    Eigen::Index argmax;
    out.probabilities.row(static_cast<Eigen::Index>(q)).maxCoeff(&argmax);
    if (static_cast<int>(argmax) ==
        episode.node_labels[static_cast<std::size_t>(episode.query_rows[q])])
      ++correct;
  }
  out.query_accuracy = episode.query_rows.empty()
                           ? 0.0
                           : double(correct) / double(episode.query_rows.size());

  if (want_losses) {
    std::vector<double> weights(static_cast<std::size_t>(episode.size()), 1.0);
    out.loss_c = softmax_cross_entropy(scale(out.y_star, cfg.temperature),
                                       episode.node_labels, weights);
    out.loss_d = cfg.ablation.dual_loss && cfg.lambda_dual > 0.0
                     ? dual_propagation_loss(adjacency, labels, episode.unseen_node, cfg.mu)
                     : Tensor::scalar(0.0);
    out.loss_k = cfg.ablation.kernel_loss && cfg.lambda_kernel > 0.0
                     ? kernel_loss(adjacency, lift_prototype_subgraph(g, episode.node_class_ids),
                                   class_onehots(episode.node_class_ids, episode.classes),
                                   cfg.wl_iterations)
                     : Tensor::scalar(0.0);
    out.total = add(add(out.loss_c, scale(out.loss_d, cfg.lambda_dual)),
                    scale(out.loss_k, cfg.lambda_kernel));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double validation_accuracy(TggModel& model, const Prepared& prep,
                           const ExperimentConfig& cfg) {
  long correct = 0, total = 0;
  for (int i = 0; i < cfg.val_episodes; ++i) {
    Episode ep = build_episode(prep, cfg, mix_seed(cfg.seed, 0xa1000000 + i),
                               EpisodeRole::Validation);
    EpisodeOutput out = run_episode(model, ep, prep.graph, BatchNormMode::Eval, false);
    for (std::size_t q = 0; q < ep.query_rows.size(); ++q) {
      const int row = ep.query_rows[q];
      if (!ep.unseen_node[static_cast<std::size_t>(row)]) continue;  // transfer signal only
      Eigen::Index argmax;
      out.probabilities.row(static_cast<Eigen::Index>(q)).maxCoeff(&argmax);
      ++total;
      if (static_cast<int>(argmax) == ep.node_labels[static_cast<std::size_t>(row)]) ++correct;
    }
  }
  return total == 0 ? 0.0 : double(correct) / double(total);
}

}  // namespace

TrainResult train(const Dataset& ds, const PrototypeGraph& g, const ExperimentConfig& cfg) {
  TrainResult result;
  result.prep = prepare(ds, g, cfg);
  result.model = build_model(cfg, result.prep.data.feature_dim());
  TggModel& model = result.model;

  AdamOptimizer opt({.learning_rate = cfg.learning_rate,
                     .weight_decay = cfg.weight_decay});
  auto params = model.param_list();

  std::ostringstream log;
  log << "episode,loss_c,loss_d,loss_k,total,train_acc,val_acc\n";

  const bool with_val = cfg.val_class_count > 0 && !result.prep.val_classes.empty();
  double best_val = -1.0;
  TggModel::Snapshot best_snapshot;
  int last_improvement = 0;
  int episode_index = 0;

  for (; episode_index < cfg.episodes; ++episode_index) {
    std::string val_field;
    if (with_val && episode_index % cfg.val_every == 0) {
      const double val_acc = validation_accuracy(model, result.prep, cfg);
      val_field = fmt17(val_acc);
      if (val_acc > best_val) {
        best_val = val_acc;
        best_snapshot = model.snapshot();
        last_improvement = episode_index;
      } else if (episode_index - last_improvement >= cfg.patience) {
        break;  // early stop
      }
    }

    Episode ep = build_episode(result.prep, cfg, mix_seed(cfg.seed, 0xe9000000 + episode_index),
                               EpisodeRole::Train);
    EpisodeOutput out = run_episode(model, ep, result.prep.graph, BatchNormMode::Train, true);
    const double total = out.total.item();
    if (!std::isfinite(total))
      throw Error("training diverged (non-finite loss) at episode " +
                  std::to_string(episode_index) + ", episode seed " + std::to_string(ep.seed));

    zero_grads(params);
    out.total.backward();
    opt.step(params);

    log << episode_index << "," << fmt17(out.loss_c.item()) << ","
        << fmt17(out.loss_d.item()) << "," << fmt17(out.loss_k.item()) << ","
        << fmt17(total) << "," << fmt17(out.query_accuracy) << "," << val_field << "\n";
  }

  if (with_val) {
    const double val_acc = validation_accuracy(model, result.prep, cfg);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_snapshot = model.snapshot();
    }
    model.restore(best_snapshot);
    result.best_val = best_val;
  }
  result.episodes_run = episode_index;
  result.log_csv = log.str();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

double harmonic_mean(double acc_seen, double acc_unseen) {
  const double denom = acc_seen + acc_unseen;
  return denom == 0.0 ? 0.0 : 2.0 * acc_seen * acc_unseen / denom;
}

namespace {

// Builds one evaluation episode over a fixed label space with the given
// query rows, mirroring the training episode layout.
Episode build_eval_episode(const Prepared& prep, const ExperimentConfig& cfg,
                           TaskMode mode, const std::vector<int>& label_space,
                           const std::vector<int>& query_rows, Rng& rng) {
  const Dataset& ds = prep.data;
  Episode ep;
  ep.seed = rng.raw();
  ep.classes = label_space;
  const Eigen::Index d = ds.feature_dim();
  std::vector<Eigen::RowVectorXd> rows;
  auto push_node = [&](const Eigen::RowVectorXd& x, int class_id, int label,
                       bool is_support, bool is_unseen) {
    rows.push_back(x);
    ep.node_class_ids.push_back(class_id);
    ep.node_labels.push_back(label);
    ep.labeled.push_back(is_support);
    ep.unseen_node.push_back(is_unseen);
  };

  Rng support_rng(mix_seed(ep.seed, 0x5e));
  for (std::size_t ci = 0; ci < label_space.size(); ++ci) {
    const int c = label_space[ci];
    const bool is_unseen = ds.is_unseen(c);
    if (!is_unseen) {
      auto chosen = pick_instances(ds, "train", c, cfg.k_shot, support_rng, false);
      for (int idx : chosen)
        push_node(ds.features.row(idx), c, static_cast<int>(ci), true, false);
    } else if (mode == TaskMode::Fsl) {
      auto pool = ds.instances_of_class("train", c);  // the provided support instances
      if (pool.empty())
        throw EpisodeError("fsl evaluation: class " + std::to_string(c) +
                           " has no support instances in the train split");
      for (int i = 0; i < cfg.k_shot; ++i)
        push_node(ds.features.row(pool[static_cast<std::size_t>(i) % pool.size()]), c,
                  static_cast<int>(ci), true, true);
    } else {
      Matrix dummies = prep.synth.sample(c, cfg.dummy_count(), support_rng.raw());
      for (Eigen::Index i = 0; i < dummies.rows(); ++i)
        push_node(dummies.row(i), c, static_cast<int>(ci), true, true);
    }
  }
  for (int idx : query_rows) {
    const int c = ds.labels[static_cast<std::size_t>(idx)];
    auto it = std::find(label_space.begin(), label_space.end(), c);
    if (it == label_space.end())
      throw EpisodeError("query instance class outside the evaluation label space");
    ep.query_rows.push_back(static_cast<int>(rows.size()));
    push_node(ds.features.row(idx), c, static_cast<int>(it - label_space.begin()), false,
              ds.is_unseen(c));
  }

  ep.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    ep.features.row(static_cast<Eigen::Index>(i)) = rows[i];
  return ep;
}

struct TrialCounts {
  long correct_seen = 0, total_seen = 0;
  long correct_unseen = 0, total_unseen = 0;
};

TrialCounts run_trial(TggModel& model, const Prepared& prep, TaskMode mode,
                      const std::vector<int>& label_space, std::vector<int> queries,
                      Rng& rng) {
  const ExperimentConfig& cfg = model.cfg;
  const Dataset& ds = prep.data;
  rng.shuffle(queries);
  TrialCounts counts;
  for (std::size_t start = 0; start < queries.size();
       start += static_cast<std::size_t>(cfg.eval_batch)) {
    const std::size_t stop =
        std::min(queries.size(), start + static_cast<std::size_t>(cfg.eval_batch));
    std::vector<int> chunk(queries.begin() + static_cast<long>(start),
                           queries.begin() + static_cast<long>(stop));
    Episode ep = build_eval_episode(prep, cfg, mode, label_space, chunk, rng);
    EpisodeOutput out = run_episode(model, ep, prep.graph, BatchNormMode::Eval, false);
    for (std::size_t q = 0; q < chunk.size(); ++q) {
      Eigen::Index argmax;
      out.probabilities.row(static_cast<Eigen::Index>(q)).maxCoeff(&argmax);
      const int truth =
          ep.node_labels[static_cast<std::size_t>(ep.query_rows[q])];
      const bool unseen = ds.is_unseen(ds.labels[static_cast<std::size_t>(chunk[q])]);
      if (unseen) {
        ++counts.total_unseen;
        if (static_cast<int>(argmax) == truth) ++counts.correct_unseen;
      } else {
        ++counts.total_seen;
        if (static_cast<int>(argmax) == truth) ++counts.correct_seen;
      }
    }
  }
  return counts;
}

}  // namespace

Metrics evaluate(TggModel& model, const Prepared& prep, TaskMode mode) {
  const ExperimentConfig& cfg = model.cfg;
  const Dataset& ds = prep.data;
  Metrics metrics;
  metrics.mode = mode;

  std::vector<int> label_space;
  std::vector<int> queries;
  if (mode == TaskMode::Gzsl) {
    label_space = ds.seen_classes;
    label_space.insert(label_space.end(), ds.unseen_classes.begin(),
                       ds.unseen_classes.end());
    queries = ds.splits.test_seen;
    queries.insert(queries.end(), ds.splits.test_unseen.begin(),
                   ds.splits.test_unseen.end());
  } else {
    label_space = ds.unseen_classes;
    queries = ds.splits.test_unseen;
  }
  if (queries.empty()) throw EpisodeError("evaluation: no test instances available");

  double acc_sum = 0, seen_sum = 0, unseen_sum = 0, hm_sum = 0;
  for (int trial = 0; trial < cfg.eval_trials; ++trial) {
    Rng rng(mix_seed(cfg.seed, 0xe7a10000 + trial));
    TrialCounts counts = run_trial(model, prep, mode, label_space, queries, rng);
    if (mode == TaskMode::Gzsl) {
      const double acc_s =
          counts.total_seen ? double(counts.correct_seen) / double(counts.total_seen) : 0.0;
      const double acc_u = counts.total_unseen
                               ? double(counts.correct_unseen) / double(counts.total_unseen)
                               : 0.0;
      seen_sum += acc_s;
      unseen_sum += acc_u;
      const double hm = harmonic_mean(acc_s, acc_u);
      hm_sum += hm;
      metrics.per_trial.push_back(hm);
    } else {
      const double acc = counts.total_unseen
                             ? double(counts.correct_unseen) / double(counts.total_unseen)
                             : 0.0;
      acc_sum += acc;
      metrics.per_trial.push_back(acc);
    }
  }
  const double n = double(cfg.eval_trials);
  if (mode == TaskMode::Gzsl) {
    metrics.acc_seen = seen_sum / n;
    metrics.acc_unseen = unseen_sum / n;
    metrics.hm = hm_sum / n;
  } else {
    metrics.accuracy = acc_sum / n;
  }
  return metrics;
}

std::string Metrics::to_json_text() const {
  nlohmann::json doc;
  doc["mode"] = to_string(mode);
  if (mode == TaskMode::Gzsl) {
    doc["acc_seen"] = acc_seen;
    doc["acc_unseen"] = acc_unseen;
    doc["harmonic_mean"] = hm;
  } else {
    doc["top1_accuracy"] = accuracy;
  }
  doc["per_trial"] = per_trial;
  return doc.dump(2);
}

std::vector<SweepRow> sensitivity_sweep(const Dataset& ds, const PrototypeGraph& g,
                                        const ExperimentConfig& cfg,
                                        std::vector<double> thresholds) {
  for (double t : thresholds)
    if (t < 0.0 || t > 1.0)
      throw ConfigError("sweep thresholds must lie in [0,1]");
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<SweepRow> rows;
  for (double t : thresholds) {
    ExperimentConfig sweep_cfg = cfg;
    sweep_cfg.crop_threshold = t;
    TrainResult result = train(ds, g, sweep_cfg);
    Metrics m = evaluate(result.model, result.prep, TaskMode::Zsl);
    rows.push_back({t, m.accuracy});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "threshold,accuracy\n";
  for (const auto& row : rows) os << fmt17(row.threshold) << "," << fmt17(row.accuracy) << "\n";
  return os.str();
}

}  // namespace tgg
