#include "recomb/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace recomb {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(initial_lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (halve_every < 1) throw std::invalid_argument("halve_every must be >= 1");
  if (halve_start_epoch < 0) throw std::invalid_argument("halve_start_epoch must be >= 0");
}

double learning_rate(int epoch, const TrainConfig& config) {
  if (epoch < 1 || epoch > config.epochs) throw std::invalid_argument("epoch out of range");
  int halvings = 0;
  if (epoch > config.halve_start_epoch) halvings = (epoch - config.halve_start_epoch - 1) / config.halve_every + 1;
  return std::ldexp(config.initial_lr, -halvings);
}

void initialize_model(Seq2SeqModel& model, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "init");
  init_uniform(model.params, rng, 0.1);
}

double sgd_step(Seq2SeqModel& model, const Instance& instance, double lr, double grad_clip, ModelParams& grad) {
  grad.set_zero();
  const double ll = sequence_log_likelihood(model.params, instance, &grad);
  if (!std::isfinite(ll)) throw TrainingError("non-finite log-likelihood");
  double scale = lr;
  if (grad_clip > 0.0) {
    const double norm = std::sqrt(grad.squared_norm());
    if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
    if (norm > grad_clip) scale *= grad_clip / norm;
  }
  model.params.axpy(scale, grad);
  return ll;
}

std::vector<EpochMetrics> train(const Dataset& dataset, const Grammar* grammar, Seq2SeqModel& model,
                                const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");

  std::vector<Instance> base;
  base.reserve(dataset.size());
  for (const auto& ex : dataset.examples) base.push_back(model.make_instance(ex));

  const std::size_t extra = grammar ? config.recombinant_per_epoch.value_or(dataset.size()) : 0;
  std::optional<Sampler> sampler;
  if (grammar) sampler.emplace(*grammar);
  Rng sample_rng = Rng::substream(config.seed, "grammar-sampling");
  Rng shuffle_rng = Rng::substream(config.seed, "shuffle");

  ModelParams grad = model.params.zeros_like();
  std::vector<EpochMetrics> history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = learning_rate(epoch, config);

    std::vector<Instance> recombinant;
    recombinant.reserve(extra);
    for (std::size_t i = 0; i < extra; ++i) recombinant.push_back(model.make_instance(sampler->sample(sample_rng)));

    std::vector<std::size_t> order(base.size() + recombinant.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double total = 0.0;
    for (std::size_t idx : order) {
      const Instance& inst = idx < base.size() ? base[idx] : recombinant[idx - base.size()];
      try {
        total += sgd_step(model, inst, lr, config.grad_clip, grad);
      } catch (const TrainingError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what() + " on example '" +
                            join_tokens(inst.input_surface) + "'");
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = lr;
    m.examples = order.size();
    m.mean_train_loglik = total / static_cast<double>(order.size());
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(m);
    if (on_epoch) on_epoch(m, model);
  }
  return history;
}

std::string format_metrics_csv(const std::vector<EpochMetrics>& metrics, bool include_timing) {
  std::string out = "epoch,lr,mean_train_loglik,seconds\n";
  char buf[128];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.3f\n", m.epoch, m.lr, m.mean_train_loglik,
                  include_timing ? m.seconds : 0.0);
    out += buf;
  }
  return out;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics,
                       bool include_timing) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_metrics_csv(metrics, include_timing);
}

}  // namespace recomb
