#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "recomb/corpus.hpp"
#include "recomb/neural.hpp"
#include "recomb/scfg.hpp"

namespace recomb {

struct TrainConfig {
  int epochs = 30;
  double initial_lr = 0.1;
  int halve_every = 5;
  int halve_start_epoch = 15;
  std::optional<std::size_t> recombinant_per_epoch;  // defaults to |D|
  std::uint64_t seed = 1;
  double grad_clip = 5.0;  // global L2 norm; <= 0 disables clipping

  void validate() const;
};

/// Learning rate for 1-based epoch t: constant until halve_start_epoch, then
/// halved at the start of every halve_every epochs (epochs 16, 21, 26 under
/// the defaults).
double learning_rate(int epoch, const TrainConfig& config);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double mean_train_loglik = 0.0;
  double seconds = 0.0;
  std::size_t examples = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draws the initial parameters from the "init" substream of `seed`.
void initialize_model(Seq2SeqModel& model, std::uint64_t seed);

using EpochCallback = std::function<void(const EpochMetrics&, const Seq2SeqModel&)>;

/// SGD ascent on log p(y | x). Each epoch trains on D plus
/// recombinant_per_epoch fresh samples from `grammar` (when given), shuffled.
std::vector<EpochMetrics> train(const Dataset& dataset, const Grammar* grammar, Seq2SeqModel& model,
                                const TrainConfig& config, const EpochCallback& on_epoch = {});

/// One SGD step on a single instance; returns the log-likelihood before the
/// update. `grad` is scratch space shaped like the model.
double sgd_step(Seq2SeqModel& model, const Instance& instance, double lr, double grad_clip, ModelParams& grad);

std::string format_metrics_csv(const std::vector<EpochMetrics>& metrics, bool include_timing = true);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics,
                       bool include_timing = true);

}  // namespace recomb
