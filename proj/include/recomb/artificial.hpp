#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "recomb/corpus.hpp"
#include "recomb/decoding.hpp"
#include "recomb/domain_config.hpp"
#include "recomb/neural.hpp"
#include "recomb/random.hpp"
#include "recomb/training.hpp"

namespace recomb {

/// Entities `ent:NN` and binary relations `rel:NN`. Every relation maps each
/// entity to at least one successor.
struct World {
  std::vector<std::string> entities;
  std::map<std::string, std::map<std::string, std::set<std::string>>> relations;

  bool operator==(const World&) const = default;
  std::vector<std::string> relation_names() const;
  const std::set<std::string>& image(const std::string& relation, const std::string& entity) const;
};

/// Zero-padded name, at least two digits and wide enough for `count` items.
std::string artificial_name(std::string_view kind, std::size_t index, std::size_t count);

World generate_world(int num_entities, int num_relations, Rng& rng);

std::string serialize_world(const World& world);
World parse_world(std::string_view json_text);
World load_world(const std::filesystem::path& path);
void write_world(const std::filesystem::path& path, const World& world);

/// `rel:a of rel:b of ent:c` paired with `( _rel:a ( _rel:b <prefix>ent:c ) )`.
Example make_artificial_example(const std::vector<std::string>& relations, const std::string& entity,
                                std::string_view entity_prefix = "_");

/// Depth of a well-formed artificial utterance (number of relations), or -1.
int artificial_depth(const Tokens& utterance);

/// `count` distinct depth-n examples, relations and entity drawn uniformly.
std::vector<Example> generate_examples(const World& world, int depth, std::size_t count, Rng& rng,
                                       std::string_view entity_prefix = "_");

/// Denotation of a nested relation application. Throws ExecutionError on an
/// unknown symbol or malformed nesting.
Denotation execute(const World& world, const Tokens& logical_form);

Executor world_executor(const World& world);

/// Entity type Ent (tokens `<prefix>ent:NN`, set type Set) and phrase type Set
/// covering whole nested applications.
DomainConfig artificial_domain_config(std::string_view entity_prefix = "_");

inline constexpr const char* kSameIndependent = "same-length-independent";
inline constexpr const char* kLongerIndependent = "longer-independent";
inline constexpr const char* kSameRecombinant = "same-length-recombinant";
inline constexpr const char* kLongerRecombinant = "longer-recombinant";

struct ExperimentConfig {
  int num_entities = 20;
  int num_relations = 40;
  std::size_t seed_size = 100;
  std::size_t test_size = 500;
  int base_depth = 2;
  int longer_depth = 4;
  std::vector<std::size_t> counts{0, 50, 100, 200, 300, 400, 500};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::string> conditions{kSameIndependent, kLongerIndependent, kSameRecombinant, kLongerRecombinant};
  std::string entity_prefix = "_";
  bool copy_enabled = true;
  ModelDims dims{};
  TrainConfig train{};
  int beam_size = 5;

  void validate() const;
};

/// Hidden 50, embedding 25.
ExperimentConfig reduced_experiment_config();

struct ExperimentRow {
  std::string condition;
  std::size_t added = 0;
  std::uint64_t seed = 0;
  double exact_acc = 0.0;
  double denotation_acc = 0.0;
};

/// Training material for one seed, shared by all conditions.
struct SeedData {
  World world;
  std::vector<Example> seed;
  std::vector<Example> test;
  std::vector<Example> same_pool;    // held-out depth-2 examples
  std::vector<Example> longer_pool;  // depth-4 examples
};

SeedData make_seed_data(const ExperimentConfig& config, std::uint64_t seed);

/// Recombinant examples of the requested depth drawn from the grammar induced
/// on the seed set; duplicates and seed examples are rejected.
std::vector<Example> recombinant_examples(const std::vector<Example>& seed, const DomainConfig& domain, bool longer,
                                          int depth, std::size_t count, Rng& rng);

/// Added examples for one condition (the first `count` of a fixed per-seed
/// sequence, so larger counts extend smaller ones).
std::vector<Example> condition_examples(const SeedData& data, const ExperimentConfig& config,
                                        const std::string& condition, std::size_t count, std::uint64_t seed);

struct RunResult {
  double exact_acc = 0.0;
  double denotation_acc = 0.0;
};

/// Trains on seed + added (added examples fixed across epochs) and evaluates
/// on the test set.
RunResult train_and_evaluate(const SeedData& data, const std::vector<Example>& added, const ExperimentConfig& config,
                             std::uint64_t seed);

using ExperimentProgress = std::function<void(const ExperimentRow&)>;

/// Count 0 is trained once per seed and reported under every condition.
std::vector<ExperimentRow> run_longer_examples_experiment(const ExperimentConfig& config,
                                                          const ExperimentProgress& progress = {});

std::string format_experiment_csv(const std::vector<ExperimentRow>& rows);
/// Mean over seeds per (condition, added), in first-appearance order.
std::string format_experiment_summary(const std::vector<ExperimentRow>& rows);

}  // namespace recomb
