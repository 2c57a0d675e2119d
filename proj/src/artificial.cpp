#include "recomb/artificial.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>
#include <unordered_set>

#include <json.hpp>

#include "recomb/scfg.hpp"

namespace recomb {

using nlohmann::json;

std::vector<std::string> World::relation_names() const {
  std::vector<std::string> out;
  out.reserve(relations.size());
  for (const auto& [name, _] : relations) out.push_back(name);
  return out;
}

const std::set<std::string>& World::image(const std::string& relation, const std::string& entity) const {
  static const std::set<std::string> empty;
  auto r = relations.find(relation);
  if (r == relations.end()) return empty;
  auto e = r->second.find(entity);
  return e == r->second.end() ? empty : e->second;
}

std::string artificial_name(std::string_view kind, std::size_t index, std::size_t count) {
  std::size_t width = 2;
  for (std::size_t n = count > 0 ? count - 1 : 0; n >= 100; n /= 10) ++width;
  std::string digits = std::to_string(index);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return std::string(kind) + ":" + digits;
}

World generate_world(int num_entities, int num_relations, Rng& rng) {
  if (num_entities < 1 || num_relations < 1) throw std::invalid_argument("world needs at least one entity and relation");
  World w;
  const auto ne = static_cast<std::size_t>(num_entities);
  const auto nr = static_cast<std::size_t>(num_relations);
  for (std::size_t i = 0; i < ne; ++i) w.entities.push_back(artificial_name("ent", i, ne));
  for (std::size_t r = 0; r < nr; ++r) {
    auto& rel = w.relations[artificial_name("rel", r, nr)];
    // One or two successors per entity keeps every relation left-total.
    for (const auto& e : w.entities) {
      auto& succ = rel[e];
      succ.insert(w.entities[rng.uniform_index(ne)]);
      if (ne > 1 && rng.uniform01() < 0.5) succ.insert(w.entities[rng.uniform_index(ne)]);
    }
  }
  return w;
}

std::string serialize_world(const World& world) {
  json j;
  j["entities"] = world.entities;
  json rels = json::object();
  for (const auto& [name, rel] : world.relations) {
    json pairs = json::array();
    for (const auto& [from, tos] : rel)
      for (const auto& to : tos) pairs.push_back({from, to});
    rels[name] = pairs;
  }
  j["relations"] = rels;
  return j.dump(1) + "\n";
}

World parse_world(std::string_view json_text) {
  World w;
  try {
    json j = json::parse(json_text);
    w.entities = j.at("entities").get<std::vector<std::string>>();
    std::set<std::string> known(w.entities.begin(), w.entities.end());
    if (known.size() != w.entities.size()) throw ParseError("world: duplicate entity");
    if (w.entities.empty()) throw ParseError("world: no entities");
    for (const auto& [name, pairs] : j.at("relations").items()) {
      if (known.count(name)) throw ParseError("world: relation name '" + name + "' is also an entity");
      auto& rel = w.relations[name];
      for (const auto& p : pairs) {
        auto from = p.at(0).get<std::string>();
        auto to = p.at(1).get<std::string>();
        if (!known.count(from) || !known.count(to)) throw ParseError("world: relation " + name + " uses unknown entity");
        rel[from].insert(to);
      }
      if (rel.empty()) throw ParseError("world: relation " + name + " is empty");
    }
    if (w.relations.empty()) throw ParseError("world: no relations");
  } catch (const json::exception& e) {
    throw ParseError(std::string("world: ") + e.what());
  }
  return w;
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open world " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_world(buf.str());
}

void write_world(const std::filesystem::path& path, const World& world) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_world(world);
}

Example make_artificial_example(const std::vector<std::string>& relations, const std::string& entity,
                                std::string_view entity_prefix) {
  Example ex;
  for (const auto& r : relations) {
    ex.utterance.push_back(r);
    ex.utterance.push_back("of");
    ex.logical_form.push_back("(");
    ex.logical_form.push_back("_" + r);
  }
  ex.utterance.push_back(entity);
  ex.logical_form.push_back(std::string(entity_prefix) + entity);
  ex.logical_form.insert(ex.logical_form.end(), relations.size(), ")");
  return ex;
}

int artificial_depth(const Tokens& utterance) {
  if (utterance.empty() || utterance.size() % 2 == 0) return -1;
  for (std::size_t i = 0; i + 1 < utterance.size(); i += 2) {
    if (!utterance[i].starts_with("rel:") || utterance[i + 1] != "of") return -1;
  }
  if (!utterance.back().starts_with("ent:")) return -1;
  return static_cast<int>(utterance.size() / 2);
}

std::vector<Example> generate_examples(const World& world, int depth, std::size_t count, Rng& rng,
                                       std::string_view entity_prefix) {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (count < 1) throw std::invalid_argument("count must be >= 1");
  const auto rels = world.relation_names();
  const std::uint64_t nr = rels.size();
  const std::uint64_t ne = world.entities.size();

  // Number of distinct combinations, saturating well above any feasible count.
  constexpr std::uint64_t kCap = std::uint64_t{1} << 62;
  std::uint64_t total = ne;
  for (int i = 0; i < depth && total < kCap; ++i) total = total > kCap / nr ? kCap : total * nr;
  if (count > total)
    throw std::invalid_argument("cannot draw " + std::to_string(count) + " distinct depth-" + std::to_string(depth) +
                                " examples; only " + std::to_string(total) + " exist");

  auto decode = [&](std::uint64_t code) {
    std::vector<std::string> chosen(static_cast<std::size_t>(depth));
    for (int i = 0; i < depth; ++i) {
      chosen[static_cast<std::size_t>(i)] = rels[code % nr];
      code /= nr;
    }
    return make_artificial_example(chosen, world.entities[code % ne], entity_prefix);
  };

  std::vector<Example> out;
  out.reserve(count);
  if (total <= 4 * count) {
    // Dense case: partial Fisher-Yates over all combination codes.
    std::vector<std::uint64_t> codes(total);
    for (std::uint64_t i = 0; i < total; ++i) codes[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + rng.uniform_index(total - i);
      std::swap(codes[i], codes[j]);
      out.push_back(decode(codes[i]));
    }
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  while (out.size() < count) {
    std::uint64_t code = 0;
    std::uint64_t scale = 1;
    // Draw relations then the entity independently so each is uniform.
    for (int i = 0; i < depth; ++i) {
      code += rng.uniform_index(nr) * scale;
      scale *= nr;
    }
    code += rng.uniform_index(ne) * scale;
    if (seen.insert(code).second) out.push_back(decode(code));
  }
  return out;
}

namespace {

std::string strip_underscore(const std::string& tok) { return tok.starts_with("_") ? tok.substr(1) : tok; }

Denotation eval_at(const World& world, const Tokens& lf, std::size_t& pos) {
  if (pos >= lf.size()) throw ExecutionError("unexpected end of logical form");
  if (lf[pos] == "(") {
    ++pos;
    if (pos >= lf.size()) throw ExecutionError("unexpected end of logical form");
    const std::string rel = strip_underscore(lf[pos]);
    auto r = world.relations.find(rel);
    if (r == world.relations.end()) throw ExecutionError("unknown relation '" + lf[pos] + "'");
    ++pos;
    Denotation arg = eval_at(world, lf, pos);
    if (pos >= lf.size() || lf[pos] != ")") throw ExecutionError("expected ')'");
    ++pos;
    Denotation out;
    for (const auto& e : arg) {
      auto it = r->second.find(e);
      if (it != r->second.end()) out.insert(it->second.begin(), it->second.end());
    }
    return out;
  }
  const std::string ent = strip_underscore(lf[pos]);
  if (std::find(world.entities.begin(), world.entities.end(), ent) == world.entities.end())
    throw ExecutionError("unknown entity '" + lf[pos] + "'");
  ++pos;
  return Denotation{ent};
}

}  // namespace

Denotation execute(const World& world, const Tokens& logical_form) {
  std::size_t pos = 0;
  Denotation out = eval_at(world, logical_form, pos);
  if (pos != logical_form.size()) throw ExecutionError("trailing tokens after logical form");
  return out;
}

Executor world_executor(const World& world) {
  return [&world](const Tokens& lf) { return execute(world, lf); };
}

DomainConfig artificial_domain_config(std::string_view entity_prefix) {
  const std::string pattern = std::string(entity_prefix) + "$";
  json j{{"version", kDomainConfigVersion},
         {"entity_types",
          {{{"category", "Ent"},
            {"pattern", pattern},
            {"value_filter", "ent:[0-9]+"},
            {"set_category", "Set"},
            {"set_pattern", pattern}}}},
         {"phrase_types", {{{"category", "Set"}, {"prefix", ""}, {"suffix", ""}, {"head", "("}}}},
         {"copy", {{"forbid_prefix", "_"}, {"allow", "ent:[0-9]+"}}}};
  return parse_domain_config(j.dump());
}

void ExperimentConfig::validate() const {
  if (num_entities < 1 || num_relations < 1) throw std::invalid_argument("world sizes must be >= 1");
  if (seed_size < 1 || test_size < 1) throw std::invalid_argument("seed and test sizes must be >= 1");
  if (base_depth < 1 || longer_depth < 1) throw std::invalid_argument("depths must be >= 1");
  if (counts.empty()) throw std::invalid_argument("no addition counts");
  if (seeds.empty()) throw std::invalid_argument("no seeds");
  if (beam_size < 1) throw std::invalid_argument("beam size must be >= 1");
  for (const auto& c : conditions)
    if (c != kSameIndependent && c != kLongerIndependent && c != kSameRecombinant && c != kLongerRecombinant)
      throw std::invalid_argument("unknown condition '" + c + "'");
  if (conditions.empty()) throw std::invalid_argument("no conditions");
  train.validate();
}

ExperimentConfig reduced_experiment_config() {
  ExperimentConfig c;
  c.dims = ModelDims{25, 50};
  return c;
}

SeedData make_seed_data(const ExperimentConfig& config, std::uint64_t seed) {
  SeedData d;
  Rng world_rng = Rng::substream(seed, "world-gen");
  d.world = generate_world(config.num_entities, config.num_relations, world_rng);
  const std::size_t pool = *std::max_element(config.counts.begin(), config.counts.end());

  Rng data_rng = Rng::substream(seed, "data");
  auto drawn = generate_examples(d.world, config.base_depth, config.seed_size + config.test_size + std::max<std::size_t>(pool, 1),
                                 data_rng, config.entity_prefix);
  auto at = [&](std::size_t i) { return drawn.begin() + static_cast<std::ptrdiff_t>(i); };
  d.seed.assign(at(0), at(config.seed_size));
  d.test.assign(at(config.seed_size), at(config.seed_size + config.test_size));
  d.same_pool.assign(at(config.seed_size + config.test_size), drawn.end());

  Rng long_rng = Rng::substream(seed, "data-long");
  d.longer_pool = generate_examples(d.world, config.longer_depth, std::max<std::size_t>(pool, 1), long_rng,
                                    config.entity_prefix);
  return d;
}

std::vector<Example> recombinant_examples(const std::vector<Example>& seed, const DomainConfig& domain, bool longer,
                                          int depth, std::size_t count, Rng& rng) {
  Grammar g = init_grammar(seed);
  g = longer ? abs_entities(abs_whole_phrases(g, domain), domain) : abs_entities(g, domain);
  Sampler sampler(g);
  auto less = [](const Example& a, const Example& b) {
    return std::tie(a.utterance, a.logical_form) < std::tie(b.utterance, b.logical_form);
  };
  std::set<Example, decltype(less)> seen(seed.begin(), seed.end(), less);
  std::vector<Example> out;
  out.reserve(count);
  const std::size_t max_attempts = 1000 * count + 1000;
  for (std::size_t attempt = 0; out.size() < count; ++attempt) {
    if (attempt >= max_attempts)
      throw std::runtime_error("recombinant sampling found only " + std::to_string(out.size()) + " of " +
                               std::to_string(count) + " new depth-" + std::to_string(depth) + " examples");
    Example ex = sampler.sample(rng);
    if (artificial_depth(ex.utterance) != depth) continue;
    if (seen.insert(ex).second) out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> condition_examples(const SeedData& data, const ExperimentConfig& config,
                                        const std::string& condition, std::size_t count, std::uint64_t seed) {
  if (count == 0) return {};
  auto prefix = [count](const std::vector<Example>& pool) {
    if (count > pool.size()) throw std::invalid_argument("example pool smaller than requested count");
    return std::vector<Example>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
  };
  if (condition == kSameIndependent) return prefix(data.same_pool);
  if (condition == kLongerIndependent) return prefix(data.longer_pool);
  const bool longer = condition == kLongerRecombinant;
  if (!longer && condition != kSameRecombinant) throw std::invalid_argument("unknown condition '" + condition + "'");
  Rng rng = Rng::substream(seed, longer ? "grammar-sampling-longer" : "grammar-sampling");
  return recombinant_examples(data.seed, artificial_domain_config(config.entity_prefix), longer,
                              longer ? config.longer_depth : config.base_depth, count, rng);
}

RunResult train_and_evaluate(const SeedData& data, const std::vector<Example>& added, const ExperimentConfig& config,
                             std::uint64_t seed) {
  std::vector<Example> train_examples = data.seed;
  train_examples.insert(train_examples.end(), added.begin(), added.end());
  Dataset train_set = replace_singletons(make_dataset(std::move(train_examples)));

  const DomainConfig domain = artificial_domain_config(config.entity_prefix);
  Seq2SeqModel model = make_model(train_set, config.dims, domain.copy, config.copy_enabled);
  initialize_model(model, seed);
  TrainConfig tc = config.train;
  tc.seed = seed;
  train(train_set, nullptr, model, tc);

  EvalOptions opts;
  opts.mode = EvalMode::kExactMatch;
  opts.executor = world_executor(data.world);
  opts.beam_size = config.beam_size;
  EvalResult r = evaluate(model, data.test, opts);
  return {r.exact_accuracy, r.denotation_accuracy};
}

std::vector<ExperimentRow> run_longer_examples_experiment(const ExperimentConfig& config,
                                                          const ExperimentProgress& progress) {
  config.validate();
  std::vector<ExperimentRow> rows;
  auto emit = [&](ExperimentRow row) {
    if (progress) progress(row);
    rows.push_back(std::move(row));
  };
  for (std::uint64_t seed : config.seeds) {
    const SeedData data = make_seed_data(config, seed);
    std::optional<RunResult> baseline;
    for (std::size_t count : config.counts) {
      for (const auto& condition : config.conditions) {
        RunResult r;
        if (count == 0) {
          if (!baseline) baseline = train_and_evaluate(data, {}, config, seed);
          r = *baseline;
        } else {
          r = train_and_evaluate(data, condition_examples(data, config, condition, count, seed), config, seed);
        }
        emit({condition, count, seed, r.exact_acc, r.denotation_acc});
      }
    }
  }
  return rows;
}

std::string format_experiment_csv(const std::vector<ExperimentRow>& rows) {
  std::string out = "condition,added,seed,exact_acc,denotation_acc\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%llu,%.6f,%.6f\n", r.condition.c_str(), r.added,
                  static_cast<unsigned long long>(r.seed), r.exact_acc, r.denotation_acc);
    out += buf;
  }
  return out;
}

std::string format_experiment_summary(const std::vector<ExperimentRow>& rows) {
  struct Acc {
    double exact = 0.0;
    double denot = 0.0;
    std::size_t n = 0;
  };
  std::vector<std::pair<std::string, std::size_t>> order;
  std::map<std::pair<std::string, std::size_t>, Acc> acc;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.condition, r.added);
    auto [it, inserted] = acc.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.exact += r.exact_acc;
    it->second.denot += r.denotation_acc;
    ++it->second.n;
  }
  std::string out = "# condition added mean_exact_acc mean_denotation_acc seeds\n";
  char buf[256];
  for (const auto& key : order) {
    const Acc& a = acc.at(key);
    std::snprintf(buf, sizeof buf, "%s %zu %.6f %.6f %zu\n", key.first.c_str(), key.second,
                  a.exact / static_cast<double>(a.n), a.denot / static_cast<double>(a.n), a.n);
    out += buf;
  }
  return out;
}

}  // namespace recomb
