#pragma once

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "recomb/corpus.hpp"
#include "recomb/neural.hpp"
#include "recomb/random.hpp"
#include "recomb/scfg.hpp"

namespace testutil {

using namespace recomb;

inline std::filesystem::path data_dir() { return RECOMB_DATA_DIR; }

/// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::path(RECOMB_SCRATCH_DIR) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

/// Runs the CLI with the given argument string; stdout and stderr are captured.
inline CommandResult run_cli(const std::string& args, const std::filesystem::path& cwd) {
  const auto log = cwd / "cli_output.txt";
  const std::string cmd =
      "cd '" + cwd.string() + "' && '" + std::string(RECOMB_CLI_PATH) + "' " + args + " > '" + log.string() + "' 2>&1";
  int status = std::system(cmd.c_str());
  CommandResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = read_file(log);
  std::filesystem::remove(log);
  return r;
}

/// Small model over explicit vocabularies with parameters uniform in [-scale, scale].
inline Seq2SeqModel tiny_model(const Tokens& input_tokens, const Tokens& output_tokens, ModelDims dims, Rng& rng,
                               double scale = 0.5, bool copy = true) {
  Seq2SeqModel m;
  for (const auto& t : input_tokens) m.input_vocab.add(t);
  for (const auto& t : output_tokens) m.output_vocab.add(t);
  m.params = ModelParams::zeros(m.input_vocab.size(), m.output_vocab.size(), dims);
  init_uniform(m.params, rng, scale);
  m.copy_enabled = copy;
  return m;
}

struct TinyCase {
  Seq2SeqModel model;
  Instance instance;
};

/// Random tiny model plus instance: input length 1..3, output length 0..3,
/// output vocabulary of at most 4 tokens. Targets mix Write-only, Copy-only and
/// Write-or-Copy tokens; `_p` is never copyable.
inline TinyCase random_tiny_case(Rng& rng, ModelDims dims = {2, 3}, bool copy = true) {
  const Tokens pool{"a", "b", "c", "_p"};
  Tokens extras;
  for (const char* t : {"a", "x"})
    if (rng.uniform01() < 0.6) extras.push_back(t);
  TinyCase tc{tiny_model(pool, extras, dims, rng, 0.5, copy), {}};
  Tokens utterance(1 + rng.uniform_index(3));
  for (auto& t : utterance) t = pool[rng.uniform_index(pool.size())];
  Tokens reachable = extras;
  if (copy)
    for (const auto& t : utterance)
      if (tc.model.copy.copyable(t)) reachable.push_back(t);
  Tokens output;
  if (!reachable.empty()) {
    output.resize(rng.uniform_index(4));
    for (auto& t : output) t = reachable[rng.uniform_index(reachable.size())];
  }
  tc.instance = tc.model.make_instance(utterance, output);
  return tc;
}

/// Probability of emitting `target` at decoder state `s`, recomputed with
/// explicit loops: bilinear scores, attention context, write logits, and one
/// normalizer over all unmasked actions.
inline double reference_token_prob(const Seq2SeqModel& model, const Instance& inst, const EncoderStates& enc,
                                   const Vector& s, const std::string& target) {
  const auto& P = model.params;
  const int H = P.hidden();
  const auto m = static_cast<std::size_t>(enc.length());
  std::vector<double> e(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0;
    for (int r = 0; r < H; ++r)
      for (Eigen::Index q = 0; q < enc.b.rows(); ++q) acc += s(r) * P.W_a(r, q) * enc.b(q, static_cast<Eigen::Index>(i));
    e[i] = acc;
  }
  double emax = e[0];
  for (double v : e) emax = std::max(emax, v);
  double den = 0;
  for (double v : e) den += std::exp(v - emax);
  Vector c = Vector::Zero(enc.b.rows());
  for (std::size_t i = 0; i < m; ++i) c += std::exp(e[i] - emax) / den * enc.b.col(static_cast<Eigen::Index>(i));
  const std::size_t V = model.output_vocab.size();
  std::vector<double> write(V);
  for (std::size_t w = 0; w < V; ++w) {
    double acc = 0;
    for (int k = 0; k < H; ++k) acc += P.U(static_cast<Eigen::Index>(w), k) * s(k);
    for (Eigen::Index k = 0; k < c.size(); ++k) acc += P.U(static_cast<Eigen::Index>(w), H + k) * c(k);
    write[w] = acc;
  }
  double Z = 0, num = 0;
  for (std::size_t w = 0; w < V; ++w) {
    Z += std::exp(write[w]);
    if (model.output_vocab.token(static_cast<int>(w)) == target) num += std::exp(write[w]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!inst.copy_mask[i]) continue;
    Z += std::exp(e[i]);
    if (inst.input_surface[i] == target) num += std::exp(e[i]);
  }
  return num / Z;
}

/// Largest relative error between the analytic gradient and central finite
/// differences over every parameter coordinate. Relative error uses
/// max(|analytic|, |numeric|, 1e-5) as denominator.
inline double max_gradient_rel_error(const TinyCase& tc, double h = 1e-5) {
  ModelParams grad = tc.model.params.zeros_like();
  sequence_log_likelihood(tc.model.params, tc.instance, &grad);
  ModelParams p = tc.model.params;
  std::vector<double*> coords, analytic;
  p.visit([&](const char*, auto& t) {
    for (Eigen::Index k = 0; k < t.size(); ++k) coords.push_back(t.data() + k);
  });
  grad.visit([&](const char*, auto& t) {
    for (Eigen::Index k = 0; k < t.size(); ++k) analytic.push_back(t.data() + k);
  });
  double worst = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double orig = *coords[i];
    *coords[i] = orig + h;
    const double fp = sequence_log_likelihood(p, tc.instance);
    *coords[i] = orig - h;
    const double fm = sequence_log_likelihood(p, tc.instance);
    *coords[i] = orig;
    const double numeric = (fp - fm) / (2 * h);
    const double a = *analytic[i];
    worst = std::max(worst, std::abs(numeric - a) / std::max({std::abs(numeric), std::abs(a), 1e-5}));
  }
  return worst;
}

struct ScoredSequence {
  Tokens tokens;
  double score = -1e300;
  std::size_t count = 0;  // number of complete sequences visited
};

/// Enumerates every complete output sequence of length <= max_len (ending in
/// </s>, or cut at max_len) and returns the best. Probabilities of actions with
/// the same surface token are summed directly.
inline ScoredSequence exhaustive_best(const Seq2SeqModel& model, const Tokens& utterance, int max_len) {
  const auto& P = model.params;
  Instance inst = model.make_instance(utterance, {});
  EncoderStates enc = encode(P, inst.input_ids);
  ScoredSequence best;
  std::function<void(const DecoderState&, Tokens&, double)> dfs = [&](const DecoderState& st, Tokens& prefix,
                                                                      double score) {
    Attention att = attend(P, st.s, enc);
    ActionDistribution dist = action_distribution(P, st.s, att, inst.copy_mask);
    std::map<std::string, double> mass;
    for (std::size_t a = 0; a < static_cast<std::size_t>(dist.log_probs.size()); ++a) {
      std::string surface = a < dist.vocab_size ? model.output_vocab.token(static_cast<int>(a))
                                                : utterance[a - dist.vocab_size];
      mass[surface] += dist.prob(a);
    }
    for (const auto& [tok, p] : mass) {
      if (p <= 0) continue;
      const double s = score + std::log(p);
      if (tok == "</s>" || static_cast<int>(prefix.size()) + 1 == max_len) {
        ++best.count;
        Tokens done = prefix;
        if (tok != "</s>") done.push_back(tok);
        if (s > best.score) best = ScoredSequence{done, s, best.count};
        continue;
      }
      prefix.push_back(tok);
      dfs(advance_decoder(P, st, model.output_vocab.lookup_or_unk(tok), att.context), prefix, s);
      prefix.pop_back();
    }
  };
  Tokens prefix;
  dfs(initial_decoder_state(P, enc), prefix, 0.0);
  return best;
}

/// Exhaustive derivation enumeration: the exact distribution over (x, y) pairs
/// of a top-down uniform sampler on an acyclic grammar.
class DerivationEnumerator {
 public:
  explicit DerivationEnumerator(const Grammar& g) : g_(g) {}

  std::map<std::pair<Tokens, Tokens>, double> distribution() { return enumerate(g_.root); }

 private:
  using Dist = std::map<std::pair<Tokens, Tokens>, double>;

  Dist enumerate(const std::string& cat) {
    if (auto it = memo_.find(cat); it != memo_.end()) return it->second;
    std::vector<const Rule*> rules;
    for (const auto& r : g_.rules)
      if (r.lhs == cat) rules.push_back(&r);
    Dist out;
    for (const Rule* r : rules) {
      // Partial results keyed by assignment of alignment id -> sub-derivation.
      std::vector<std::pair<std::map<int, std::pair<Tokens, Tokens>>, double>> partial{{{}, 1.0 / rules.size()}};
      for (const auto& s : r->alpha) {
        if (s.is_terminal()) continue;
        Dist sub = enumerate(s.value);
        std::vector<std::pair<std::map<int, std::pair<Tokens, Tokens>>, double>> next;
        for (const auto& [assign, p] : partial)
          for (const auto& [pair, q] : sub) {
            auto a = assign;
            a[s.id] = pair;
            next.emplace_back(std::move(a), p * q);
          }
        partial = std::move(next);
      }
      for (const auto& [assign, p] : partial) {
        Tokens x, y;
        for (const auto& s : r->alpha) {
          if (s.is_terminal()) x.push_back(s.value);
          else x.insert(x.end(), assign.at(s.id).first.begin(), assign.at(s.id).first.end());
        }
        for (const auto& s : r->beta) {
          if (s.is_terminal()) y.push_back(s.value);
          else y.insert(y.end(), assign.at(s.id).second.begin(), assign.at(s.id).second.end());
        }
        out[{x, y}] += p;
      }
    }
    memo_[cat] = out;
    return out;
  }

  const Grammar& g_;
  std::map<std::string, Dist> memo_;
};

}  // namespace testutil
