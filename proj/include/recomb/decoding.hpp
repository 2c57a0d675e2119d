#pragma once

#include <filesystem>
#include <functional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "recomb/corpus.hpp"
#include "recomb/neural.hpp"

namespace recomb {

struct Hypothesis {
  Tokens tokens;         // emitted tokens, end-of-sequence stripped
  double score = 0.0;    // sum of merged per-token log probabilities
  bool finished = false;
  bool terminated = false;  // ended with </s> rather than hitting max_len
};

/// One surface token the decoder can emit next, with Write and Copy
/// probability mass for that token summed.
struct SurfaceChoice {
  std::string token;
  int feed_id = 0;
  double log_prob = 0.0;
};

/// Groups a step's actions by the surface token they produce. Order: vocabulary
/// tokens by id, then out-of-vocabulary copy tokens by first input position.
std::vector<SurfaceChoice> merge_surface(const ActionDistribution& dist, const Seq2SeqModel& model,
                                         const Tokens& utterance);

inline int default_max_len(std::size_t input_length) { return 4 * static_cast<int>(input_length) + 20; }

/// Returns up to beam_size hypotheses sorted by score, best first.
std::vector<Hypothesis> beam_search(const Seq2SeqModel& model, const Tokens& utterance, int beam_size, int max_len);

struct BalanceResult {
  Tokens tokens;
  bool ok = true;  // false when some prefix closes more than it opens
};

BalanceResult balance_parentheses(const Tokens& tokens);

using Denotation = std::set<std::string>;

class ExecutionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps a logical form to its denotation, throwing ExecutionError on failure.
using Executor = std::function<Denotation(const Tokens&)>;

enum class EvalMode { kExactMatch, kDenotation };

struct EvalRecord {
  std::size_t example_id = 0;
  bool correct = false;
  bool denotation_correct = false;
  Tokens gold;
  Tokens predicted;
  bool has_prediction = false;
  double score = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  double exact_accuracy = 0.0;
  double denotation_accuracy = 0.0;
  std::vector<EvalRecord> records;
};

struct EvalOptions {
  EvalMode mode = EvalMode::kExactMatch;
  Executor executor;  // required for kDenotation; when set, both accuracies are filled
  int beam_size = 5;
  int max_len = 0;  // 0 selects default_max_len per example
};

/// Exact mode scores the top balanced hypothesis; denotation mode takes the
/// best hypothesis that executes without error. Failures count as incorrect.
EvalResult evaluate(const Seq2SeqModel& model, const std::vector<Example>& test, const EvalOptions& options);

/// Scores one example's beam (as produced by beam_search) against gold.
EvalRecord score_beam(const std::vector<Hypothesis>& beam, const Tokens& gold, EvalMode mode,
                      const Executor* executor);

std::string format_eval_report(const EvalResult& result);
void write_eval_report(const std::filesystem::path& path, const EvalResult& result);

}  // namespace recomb
