#include "recomb/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

namespace recomb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct Beam {
  Hypothesis hyp;
  DecoderState state;
};

struct Candidate {
  std::size_t parent;
  SurfaceChoice choice;  // unused when carrying a finished parent
  double score;
  bool carry;
};

std::string csv_field(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<SurfaceChoice> merge_surface(const ActionDistribution& dist, const Seq2SeqModel& model,
                                         const Tokens& utterance) {
  std::vector<SurfaceChoice> out;
  out.reserve(dist.vocab_size + utterance.size());
  for (std::size_t w = 0; w < dist.vocab_size; ++w)
    out.push_back({model.output_vocab.token(static_cast<int>(w)), static_cast<int>(w), dist.write_log_prob(w)});
  std::map<std::string, std::size_t, std::less<>> extra;
  for (std::size_t i = 0; i < utterance.size(); ++i) {
    const double lp = dist.copy_log_prob(i);
    if (lp == kNegInf) continue;
    if (auto id = model.output_vocab.find(utterance[i])) {
      auto& slot = out[static_cast<std::size_t>(*id)];
      slot.log_prob = log_add(slot.log_prob, lp);
    } else if (auto it = extra.find(utterance[i]); it != extra.end()) {
      out[it->second].log_prob = log_add(out[it->second].log_prob, lp);
    } else {
      extra.emplace(utterance[i], out.size());
      out.push_back({utterance[i], model.output_vocab.unk_id(), lp});
    }
  }
  return out;
}

std::vector<Hypothesis> beam_search(const Seq2SeqModel& model, const Tokens& utterance, int beam_size, int max_len) {
  if (beam_size < 1) throw std::invalid_argument("beam_size must be >= 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (utterance.empty()) return {};
  const ModelParams& params = model.params;
  const Instance inst = model.make_instance(utterance, {});
  const EncoderStates enc = encode(params, inst.input_ids);

  std::vector<Beam> beam;
  beam.push_back({Hypothesis{}, initial_decoder_state(params, enc)});
  for (int step = 1; step <= max_len; ++step) {
    std::vector<Candidate> cands;
    std::vector<Vector> contexts(beam.size());
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const auto& cur = beam[b];
      if (cur.hyp.finished) {
        cands.push_back({b, {}, cur.hyp.score, true});
        continue;
      }
      Attention att = attend(params, cur.state.s, enc);
      ActionDistribution dist = action_distribution(params, cur.state.s, att, inst.copy_mask);
      for (auto& choice : merge_surface(dist, model, utterance)) {
        if (choice.log_prob == kNegInf) continue;
        const double score = cur.hyp.score + choice.log_prob;
        cands.push_back({b, std::move(choice), score, false});
      }
      contexts[b] = std::move(att.context);
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (cands.size() > static_cast<std::size_t>(beam_size)) cands.resize(static_cast<std::size_t>(beam_size));

    std::vector<Beam> next;
    next.reserve(cands.size());
    bool all_finished = true;
    for (auto& c : cands) {
      const Beam& parent = beam[c.parent];
      if (c.carry) {
        next.push_back(parent);
        continue;
      }
      Beam nb;
      nb.hyp.tokens = parent.hyp.tokens;
      nb.hyp.score = c.score;
      if (c.choice.token == kEos) {
        nb.hyp.finished = true;
        nb.hyp.terminated = true;
      } else {
        nb.hyp.tokens.push_back(c.choice.token);
        nb.hyp.finished = step == max_len;
        if (!nb.hyp.finished) nb.state = advance_decoder(params, parent.state, c.choice.feed_id, contexts[c.parent]);
      }
      all_finished = all_finished && nb.hyp.finished;
      next.push_back(std::move(nb));
    }
    beam = std::move(next);
    if (all_finished) break;
  }

  std::vector<Hypothesis> out;
  out.reserve(beam.size());
  for (auto& b : beam) out.push_back(std::move(b.hyp));
  std::stable_sort(out.begin(), out.end(), [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  return out;
}

BalanceResult balance_parentheses(const Tokens& tokens) {
  long depth = 0;
  for (const auto& t : tokens) {
    if (t == "(") ++depth;
    if (t == ")" && --depth < 0) return {tokens, false};
  }
  BalanceResult r{tokens, true};
  r.tokens.insert(r.tokens.end(), static_cast<std::size_t>(depth), ")");
  return r;
}

EvalRecord score_beam(const std::vector<Hypothesis>& beam, const Tokens& gold, EvalMode mode, const Executor* executor) {
  EvalRecord rec;
  rec.gold = gold;
  if (mode == EvalMode::kDenotation && !executor) throw std::invalid_argument("denotation mode needs an executor");

  std::optional<Denotation> gold_den;
  if (executor) {
    try {
      gold_den = (*executor)(gold);
    } catch (const ExecutionError&) {
    }
  }

  if (mode == EvalMode::kExactMatch) {
    if (!beam.empty()) {
      rec.predicted = balance_parentheses(beam.front().tokens).tokens;
      rec.has_prediction = true;
      rec.score = beam.front().score;
      rec.correct = rec.predicted == gold;
    }
    if (executor && gold_den && rec.has_prediction) {
      try {
        rec.denotation_correct = (*executor)(rec.predicted) == *gold_den;
      } catch (const ExecutionError&) {
      }
    }
    return rec;
  }

  for (const auto& h : beam) {
    Tokens candidate = balance_parentheses(h.tokens).tokens;
    Denotation den;
    try {
      den = (*executor)(candidate);
    } catch (const ExecutionError&) {
      continue;
    }
    rec.predicted = std::move(candidate);
    rec.has_prediction = true;
    rec.score = h.score;
    rec.denotation_correct = gold_den && den == *gold_den;
    break;
  }
  rec.correct = rec.denotation_correct;
  return rec;
}

EvalResult evaluate(const Seq2SeqModel& model, const std::vector<Example>& test, const EvalOptions& options) {
  if (options.mode == EvalMode::kDenotation && !options.executor)
    throw std::invalid_argument("denotation mode needs an executor");
  const Executor* exec = options.executor ? &options.executor : nullptr;
  EvalResult result;
  std::size_t exact = 0;
  std::size_t denot = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& ex = test[i];
    const int max_len = options.max_len > 0 ? options.max_len : default_max_len(ex.utterance.size());
    auto beam = beam_search(model, ex.utterance, options.beam_size, max_len);
    EvalRecord rec = score_beam(beam, ex.logical_form, options.mode, exec);
    rec.example_id = i;
    if (options.mode == EvalMode::kDenotation) {
      // Exact match is judged on the top hypothesis regardless of executability.
      EvalRecord top = score_beam(beam, ex.logical_form, EvalMode::kExactMatch, nullptr);
      exact += top.correct;
      denot += rec.denotation_correct;
    } else {
      exact += rec.correct;
      denot += rec.denotation_correct;
    }
    correct += rec.correct;
    result.records.push_back(std::move(rec));
  }
  const double n = test.empty() ? 1.0 : static_cast<double>(test.size());
  result.accuracy = static_cast<double>(correct) / n;
  result.exact_accuracy = static_cast<double>(exact) / n;
  result.denotation_accuracy = exec ? static_cast<double>(denot) / n : 0.0;
  return result;
}

std::string format_eval_report(const EvalResult& result) {
  std::string out = "example_id,correct,gold,predicted,score\n";
  char score[64];
  for (const auto& r : result.records) {
    if (r.has_prediction)
      std::snprintf(score, sizeof score, "%.17g", r.score);
    else
      score[0] = '\0';
    out += std::to_string(r.example_id) + "," + (r.correct ? "1" : "0") + "," + csv_field(join_tokens(r.gold)) + "," +
           csv_field(join_tokens(r.predicted)) + "," + score + "\n";
  }
  return out;
}

void write_eval_report(const std::filesystem::path& path, const EvalResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_eval_report(result);
}

}  // namespace recomb
