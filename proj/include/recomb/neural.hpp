#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "recomb/corpus.hpp"
#include "recomb/domain_config.hpp"
#include "recomb/random.hpp"

namespace recomb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelDims {
  int embed = 100;
  int hidden = 200;
};

/// LSTM parameters. `W` acts on the stacked [input; previous hidden] vector and
/// its rows are grouped as input, forget, output gate, then candidate.
struct LstmCell {
  Matrix W;
  Vector b;

  int hidden() const { return static_cast<int>(b.size() / 4); }
  int input() const { return static_cast<int>(W.cols()) - hidden(); }
};

/// All learnable tensors. Embedding tables store one column per token.
struct ModelParams {
  Matrix phi_in;   // d x |V_in|
  Matrix phi_out;  // d x |V_out|
  LstmCell fwd;    // input d, hidden H
  LstmCell bwd;    // input d, hidden H
  LstmCell dec;    // input d + 2H, hidden H
  Matrix W_s;      // H x 2H, decoder initialization
  Matrix W_a;      // H x 2H, bilinear attention
  Matrix U;        // |V_out| x 3H, write logits over [s; c]

  static ModelParams zeros(std::size_t input_vocab, std::size_t output_vocab, ModelDims dims);
  ModelParams zeros_like() const;

  int embed() const { return static_cast<int>(phi_in.rows()); }
  int hidden() const { return static_cast<int>(W_s.rows()); }
  std::size_t output_vocab_size() const { return static_cast<std::size_t>(U.rows()); }
  std::size_t parameter_count() const;

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Throws std::invalid_argument naming the first inconsistent tensor.
  void check_shapes() const;

  /// this += alpha * other; shapes must agree.
  void axpy(double alpha, const ModelParams& other);
  double squared_norm() const;
  void set_zero();

 private:
  template <class Self, class F>
  static void visit_impl(Self& p, F& f) {
    f("phi_in", p.phi_in);
    f("phi_out", p.phi_out);
    f("enc_fwd.W", p.fwd.W);
    f("enc_fwd.b", p.fwd.b);
    f("enc_bwd.W", p.bwd.W);
    f("enc_bwd.b", p.bwd.b);
    f("dec.W", p.dec.W);
    f("dec.b", p.dec.b);
    f("W_s", p.W_s);
    f("W_a", p.W_a);
    f("U", p.U);
  }
};

/// Fills every parameter uniformly from [-scale, scale].
void init_uniform(ModelParams& params, Rng& rng, double scale = 0.1);

struct LstmState {
  Vector h;
  Vector c;
};

/// Activations kept for the backward pass of one LSTM step.
struct LstmCache {
  Vector z;  // [input; previous hidden]
  Vector c_prev;
  Vector i, f, o, g;
  Vector c;
  Vector tanh_c;
};

LstmState lstm_step(const LstmCell& cell, const Vector& input, const Vector& prev_hidden, const Vector& prev_cell,
                    LstmCache* cache = nullptr);

/// Backpropagates (d_hidden, d_cell) through one step, accumulating parameter
/// gradients into `grad` and returning gradients for the step's inputs.
struct LstmInputGrads {
  Vector input;
  Vector hidden;
  Vector cell;
};
LstmInputGrads lstm_backward(const LstmCell& cell, const LstmCache& cache, const Vector& d_hidden,
                             const Vector& d_cell, LstmCell& grad);

struct EncoderStates {
  Matrix b;  // 2H x m; column i is [h_i^F; h_i^B]
  Vector h_fwd_last;
  Vector h_bwd_first;

  int length() const { return static_cast<int>(b.cols()); }
};

struct EncoderCache {
  std::vector<LstmCache> fwd;  // indexed by position
  std::vector<LstmCache> bwd;  // indexed by position
};

EncoderStates encode(const ModelParams& params, const std::vector<int>& input_ids, EncoderCache* cache = nullptr);

struct Attention {
  Vector scores;   // e_i
  Vector weights;  // alpha_i
  Vector context;  // c
};

Attention attend(const ModelParams& params, const Vector& s, const EncoderStates& enc);

/// Log-probabilities over |V_out| Write actions followed by m Copy actions.
/// Masked Copy actions hold -infinity.
struct ActionDistribution {
  Vector log_probs;
  std::size_t vocab_size = 0;

  std::size_t input_length() const { return static_cast<std::size_t>(log_probs.size()) - vocab_size; }
  double prob(std::size_t action) const;
  double write_log_prob(std::size_t w) const { return log_probs(static_cast<Eigen::Index>(w)); }
  double copy_log_prob(std::size_t i) const { return log_probs(static_cast<Eigen::Index>(vocab_size + i)); }
};

ActionDistribution action_distribution(const ModelParams& params, const Vector& s, const Attention& attention,
                                       const std::vector<bool>& copy_mask);
ActionDistribution action_distribution(const ModelParams& params, const Vector& s, const EncoderStates& enc,
                                       const std::vector<bool>& copy_mask);

class UnreachableTarget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// log(P(Write[target]) + sum of P(Copy[i]) over positions whose surface token
/// equals the target). `target_id` is empty when the target is outside V_out.
double token_log_prob(const ActionDistribution& dist, std::optional<int> target_id, const std::string& target,
                      const Tokens& input_surface);

/// A training/evaluation instance mapped onto a model's vocabularies.
struct Instance {
  std::vector<int> input_ids;
  Tokens input_surface;
  std::vector<bool> copy_mask;
  Tokens output;
  std::vector<std::optional<int>> output_ids;
  std::vector<int> feed_ids;  // decoder input ids, `<unk>` for out-of-vocabulary tokens
};

/// Parameters plus the vocabularies and copy policy they were trained with.
struct Seq2SeqModel {
  Vocabulary input_vocab;
  Vocabulary output_vocab;
  ModelParams params;
  CopyRule copy;
  bool copy_enabled = true;

  std::vector<bool> copy_mask(const Tokens& utterance) const;
  Instance make_instance(const Tokens& utterance, const Tokens& logical_form) const;
  Instance make_instance(const Example& example) const { return make_instance(example.utterance, example.logical_form); }
};

Seq2SeqModel make_model(const Dataset& train, ModelDims dims, const CopyRule& copy, bool copy_enabled);

/// Teacher-forced log p(y | x), with `</s>` appended as the final target when
/// `terminate` is set. When `grad` is given, the exact gradient of the returned
/// value is added into it.
double sequence_log_likelihood(const ModelParams& params, const Instance& instance, ModelParams* grad = nullptr,
                               bool terminate = true);

struct DecoderState {
  Vector s;
  Vector c;
};

DecoderState initial_decoder_state(const ModelParams& params, const EncoderStates& enc);
DecoderState advance_decoder(const ModelParams& params, const DecoderState& state, int feed_id, const Vector& context);

double log_sum_exp(const Vector& v);
Vector softmax(const Vector& scores);

}  // namespace recomb
