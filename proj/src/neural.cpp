#include "recomb/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace recomb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Vector sigmoid(const Vector& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

void check(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("shape mismatch: " + what);
}

void check_cell(const LstmCell& cell, Eigen::Index input, Eigen::Index hidden, const std::string& name) {
  check(cell.b.size() == 4 * hidden, name + ".b");
  check(cell.W.rows() == 4 * hidden && cell.W.cols() == input + hidden, name + ".W");
}

LstmCell zero_cell(int input, int hidden) {
  return LstmCell{Matrix::Zero(4 * hidden, input + hidden), Vector::Zero(4 * hidden)};
}

}  // namespace

double log_sum_exp(const Vector& v) {
  if (v.size() == 0) return kNegInf;
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

ModelParams ModelParams::zeros(std::size_t input_vocab, std::size_t output_vocab, ModelDims dims) {
  const auto vin = static_cast<Eigen::Index>(input_vocab);
  const auto vout = static_cast<Eigen::Index>(output_vocab);
  const int d = dims.embed;
  const int h = dims.hidden;
  ModelParams p;
  p.phi_in = Matrix::Zero(d, vin);
  p.phi_out = Matrix::Zero(d, vout);
  p.fwd = zero_cell(d, h);
  p.bwd = zero_cell(d, h);
  p.dec = zero_cell(d + 2 * h, h);
  p.W_s = Matrix::Zero(h, 2 * h);
  p.W_a = Matrix::Zero(h, 2 * h);
  p.U = Matrix::Zero(vout, 3 * h);
  return p;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams p = *this;
  p.visit([](const char*, auto& t) { t.setZero(); });
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const char*, const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

void ModelParams::check_shapes() const {
  const Eigen::Index d = phi_in.rows();
  const Eigen::Index h = W_s.rows();
  check(phi_out.rows() == d, "phi_out rows must equal embedding size");
  check_cell(fwd, d, h, "enc_fwd");
  check_cell(bwd, d, h, "enc_bwd");
  check_cell(dec, d + 2 * h, h, "dec");
  check(W_s.cols() == 2 * h, "W_s");
  check(W_a.rows() == h && W_a.cols() == 2 * h, "W_a");
  check(U.rows() == phi_out.cols() && U.cols() == 3 * h, "U");
}

void ModelParams::axpy(double alpha, const ModelParams& o) {
  phi_in += alpha * o.phi_in;
  phi_out += alpha * o.phi_out;
  for (auto [dst, src] : {std::pair{&fwd, &o.fwd}, std::pair{&bwd, &o.bwd}, std::pair{&dec, &o.dec}}) {
    dst->W += alpha * src->W;
    dst->b += alpha * src->b;
  }
  W_s += alpha * o.W_s;
  W_a += alpha * o.W_a;
  U += alpha * o.U;
}

double ModelParams::squared_norm() const {
  double n = 0.0;
  visit([&](const char*, const auto& t) { n += t.squaredNorm(); });
  return n;
}

void ModelParams::set_zero() {
  visit([](const char*, auto& t) { t.setZero(); });
}

void init_uniform(ModelParams& params, Rng& rng, double scale) {
  params.visit([&](const char*, auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-scale, scale);
  });
}

LstmState lstm_step(const LstmCell& cell, const Vector& input, const Vector& prev_hidden, const Vector& prev_cell,
                    LstmCache* cache) {
  const Eigen::Index h = cell.b.size() / 4;
  check(cell.b.size() == 4 * h && cell.W.rows() == 4 * h, "lstm gate rows");
  check(prev_hidden.size() == h && prev_cell.size() == h, "lstm state size");
  check(cell.W.cols() == input.size() + h, "lstm input size");

  Vector z(input.size() + h);
  z << input, prev_hidden;
  Vector a = cell.b;
  a.noalias() += cell.W * z;
  Vector i = sigmoid(a.segment(0, h));
  Vector f = sigmoid(a.segment(h, h));
  Vector o = sigmoid(a.segment(2 * h, h));
  Vector g = a.segment(3 * h, h).array().tanh().matrix();
  Vector c = (f.array() * prev_cell.array() + i.array() * g.array()).matrix();
  Vector tc = c.array().tanh().matrix();
  LstmState out{(o.array() * tc.array()).matrix(), c};
  if (cache) {
    cache->z = std::move(z);
    cache->c_prev = prev_cell;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->o = std::move(o);
    cache->g = std::move(g);
    cache->c = std::move(c);
    cache->tanh_c = std::move(tc);
  }
  return out;
}

LstmInputGrads lstm_backward(const LstmCell& cell, const LstmCache& k, const Vector& d_hidden, const Vector& d_cell,
                             LstmCell& grad) {
  const Eigen::Index h = cell.b.size() / 4;
  const Eigen::Index in = cell.W.cols() - h;
  auto one = [](const Vector& v) { return 1.0 - v.array(); };

  Vector dc = d_cell + (d_hidden.array() * k.o.array() * (1.0 - k.tanh_c.array().square())).matrix();
  Vector da(4 * h);
  da.segment(0, h) = (dc.array() * k.g.array() * k.i.array() * one(k.i)).matrix();
  da.segment(h, h) = (dc.array() * k.c_prev.array() * k.f.array() * one(k.f)).matrix();
  da.segment(2 * h, h) = (d_hidden.array() * k.tanh_c.array() * k.o.array() * one(k.o)).matrix();
  da.segment(3 * h, h) = (dc.array() * k.i.array() * (1.0 - k.g.array().square())).matrix();

  grad.W.noalias() += da * k.z.transpose();
  grad.b += da;
  Vector dz = cell.W.transpose() * da;
  return LstmInputGrads{dz.head(in), dz.tail(h), (dc.array() * k.f.array()).matrix()};
}

EncoderStates encode(const ModelParams& params, const std::vector<int>& input_ids, EncoderCache* cache) {
  if (input_ids.empty()) throw std::invalid_argument("encode: empty input");
  const int m = static_cast<int>(input_ids.size());
  const int h = params.hidden();
  for (int id : input_ids)
    if (id < 0 || id >= params.phi_in.cols()) throw std::invalid_argument("encode: input id out of range");

  EncoderStates enc;
  enc.b.resize(2 * h, m);
  if (cache) {
    cache->fwd.assign(static_cast<std::size_t>(m), {});
    cache->bwd.assign(static_cast<std::size_t>(m), {});
  }
  LstmState st{Vector::Zero(h), Vector::Zero(h)};
  for (int i = 0; i < m; ++i) {
    st = lstm_step(params.fwd, params.phi_in.col(input_ids[static_cast<std::size_t>(i)]), st.h, st.c,
                   cache ? &cache->fwd[static_cast<std::size_t>(i)] : nullptr);
    enc.b.col(i).head(h) = st.h;
  }
  enc.h_fwd_last = st.h;
  st = LstmState{Vector::Zero(h), Vector::Zero(h)};
  for (int i = m - 1; i >= 0; --i) {
    st = lstm_step(params.bwd, params.phi_in.col(input_ids[static_cast<std::size_t>(i)]), st.h, st.c,
                   cache ? &cache->bwd[static_cast<std::size_t>(i)] : nullptr);
    enc.b.col(i).tail(h) = st.h;
  }
  enc.h_bwd_first = st.h;
  return enc;
}

Vector softmax(const Vector& scores) {
  Vector w = (scores.array() - scores.maxCoeff()).exp().matrix();
  return w / w.sum();
}

Attention attend(const ModelParams& params, const Vector& s, const EncoderStates& enc) {
  Attention a;
  Vector v = params.W_a.transpose() * s;
  a.scores = enc.b.transpose() * v;
  a.weights = softmax(a.scores);
  a.context = enc.b * a.weights;
  return a;
}

double ActionDistribution::prob(std::size_t action) const {
  return std::exp(log_probs(static_cast<Eigen::Index>(action)));
}

ActionDistribution action_distribution(const ModelParams& params, const Vector& s, const Attention& attention,
                                       const std::vector<bool>& copy_mask) {
  const Eigen::Index vocab = params.U.rows();
  const Eigen::Index m = attention.scores.size();
  if (static_cast<Eigen::Index>(copy_mask.size()) != m) throw std::invalid_argument("copy mask length");
  if (vocab == 0 && std::none_of(copy_mask.begin(), copy_mask.end(), [](bool b) { return b; }))
    throw std::invalid_argument("action_distribution: every action is masked");

  const Eigen::Index h = s.size();
  Vector sc(h + attention.context.size());
  sc << s, attention.context;
  ActionDistribution dist;
  dist.vocab_size = static_cast<std::size_t>(vocab);
  dist.log_probs.resize(vocab + m);
  dist.log_probs.head(vocab).noalias() = params.U * sc;
  for (Eigen::Index i = 0; i < m; ++i)
    dist.log_probs(vocab + i) = copy_mask[static_cast<std::size_t>(i)] ? attention.scores(i) : kNegInf;
  dist.log_probs.array() -= log_sum_exp(dist.log_probs);
  return dist;
}

ActionDistribution action_distribution(const ModelParams& params, const Vector& s, const EncoderStates& enc,
                                       const std::vector<bool>& copy_mask) {
  return action_distribution(params, s, attend(params, s, enc), copy_mask);
}

double token_log_prob(const ActionDistribution& dist, std::optional<int> target_id, const std::string& target,
                      const Tokens& input_surface) {
  if (input_surface.size() != dist.input_length()) throw std::invalid_argument("token_log_prob: input length");
  std::vector<double> terms;
  if (target_id) terms.push_back(dist.write_log_prob(static_cast<std::size_t>(*target_id)));
  for (std::size_t i = 0; i < input_surface.size(); ++i)
    if (input_surface[i] == target) terms.push_back(dist.copy_log_prob(i));
  Vector v = Eigen::Map<Vector>(terms.data(), static_cast<Eigen::Index>(terms.size()));
  double lp = log_sum_exp(v);
  if (lp == kNegInf) throw UnreachableTarget("target token '" + target + "' can be neither written nor copied");
  return lp;
}

std::vector<bool> Seq2SeqModel::copy_mask(const Tokens& utterance) const {
  std::vector<bool> mask(utterance.size(), false);
  if (!copy_enabled) return mask;
  for (std::size_t i = 0; i < utterance.size(); ++i) mask[i] = copy.copyable(utterance[i]);
  return mask;
}

Instance Seq2SeqModel::make_instance(const Tokens& utterance, const Tokens& logical_form) const {
  Instance inst;
  inst.input_surface = utterance;
  inst.input_ids.reserve(utterance.size());
  for (const auto& t : utterance) inst.input_ids.push_back(input_vocab.lookup_or_unk(t));
  inst.copy_mask = copy_mask(utterance);
  inst.output = logical_form;
  for (const auto& t : logical_form) {
    auto id = output_vocab.find(t);
    inst.output_ids.push_back(id);
    inst.feed_ids.push_back(id.value_or(output_vocab.unk_id()));
  }
  return inst;
}

Seq2SeqModel make_model(const Dataset& train, ModelDims dims, const CopyRule& copy, bool copy_enabled) {
  Seq2SeqModel m;
  m.input_vocab = train.input_vocab;
  m.output_vocab = train.output_vocab;
  m.params = ModelParams::zeros(m.input_vocab.size(), m.output_vocab.size(), dims);
  m.copy = copy;
  m.copy_enabled = copy_enabled;
  return m;
}

DecoderState initial_decoder_state(const ModelParams& params, const EncoderStates& enc) {
  const int h = params.hidden();
  Vector boundary(2 * h);
  boundary << enc.h_fwd_last, enc.h_bwd_first;
  return DecoderState{(params.W_s * boundary).array().tanh().matrix(), Vector::Zero(h)};
}

DecoderState advance_decoder(const ModelParams& params, const DecoderState& state, int feed_id, const Vector& context) {
  const int d = params.embed();
  Vector x(d + context.size());
  x << params.phi_out.col(feed_id), context;
  LstmState next = lstm_step(params.dec, x, state.s, state.c);
  return DecoderState{std::move(next.h), std::move(next.c)};
}

namespace {

/// Forward activations of one decoder step.
struct StepCache {
  Vector s;
  Vector v;  // W_a^T s
  Attention att;
  Vector sc;     // [s; c]
  Vector probs;  // softmax over all actions (0 where masked)
  Vector posterior;  // probs restricted to actions yielding the target, renormalized
  LstmCache lstm;    // transition s_j -> s_{j+1}, unused on the last step
};

}  // namespace

double sequence_log_likelihood(const ModelParams& params, const Instance& inst, ModelParams* grad, bool terminate) {
  const int h = params.hidden();
  const int d = params.embed();
  const std::size_t m = inst.input_ids.size();
  const auto vocab = static_cast<Eigen::Index>(params.U.rows());
  if (inst.output.size() != inst.output_ids.size() || inst.feed_ids.size() != inst.output.size())
    throw std::invalid_argument("sequence_log_likelihood: inconsistent instance");
  if (inst.copy_mask.size() != m || inst.input_surface.size() != m)
    throw std::invalid_argument("sequence_log_likelihood: inconsistent input views");

  // Targets: the gold tokens, then </s>.
  std::vector<std::optional<int>> target_ids = inst.output_ids;
  Tokens targets = inst.output;
  if (terminate) {
    target_ids.emplace_back(1);  // Vocabulary reserves id 1 for </s>
    targets.emplace_back(kEos);
  }
  const std::size_t steps = targets.size();
  if (steps == 0) return 0.0;

  EncoderCache enc_cache;
  EncoderStates enc = encode(params, inst.input_ids, grad ? &enc_cache : nullptr);
  Vector boundary(2 * h);
  boundary << enc.h_fwd_last, enc.h_bwd_first;
  Vector s = (params.W_s * boundary).array().tanh().matrix();
  const Vector s1 = s;
  Vector c = Vector::Zero(h);

  std::vector<StepCache> cache(grad ? steps : 0);
  double total = 0.0;
  for (std::size_t j = 0; j < steps; ++j) {
    Vector v = params.W_a.transpose() * s;
    Attention att;
    att.scores = enc.b.transpose() * v;
    att.weights = softmax(att.scores);
    att.context = enc.b * att.weights;
    ActionDistribution dist = action_distribution(params, s, att, inst.copy_mask);

    Vector target_lp = Vector::Constant(dist.log_probs.size(), kNegInf);
    if (target_ids[j]) target_lp(*target_ids[j]) = dist.log_probs(*target_ids[j]);
    for (std::size_t i = 0; i < m; ++i)
      if (inst.input_surface[i] == targets[j])
        target_lp(vocab + static_cast<Eigen::Index>(i)) = dist.log_probs(vocab + static_cast<Eigen::Index>(i));
    const double lp = log_sum_exp(target_lp);
    if (lp == kNegInf)
      throw UnreachableTarget("target token '" + targets[j] + "' can be neither written nor copied");
    total += lp;

    const bool last = j + 1 == steps;
    if (grad) {
      auto& k = cache[j];
      k.s = s;
      k.v = std::move(v);
      k.sc.resize(h + att.context.size());
      k.sc << s, att.context;
      k.probs = dist.log_probs.array().exp().matrix();
      k.posterior = (target_lp.array() - lp).exp().matrix();
      k.att = std::move(att);
      if (!last) {
        Vector x(d + 2 * h);
        x << params.phi_out.col(inst.feed_ids[j]), k.att.context;
        LstmState next = lstm_step(params.dec, x, s, c, &k.lstm);
        s = std::move(next.h);
        c = std::move(next.c);
      }
    } else if (!last) {
      Vector x(d + 2 * h);
      x << params.phi_out.col(inst.feed_ids[j]), att.context;
      LstmState next = lstm_step(params.dec, x, s, c);
      s = std::move(next.h);
      c = std::move(next.c);
    }
  }
  if (!grad) return total;

  // Reverse accumulation.
  ModelParams& g = *grad;
  Matrix dB = Matrix::Zero(2 * h, static_cast<Eigen::Index>(m));
  Vector ds_next = Vector::Zero(h);
  Vector dc_next = Vector::Zero(h);
  for (std::size_t jj = steps; jj-- > 0;) {
    const auto& k = cache[jj];
    Vector ds = Vector::Zero(h);
    Vector dctx = Vector::Zero(2 * h);
    Vector dmem = Vector::Zero(h);
    if (jj + 1 < steps) {
      LstmInputGrads lg = lstm_backward(params.dec, k.lstm, ds_next, dc_next, g.dec);
      ds += lg.hidden;
      dmem = std::move(lg.cell);
      g.phi_out.col(inst.feed_ids[jj]) += lg.input.head(d);
      dctx += lg.input.tail(2 * h);
    }
    // d log p / d logits = posterior - probs; both vanish on masked actions.
    Vector dlogits = k.posterior - k.probs;
    auto dwrite = dlogits.head(vocab);
    g.U.noalias() += dwrite * k.sc.transpose();
    Vector dsc = params.U.transpose() * dwrite;
    ds += dsc.head(h);
    dctx += dsc.tail(2 * h);

    const Vector& alpha = k.att.weights;
    dB.noalias() += dctx * alpha.transpose();
    Vector dalpha = enc.b.transpose() * dctx;
    Vector de = (alpha.array() * (dalpha.array() - alpha.dot(dalpha))).matrix();
    de += dlogits.tail(static_cast<Eigen::Index>(m));

    dB.noalias() += k.v * de.transpose();
    Vector dv = enc.b * de;
    g.W_a.noalias() += k.s * dv.transpose();
    ds.noalias() += params.W_a * dv;

    ds_next = std::move(ds);
    dc_next = std::move(dmem);
  }

  Vector dpre = (ds_next.array() * (1.0 - s1.array().square())).matrix();
  g.W_s.noalias() += dpre * boundary.transpose();
  Vector dboundary = params.W_s.transpose() * dpre;

  Vector dh = Vector::Zero(h);
  Vector dcell = Vector::Zero(h);
  for (std::size_t i = m; i-- > 0;) {
    dh += dB.col(static_cast<Eigen::Index>(i)).head(h);
    if (i + 1 == m) dh += dboundary.head(h);
    LstmInputGrads lg = lstm_backward(params.fwd, enc_cache.fwd[i], dh, dcell, g.fwd);
    g.phi_in.col(inst.input_ids[i]) += lg.input;
    dh = std::move(lg.hidden);
    dcell = std::move(lg.cell);
  }
  dh.setZero();
  dcell.setZero();
  for (std::size_t i = 0; i < m; ++i) {
    dh += dB.col(static_cast<Eigen::Index>(i)).tail(h);
    if (i == 0) dh += dboundary.tail(h);
    LstmInputGrads lg = lstm_backward(params.bwd, enc_cache.bwd[i], dh, dcell, g.bwd);
    g.phi_in.col(inst.input_ids[i]) += lg.input;
    dh = std::move(lg.hidden);
    dcell = std::move(lg.cell);
  }
  return total;
}

}  // namespace recomb
