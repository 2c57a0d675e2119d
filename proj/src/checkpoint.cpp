#include "recomb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace recomb {

namespace {

constexpr std::string_view kMagic = "RCMBCKPT";

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  void f64(double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + k])) << (8 * k);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ParseError("checkpoint truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::map<std::string, std::string> with_copy_meta(const Seq2SeqModel& model, std::map<std::string, std::string> meta) {
  meta["copy_enabled"] = model.copy_enabled ? "1" : "0";
  meta["copy_forbid_prefix"] = model.copy.forbid_prefix;
  meta["copy_allow"] = model.copy.allow_text;
  return meta;
}

}  // namespace

std::string serialize_checkpoint(const Seq2SeqModel& model, const std::map<std::string, std::string>& meta) {
  model.params.check_shapes();
  Writer w;
  w.raw(kMagic);
  w.u32(kCheckpointVersion);
  auto full_meta = with_copy_meta(model, meta);
  w.u32(static_cast<std::uint32_t>(full_meta.size()));
  for (const auto& [k, v] : full_meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(2);
  for (auto [name, vocab] : {std::pair{"input", &model.input_vocab}, std::pair{"output", &model.output_vocab}}) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(vocab->size()));
    for (const auto& t : vocab->tokens()) w.str(t);
  }
  std::uint32_t tensors = 0;
  model.params.visit([&](const char*, const auto&) { ++tensors; });
  w.u32(tensors);
  model.params.visit([&](const char* name, const auto& t) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) w.f64(t(r, c));
  });
  return w.take();
}

Seq2SeqModel parse_checkpoint(std::string_view bytes, std::map<std::string, std::string>* meta_out) {
  Reader r(bytes);
  if (r.raw(kMagic.size()) != kMagic) throw ParseError("not a checkpoint file (bad magic)");
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));

  std::map<std::string, std::string> meta;
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string k = r.str();
    meta[k] = r.str();
  }
  Seq2SeqModel model;
  if (r.u32() != 2) throw ParseError("checkpoint must hold exactly two vocabularies");
  for (const char* expected : {"input", "output"}) {
    if (r.str() != expected) throw ParseError(std::string("expected vocabulary '") + expected + "'");
    std::vector<std::string> tokens(r.u32());
    for (auto& t : tokens) t = r.str();
    (std::string_view(expected) == "input" ? model.input_vocab : model.output_vocab) = Vocabulary::from_tokens(tokens);
  }

  std::map<std::string, Matrix> read;
  for (std::uint32_t n = r.u32(); n > 0; --n) {
    std::string name = r.str();
    std::uint32_t rows = r.u32();
    std::uint32_t cols = r.u32();
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
      for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f64();
    read[name] = std::move(m);
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint");

  model.params.visit([&](const char* name, auto& t) {
    auto it = read.find(name);
    if (it == read.end()) throw ParseError(std::string("checkpoint missing tensor ") + name);
    if (t.ColsAtCompileTime == 1 && it->second.cols() != 1)
      throw ParseError(std::string("tensor ") + name + " must be a column vector");
    t = it->second;
  });
  try {
    model.params.check_shapes();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (static_cast<std::size_t>(model.params.phi_in.cols()) != model.input_vocab.size() ||
      static_cast<std::size_t>(model.params.phi_out.cols()) != model.output_vocab.size())
    throw ParseError("checkpoint: embedding tables do not match vocabularies");

  model.copy_enabled = meta["copy_enabled"] == "1";
  model.copy.forbid_prefix = meta["copy_forbid_prefix"];
  model.copy.set_allow(meta["copy_allow"]);
  if (meta_out) *meta_out = std::move(meta);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const Seq2SeqModel& model,
                     const std::map<std::string, std::string>& meta) {
  std::string bytes = serialize_checkpoint(model, meta);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Seq2SeqModel load_checkpoint(const std::filesystem::path& path, std::map<std::string, std::string>* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), meta);
}

}  // namespace recomb
