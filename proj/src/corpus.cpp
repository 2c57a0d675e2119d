#include "recomb/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace recomb {

namespace {

std::string with_line(const std::string& what, std::size_t line) {
  if (line == 0) return what;
  return "line " + std::to_string(line) + ": " + what;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

}  // namespace

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error(with_line(what, line)), line_(line) {}

Tokens split_tokens(std::string_view text) {
  Tokens out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    std::size_t end = text.find(' ', start);
    std::string_view field = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    if (field.empty()) throw ParseError("empty token (repeated, leading or trailing space)");
    if (std::any_of(field.begin(), field.end(), is_space))
      throw ParseError("token contains whitespace: '" + std::string(field) + "'");
    out.emplace_back(field);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() {
  add(std::string(kUnk));
  add(std::string(kEos));
}

Vocabulary::Vocabulary(const std::vector<Tokens>& corpus) : Vocabulary() {
  for (const auto& seq : corpus)
    for (const auto& tok : seq) add(tok);
}

int Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::lookup_or_unk(std::string_view token) const { return find(token).value_or(unk_id()); }

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 2 || tokens[0] != kUnk || tokens[1] != kEos)
    throw ParseError("vocabulary must start with <unk> and </s>");
  Vocabulary v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw ParseError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

Example parse_example_line(std::string_view line, std::size_t line_number) {
  auto tab = line.find('\t');
  if (tab == std::string_view::npos) throw ParseError("missing tab separator", line_number);
  if (line.find('\t', tab + 1) != std::string_view::npos) throw ParseError("more than one tab", line_number);
  std::string_view lhs = line.substr(0, tab);
  std::string_view rhs = line.substr(tab + 1);
  if (lhs.empty()) throw ParseError("empty utterance", line_number);
  if (rhs.empty()) throw ParseError("empty logical form", line_number);
  try {
    return Example{split_tokens(lhs), split_tokens(rhs)};
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line_number);
  }
}

std::string format_example_line(const Example& example) {
  return join_tokens(example.utterance) + '\t' + join_tokens(example.logical_form);
}

Dataset make_dataset(std::vector<Example> examples) {
  Dataset d;
  d.examples = std::move(examples);
  d.lookup.reserve(d.examples.size());
  for (const auto& ex : d.examples) {
    d.lookup.push_back(ex.utterance);
    for (const auto& t : ex.utterance) d.input_vocab.add(t);
    for (const auto& t : ex.logical_form) d.output_vocab.add(t);
  }
  return d;
}

Dataset parse_dataset(std::string_view text) {
  std::vector<Example> examples;
  std::size_t line_number = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_number;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    examples.push_back(parse_example_line(line, line_number));
  }
  if (examples.empty()) throw ParseError("dataset contains no examples");
  return make_dataset(std::move(examples));
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_dataset(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

std::string serialize_dataset(const std::vector<Example>& examples) {
  std::string out;
  for (const auto& ex : examples) {
    out += format_example_line(ex);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << serialize_dataset(examples);
}

Dataset replace_singletons(const Dataset& dataset) {
  std::map<std::string, std::size_t, std::less<>> freq;
  for (const auto& seq : dataset.lookup)
    for (const auto& t : seq) ++freq[t];

  Dataset out;
  out.examples = dataset.examples;
  out.output_vocab = dataset.output_vocab;
  out.lookup.reserve(dataset.lookup.size());
  for (const auto& seq : dataset.lookup) {
    Tokens view;
    view.reserve(seq.size());
    for (const auto& t : seq) {
      bool reserved = t == kUnk || t == kEos;
      view.push_back(!reserved && freq[t] == 1 ? std::string(kUnk) : t);
    }
    for (const auto& t : view) out.input_vocab.add(t);
    out.lookup.push_back(std::move(view));
  }
  return out;
}

}  // namespace recomb
