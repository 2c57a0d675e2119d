#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace recomb {

using Tokens = std::vector<std::string>;

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kEos = "</s>";

/// Raised for malformed dataset, grammar, or config input. `line()` is 1-based,
/// or 0 when the error is not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Splits on single spaces. Empty fields (double spaces, leading or trailing
/// space) are rejected so that joining reproduces the input exactly.
Tokens split_tokens(std::string_view text);
std::string join_tokens(const Tokens& tokens);

struct Example {
  Tokens utterance;
  Tokens logical_form;

  bool operator==(const Example&) const = default;
};

/// Dense token <-> id map. `<unk>` and `</s>` are always ids 0 and 1.
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(const std::vector<Tokens>& corpus);

  /// Returns the existing id when the token is already present.
  int add(const std::string& token);

  std::optional<int> find(std::string_view token) const;
  int lookup_or_unk(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  int unk_id() const { return 0; }
  int eos_id() const { return 1; }

  /// Rebuilds from a serialized token list; the first two entries must be the
  /// reserved tokens.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int, Hash, std::equal_to<>> index_;
};

/// A training or test set. `lookup` holds the utterance view used for input
/// embedding lookup; it equals the surface utterance until replace_singletons
/// rewrites rare words to `<unk>`.
struct Dataset {
  std::vector<Example> examples;
  std::vector<Tokens> lookup;
  Vocabulary input_vocab;
  Vocabulary output_vocab;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
};

Example parse_example_line(std::string_view line, std::size_t line_number);
std::string format_example_line(const Example& example);

/// Builds a Dataset (with vocabularies) from examples in order.
Dataset make_dataset(std::vector<Example> examples);

Dataset parse_dataset(std::string_view text);
Dataset load_dataset(const std::filesystem::path& path);
std::string serialize_dataset(const std::vector<Example>& examples);
void write_dataset(const std::filesystem::path& path, const std::vector<Example>& examples);

/// Input tokens with corpus frequency exactly one are mapped to `<unk>` in the
/// lookup view and dropped from the input vocabulary. Surface forms and output
/// tokens are untouched. Idempotent.
Dataset replace_singletons(const Dataset& dataset);

}  // namespace recomb
