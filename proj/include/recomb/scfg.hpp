#pragma once

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "recomb/corpus.hpp"
#include "recomb/domain_config.hpp"
#include "recomb/random.hpp"

namespace recomb {

inline constexpr std::string_view kRootCategory = "Root";
inline constexpr std::string_view kSentCategory = "Sent";
inline constexpr int kDefaultMaxDerivationDepth = 20;

/// Terminal token, or a nonterminal category carrying an alignment id that
/// links it to its partner on the other side of the rule.
struct Symbol {
  std::string value;
  int id = -1;

  static Symbol terminal(std::string token) { return Symbol{std::move(token), -1}; }
  static Symbol nonterminal(std::string category, int alignment) { return Symbol{std::move(category), alignment}; }

  bool is_terminal() const { return id < 0; }
  auto operator<=>(const Symbol&) const = default;
};

using Symbols = std::vector<Symbol>;

Symbols terminals(const Tokens& tokens);
std::string to_string(const Symbols& symbols);

struct Rule {
  std::string lhs;
  Symbols alpha;  // utterance side
  Symbols beta;   // logical-form side

  auto operator<=>(const Rule&) const = default;
};

std::string to_string(const Rule& rule);

/// Both sides carry the same multiset of (category, id) nonterminals and ids
/// are unique within a side.
bool is_aligned(const Rule& rule);

/// Renumbers alignment ids 0, 1, ... in order of first appearance in alpha, so
/// rules differing only in id choice compare equal.
Rule canonicalize(Rule rule);

struct Grammar {
  std::vector<Rule> rules;
  std::string root = std::string(kRootCategory);

  std::size_t count(std::string_view lhs) const;
};

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Canonicalizes every rule and drops repeats, keeping first occurrences.
Grammar deduplicate(Grammar grammar);

/// Categories used on some right-hand side that have no rule of their own.
std::vector<std::string> unproductive_categories(const Grammar& grammar);

/// Longest derivation chain from the root in rule applications, or nullopt if
/// a reachable category can derive itself.
std::optional<int> max_derivation_depth(const Grammar& grammar);

Grammar init_grammar(const std::vector<Example>& examples);
Grammar init_grammar(const Dataset& dataset);

Grammar abs_entities(const Grammar& in, const DomainConfig& config);
Grammar abs_whole_phrases(const Grammar& in, const DomainConfig& config);
Grammar concat_k(const Grammar& in, int k);

/// A grammar induction strategy; composition applies `inner` first.
struct Strategy {
  std::string name;
  std::function<Grammar(const Grammar&)> apply;

  Grammar operator()(const Grammar& g) const { return apply(g); }
};

Strategy identity_strategy();
Strategy abs_entities_strategy(DomainConfig config);
Strategy abs_whole_phrases_strategy(DomainConfig config);
Strategy concat_strategy(int k);
Strategy compose(Strategy outer, Strategy inner);

/// Parses one of `abs-entities`, `abs-whole-phrases`, `concat:k`.
Strategy parse_strategy(std::string_view name, const DomainConfig* config);
/// Comma list read outermost-first: "a,b,c" is a(b(c(G))).
std::vector<Strategy> parse_strategy_list(std::string_view list, const DomainConfig* config);

/// Uniform top-down sampler. Aligned nonterminals share one sub-derivation.
class Sampler {
 public:
  explicit Sampler(const Grammar& grammar, int max_depth = kDefaultMaxDerivationDepth);
  Example sample(Rng& rng) const;

 private:
  std::pair<Tokens, Tokens> derive(std::string_view category, int depth, Rng& rng) const;

  const Grammar* grammar_;
  int max_depth_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_lhs_;
};

Example sample_example(const Grammar& grammar, Rng& rng, int max_depth = kDefaultMaxDerivationDepth);

std::string serialize_grammar(const Grammar& grammar);
Grammar parse_grammar(std::string_view text);
Grammar load_grammar(const std::filesystem::path& path);
void write_grammar(const std::filesystem::path& path, const Grammar& grammar);

}  // namespace recomb
