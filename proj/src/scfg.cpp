#include "recomb/scfg.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace recomb {

namespace {

constexpr std::string_view kGrammarHeader = "scfg-grammar 1";

int next_alignment_id(const Rule& rule) {
  int next = 0;
  for (const auto& s : rule.alpha) next = std::max(next, s.id + 1);
  for (const auto& s : rule.beta) next = std::max(next, s.id + 1);
  return next;
}

bool terminals_equal(const Symbols& seq, std::size_t at, const Tokens& tokens) {
  if (at + tokens.size() > seq.size()) return false;
  for (std::size_t k = 0; k < tokens.size(); ++k)
    if (!seq[at + k].is_terminal() || seq[at + k].value != tokens[k]) return false;
  return true;
}

std::vector<std::size_t> find_occurrences(const Symbols& seq, const Tokens& tokens) {
  std::vector<std::size_t> out;
  if (tokens.empty()) return out;
  for (std::size_t q = 0; q + tokens.size() <= seq.size(); ++q)
    if (terminals_equal(seq, q, tokens)) out.push_back(q);
  return out;
}

Symbols splice(const Symbols& seq, std::size_t at, std::size_t len, const Symbol& replacement) {
  Symbols out(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(at));
  out.push_back(replacement);
  out.insert(out.end(), seq.begin() + static_cast<std::ptrdiff_t>(at + len), seq.end());
  return out;
}

struct PatternMatch {
  std::size_t start;  // first beta index covered by the pattern
  std::string value;  // entity value bound to the slot
};

/// All placements of `pattern` on terminals of `beta` whose slot value is an
/// accepted entity of `type`.
std::vector<PatternMatch> match_pattern(const Symbols& beta, const SlotPattern& pattern, const EntityType& type,
                                        const DomainConfig& config) {
  std::vector<PatternMatch> out;
  const std::size_t len = pattern.tokens.size();
  for (std::size_t s = 0; s + len <= beta.size(); ++s) {
    std::optional<std::string> value;
    bool ok = true;
    for (std::size_t k = 0; k < len && ok; ++k) {
      const Symbol& sym = beta[s + k];
      if (!sym.is_terminal()) {
        ok = false;
      } else if (k == pattern.slot) {
        value = pattern.slot_value(sym.value);
        ok = value.has_value();
      } else {
        ok = sym.value == pattern.tokens[k];
      }
    }
    if (ok && config.accepts_entity(type, *value)) out.push_back({s, *value});
  }
  return out;
}

struct EntityPairing {
  const EntityType* type;
  PatternMatch match;
  std::size_t alpha_at;
  Tokens surface;
};

/// Every (utterance occurrence, logical-form occurrence) pair of one entity,
/// located with `pattern_of(type)` on the logical-form side.
template <class PatternOf>
std::vector<EntityPairing> entity_pairings(const Rule& rule, const DomainConfig& config, PatternOf pattern_of) {
  std::vector<EntityPairing> out;
  for (const auto& type : config.entity_types) {
    const SlotPattern* pattern = pattern_of(type);
    if (!pattern) continue;
    for (auto& m : match_pattern(rule.beta, *pattern, type, config)) {
      Tokens surface = config.utterance_form(type, m.value);
      for (std::size_t q : find_occurrences(rule.alpha, surface)) out.push_back({&type, m, q, surface});
    }
  }
  return out;
}

std::optional<Symbols> strip_question(const Symbols& alpha, const DomainConfig& config) {
  std::size_t begin = 0;
  std::size_t end = alpha.size();
  for (const auto& p : config.question_prefixes) {
    if (p.size() < alpha.size() && terminals_equal(alpha, 0, p)) {
      begin = p.size();
      break;
    }
  }
  for (const auto& s : config.question_suffixes) {
    if (s.size() <= end - begin && end - s.size() > begin && terminals_equal(alpha, end - s.size(), s)) {
      end -= s.size();
      break;
    }
  }
  if (begin >= end) return std::nullopt;
  return Symbols(alpha.begin() + static_cast<std::ptrdiff_t>(begin), alpha.begin() + static_cast<std::ptrdiff_t>(end));
}

std::optional<Rule> phrase_rule(const Rule& rule, const DomainConfig& config) {
  for (const auto& pt : config.phrase_types) {
    const auto& beta = rule.beta;
    if (beta.size() <= pt.prefix.size() + pt.suffix.size()) continue;
    if (!terminals_equal(beta, 0, pt.prefix)) continue;
    if (!terminals_equal(beta, beta.size() - pt.suffix.size(), pt.suffix)) continue;
    Symbols body(beta.begin() + static_cast<std::ptrdiff_t>(pt.prefix.size()),
                 beta.end() - static_cast<std::ptrdiff_t>(pt.suffix.size()));
    if (pt.head && (!body.front().is_terminal() || body.front().value != *pt.head)) continue;
    auto stripped = strip_question(rule.alpha, config);
    if (!stripped) continue;
    Rule out{pt.category, std::move(*stripped), std::move(body)};
    if (!is_aligned(out)) continue;
    return out;
  }
  return std::nullopt;
}

void push_canonical(std::vector<Rule>& rules, std::set<Rule>& seen, Rule rule) {
  rule = canonicalize(std::move(rule));
  if (seen.insert(rule).second) rules.push_back(std::move(rule));
}

}  // namespace

Symbols terminals(const Tokens& tokens) {
  Symbols out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(Symbol::terminal(t));
  return out;
}

std::string to_string(const Symbols& symbols) {
  std::string out;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i) out += ' ';
    const auto& s = symbols[i];
    out += s.is_terminal() ? s.value : "@" + s.value + ":" + std::to_string(s.id);
  }
  return out;
}

std::string to_string(const Rule& rule) {
  return rule.lhs + " -> " + to_string(rule.alpha) + " ||| " + to_string(rule.beta);
}

bool is_aligned(const Rule& rule) {
  auto collect = [](const Symbols& side, std::multiset<std::pair<std::string, int>>& out) {
    std::set<int> ids;
    for (const auto& s : side) {
      if (s.is_terminal()) continue;
      if (!ids.insert(s.id).second) return false;
      out.emplace(s.value, s.id);
    }
    return true;
  };
  std::multiset<std::pair<std::string, int>> a, b;
  return collect(rule.alpha, a) && collect(rule.beta, b) && a == b;
}

Rule canonicalize(Rule rule) {
  std::map<int, int> remap;
  for (auto& s : rule.alpha)
    if (!s.is_terminal()) {
      auto [it, inserted] = remap.emplace(s.id, static_cast<int>(remap.size()));
      s.id = it->second;
    }
  for (auto& s : rule.beta)
    if (!s.is_terminal()) {
      auto it = remap.find(s.id);
      s.id = it == remap.end() ? -2 - s.id : it->second;  // unmatched ids stay invalid
    }
  return rule;
}

std::size_t Grammar::count(std::string_view lhs) const {
  return static_cast<std::size_t>(std::count_if(rules.begin(), rules.end(), [&](const Rule& r) { return r.lhs == lhs; }));
}

Grammar deduplicate(Grammar grammar) {
  Grammar out;
  out.root = grammar.root;
  std::set<Rule> seen;
  for (auto& r : grammar.rules) push_canonical(out.rules, seen, std::move(r));
  return out;
}

std::vector<std::string> unproductive_categories(const Grammar& grammar) {
  std::set<std::string, std::less<>> defined;
  for (const auto& r : grammar.rules) defined.insert(r.lhs);
  std::set<std::string> missing;
  for (const auto& r : grammar.rules)
    for (const auto& s : r.alpha)
      if (!s.is_terminal() && !defined.count(s.value)) missing.insert(s.value);
  if (!defined.count(grammar.root)) missing.insert(grammar.root);
  return {missing.begin(), missing.end()};
}

std::optional<int> max_derivation_depth(const Grammar& grammar) {
  std::map<std::string, std::set<std::string>, std::less<>> edges;
  for (const auto& r : grammar.rules) {
    auto& out = edges[r.lhs];
    for (const auto& s : r.alpha)
      if (!s.is_terminal()) out.insert(s.value);
  }
  // Depth-first search with an on-stack marker for cycle detection.
  std::map<std::string, int, std::less<>> depth;
  std::set<std::string, std::less<>> on_stack;
  std::function<std::optional<int>(const std::string&)> visit = [&](const std::string& cat) -> std::optional<int> {
    if (auto it = depth.find(cat); it != depth.end()) return it->second;
    if (on_stack.count(cat)) return std::nullopt;
    on_stack.insert(cat);
    int best = 0;
    auto it = edges.find(cat);
    if (it != edges.end()) {
      for (const auto& child : it->second) {
        auto d = visit(child);
        if (!d) return std::nullopt;
        best = std::max(best, *d);
      }
    }
    on_stack.erase(cat);
    int mine = (it == edges.end() ? 0 : 1) + best;
    depth[cat] = mine;
    return mine;
  };
  return visit(grammar.root);
}

Grammar init_grammar(const std::vector<Example>& examples) {
  if (examples.empty()) throw std::invalid_argument("init_grammar: empty dataset");
  Grammar g;
  for (const auto& ex : examples) g.rules.push_back(Rule{g.root, terminals(ex.utterance), terminals(ex.logical_form)});
  return g;
}

Grammar init_grammar(const Dataset& dataset) { return init_grammar(dataset.examples); }

Grammar abs_entities(const Grammar& in, const DomainConfig& config) {
  Grammar out;
  out.root = in.root;
  std::set<Rule> seen;
  for (const auto& rule : in.rules) {
    push_canonical(out.rules, seen, rule);
    auto pairings = entity_pairings(rule, config, [](const EntityType& t) { return &t.pattern; });
    for (const auto& p : pairings) {
      const int id = next_alignment_id(rule);
      Symbol nt = Symbol::nonterminal(p.type->category, id);
      const std::size_t slot_at = p.match.start + p.type->pattern.slot;
      Rule abstracted{rule.lhs, splice(rule.alpha, p.alpha_at, p.surface.size(), nt),
                      splice(rule.beta, slot_at, 1, nt)};
      Rule typed{p.type->category, terminals(p.surface), Symbols{rule.beta[slot_at]}};
      push_canonical(out.rules, seen, std::move(abstracted));
      push_canonical(out.rules, seen, std::move(typed));
    }
  }
  return out;
}

Grammar abs_whole_phrases(const Grammar& in, const DomainConfig& config) {
  Grammar out;
  out.root = in.root;
  std::set<Rule> seen;
  for (const auto& rule : in.rules) {
    push_canonical(out.rules, seen, rule);
    auto pairings = entity_pairings(rule, config, [](const EntityType& t) -> const SlotPattern* {
      return t.set_category.empty() ? nullptr : &t.set_pattern;
    });
    for (const auto& p : pairings) {
      const int id = next_alignment_id(rule);
      Symbol nt = Symbol::nonterminal(p.type->set_category, id);
      push_canonical(out.rules, seen,
                     Rule{rule.lhs, splice(rule.alpha, p.alpha_at, p.surface.size(), nt),
                          splice(rule.beta, p.match.start, p.type->set_pattern.tokens.size(), nt)});
    }
    if (auto phrase = phrase_rule(rule, config)) push_canonical(out.rules, seen, std::move(*phrase));
  }
  return out;
}

Grammar concat_k(const Grammar& in, int k) {
  if (k < 2) throw std::invalid_argument("concat_k: k must be at least 2");
  Grammar out;
  out.root = in.root;
  std::set<Rule> seen;
  Rule top{in.root, {}, {}};
  for (int i = 0; i < k; ++i) {
    if (i) {
      top.alpha.push_back(Symbol::terminal(std::string(kEos)));
      top.beta.push_back(Symbol::terminal(std::string(kEos)));
    }
    top.alpha.push_back(Symbol::nonterminal(std::string(kSentCategory), i));
    top.beta.push_back(Symbol::nonterminal(std::string(kSentCategory), i));
  }
  push_canonical(out.rules, seen, std::move(top));
  for (const auto& rule : in.rules) {
    Rule r = rule;
    if (r.lhs == in.root) r.lhs = std::string(kSentCategory);
    push_canonical(out.rules, seen, std::move(r));
  }
  return out;
}

Strategy identity_strategy() {
  return {"identity", [](const Grammar& g) { return g; }};
}

Strategy abs_entities_strategy(DomainConfig config) {
  return {"abs-entities", [c = std::move(config)](const Grammar& g) { return abs_entities(g, c); }};
}

Strategy abs_whole_phrases_strategy(DomainConfig config) {
  return {"abs-whole-phrases", [c = std::move(config)](const Grammar& g) { return abs_whole_phrases(g, c); }};
}

Strategy concat_strategy(int k) {
  return {"concat:" + std::to_string(k), [k](const Grammar& g) { return concat_k(g, k); }};
}

Strategy compose(Strategy outer, Strategy inner) {
  std::string name = outer.name + "," + inner.name;
  return {std::move(name), [o = std::move(outer.apply), i = std::move(inner.apply)](const Grammar& g) { return o(i(g)); }};
}

Strategy parse_strategy(std::string_view name, const DomainConfig* config) {
  auto need_config = [&]() -> const DomainConfig& {
    if (!config) throw std::invalid_argument("strategy '" + std::string(name) + "' requires a domain config");
    return *config;
  };
  if (name == "abs-entities") {
    const auto& c = need_config();
    if (c.entity_types.empty()) throw std::invalid_argument("abs-entities: domain config declares no entity types");
    return abs_entities_strategy(c);
  }
  if (name == "abs-whole-phrases") {
    const auto& c = need_config();
    if (c.entity_types.empty() && c.phrase_types.empty())
      throw std::invalid_argument("abs-whole-phrases: domain config declares no entity or phrase types");
    return abs_whole_phrases_strategy(c);
  }
  if (name.starts_with("concat:")) {
    std::string_view digits = name.substr(7);
    int k = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || k < 2)
      throw std::invalid_argument("concat:k needs an integer k >= 2, got '" + std::string(name) + "'");
    return concat_strategy(k);
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

std::vector<Strategy> parse_strategy_list(std::string_view list, const DomainConfig* config) {
  std::vector<Strategy> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    std::string_view item = list.substr(start, end - start);
    if (item.empty()) throw std::invalid_argument("empty strategy name in list '" + std::string(list) + "'");
    out.push_back(parse_strategy(item, config));
    start = end + 1;
  }
  return out;
}

Sampler::Sampler(const Grammar& grammar, int max_depth) : grammar_(&grammar), max_depth_(max_depth) {
  for (std::size_t i = 0; i < grammar.rules.size(); ++i) by_lhs_[grammar.rules[i].lhs].push_back(i);
}

Example Sampler::sample(Rng& rng) const {
  auto [x, y] = derive(grammar_->root, 1, rng);
  return Example{std::move(x), std::move(y)};
}

std::pair<Tokens, Tokens> Sampler::derive(std::string_view category, int depth, Rng& rng) const {
  if (depth > max_depth_)
    throw GrammarError("derivation depth cap " + std::to_string(max_depth_) + " exceeded at category " +
                       std::string(category));
  auto it = by_lhs_.find(category);
  if (it == by_lhs_.end() || it->second.empty())
    throw GrammarError("unproductive category '" + std::string(category) + "' has no rules");
  const Rule& rule = grammar_->rules[it->second[rng.uniform_index(it->second.size())]];

  std::map<int, std::pair<Tokens, Tokens>> sub;
  Tokens x;
  for (const auto& s : rule.alpha) {
    if (s.is_terminal()) {
      x.push_back(s.value);
      continue;
    }
    auto& d = sub[s.id] = derive(s.value, depth + 1, rng);
    x.insert(x.end(), d.first.begin(), d.first.end());
  }
  Tokens y;
  for (const auto& s : rule.beta) {
    if (s.is_terminal()) {
      y.push_back(s.value);
      continue;
    }
    auto found = sub.find(s.id);
    if (found == sub.end()) throw GrammarError("misaligned rule: " + to_string(rule));
    y.insert(y.end(), found->second.second.begin(), found->second.second.end());
  }
  return {std::move(x), std::move(y)};
}

Example sample_example(const Grammar& grammar, Rng& rng, int max_depth) {
  return Sampler(grammar, max_depth).sample(rng);
}

std::string serialize_grammar(const Grammar& grammar) {
  std::string out(kGrammarHeader);
  out += "\nroot " + grammar.root + "\n";
  auto check = [](const Symbols& side) {
    for (const auto& s : side)
      if (s.is_terminal() && (s.value.starts_with('@') || s.value == "|||"))
        throw GrammarError("terminal '" + s.value + "' cannot be serialized");
  };
  for (const auto& r : grammar.rules) {
    check(r.alpha);
    check(r.beta);
    out += to_string(r);
    out += '\n';
  }
  return out;
}

namespace {

Symbol parse_symbol(const std::string& token, std::size_t line) {
  if (!token.starts_with('@')) return Symbol::terminal(token);
  auto colon = token.rfind(':');
  if (colon == std::string::npos || colon < 2 || colon + 1 == token.size())
    throw ParseError("bad nonterminal '" + token + "'", line);
  int id = 0;
  auto [ptr, ec] = std::from_chars(token.data() + colon + 1, token.data() + token.size(), id);
  if (ec != std::errc() || ptr != token.data() + token.size() || id < 0)
    throw ParseError("bad alignment id in '" + token + "'", line);
  return Symbol::nonterminal(token.substr(1, colon - 1), id);
}

}  // namespace

Grammar parse_grammar(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  Grammar g;
  g.rules.clear();
  if (!std::getline(in, line) || line != kGrammarHeader) throw ParseError("missing grammar header", 1);
  ++line_number;
  if (!std::getline(in, line) || !line.starts_with("root ") || line.size() == 5)
    throw ParseError("missing root declaration", 2);
  ++line_number;
  g.root = line.substr(5);
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    Tokens toks;
    try {
      toks = split_tokens(line);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_number);
    }
    if (toks.size() < 2 || toks[1] != "->") throw ParseError("expected 'LHS -> ...'", line_number);
    auto sep = std::find(toks.begin() + 2, toks.end(), "|||");
    if (sep == toks.end()) throw ParseError("missing ||| separator", line_number);
    Rule r{toks[0], {}, {}};
    for (auto it = toks.begin() + 2; it != sep; ++it) r.alpha.push_back(parse_symbol(*it, line_number));
    for (auto it = sep + 1; it != toks.end(); ++it) r.beta.push_back(parse_symbol(*it, line_number));
    if (r.alpha.empty() || r.beta.empty()) throw ParseError("empty rule side", line_number);
    if (!is_aligned(r)) throw ParseError("nonterminals not aligned: " + line, line_number);
    g.rules.push_back(std::move(r));
  }
  return g;
}

Grammar load_grammar(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open grammar file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_grammar(buf.str());
}

void write_grammar(const std::filesystem::path& path, const Grammar& grammar) {
  std::string text = serialize_grammar(grammar);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace recomb
