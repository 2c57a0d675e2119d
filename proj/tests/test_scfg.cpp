#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "recomb/scfg.hpp"
#include "test_util.hpp"

using namespace recomb;

namespace {

Grammar geo_grammar() { return init_grammar(load_dataset(testutil::data_dir() / "geo_examples.tsv")); }
DomainConfig geo_config() { return load_domain_config(testutil::data_dir() / "geo_domain.json"); }

/// Rules of `out` that are not in `in`, as strings.
std::set<std::string> created(const Grammar& in, const Grammar& out) {
  std::set<std::string> before;
  for (const auto& r : in.rules) before.insert(to_string(canonicalize(r)));
  std::set<std::string> added;
  for (const auto& r : out.rules)
    if (!before.count(to_string(r))) added.insert(to_string(r));
  return added;
}

const std::string kBorder = "answer ( NV , ( state ( V0 ) , next_to ( V0 , NV ) , ";
const std::string kMountain = "answer ( NV , highest ( V0 , ( mountain ( V0 ) , loc ( V0 , NV ) , ";

}  // namespace

TEST(GoldenRules, AbsEntities) {
  Grammar g = geo_grammar();
  Grammar out = abs_entities(g, geo_config());
  std::set<std::string> expected{
      "Root -> what states border @StateId:0 ? ||| " + kBorder + "const ( V0 , stateid ( @StateId:0 ) ) ) )",
      "StateId -> texas ||| texas",
      "Root -> what is the highest mountain in @StateId:0 ? ||| " + kMountain +
          "const ( V0 , stateid ( @StateId:0 ) ) ) ) )",
      "StateId -> ohio ||| ohio",
  };
  EXPECT_EQ(created(g, out), expected);
  EXPECT_EQ(out.rules.size(), 6u);  // input rules are kept
}

TEST(GoldenRules, AbsWholePhrases) {
  Grammar g = geo_grammar();
  Grammar out = abs_whole_phrases(g, geo_config());
  std::set<std::string> expected{
      "Root -> what states border @State:0 ? ||| " + kBorder + "@State:0 ) )",
      "State -> states border texas ||| state ( V0 ) , next_to ( V0 , NV ) , const ( V0 , stateid ( texas ) )",
      "Root -> what is the highest mountain in @State:0 ? ||| " + kMountain + "@State:0 ) ) )",
  };
  EXPECT_EQ(created(g, out), expected);
}

TEST(GoldenRules, Concat2) {
  Grammar g = geo_grammar();
  Grammar out = concat_k(g, 2);
  ASSERT_EQ(out.rules.size(), 3u);
  EXPECT_EQ(to_string(out.rules[0]), "Root -> @Sent:0 </s> @Sent:1 ||| @Sent:0 </s> @Sent:1");
  EXPECT_EQ(out.rules[1].lhs, "Sent");
  EXPECT_EQ(out.rules[1].alpha, g.rules[0].alpha);
  EXPECT_EQ(out.rules[2].beta, g.rules[1].beta);
}

TEST(Concat, ThreeOnTwoRules) {
  Grammar out = concat_k(geo_grammar(), 3);
  EXPECT_EQ(out.rules.size(), 3u);
  EXPECT_EQ(to_string(out.rules[0]),
            "Root -> @Sent:0 </s> @Sent:1 </s> @Sent:2 ||| @Sent:0 </s> @Sent:1 </s> @Sent:2");
  EXPECT_THROW(concat_k(geo_grammar(), 1), std::invalid_argument);
}

TEST(Rules, CanonicalizeAndDeduplicate) {
  Rule a{"Root", {Symbol::terminal("x"), Symbol::nonterminal("E", 5)}, {Symbol::nonterminal("E", 5)}};
  Rule b{"Root", {Symbol::terminal("x"), Symbol::nonterminal("E", 0)}, {Symbol::nonterminal("E", 0)}};
  EXPECT_EQ(canonicalize(a), b);
  Grammar g;
  g.rules = {a, b, a};
  EXPECT_EQ(deduplicate(g).rules.size(), 1u);
  EXPECT_TRUE(is_aligned(a));
  Rule bad{"Root", {Symbol::nonterminal("E", 0)}, {Symbol::nonterminal("E", 1)}};
  EXPECT_FALSE(is_aligned(bad));
}

TEST(Strategies, ParseListAndCompose) {
  DomainConfig c = geo_config();
  auto chain = parse_strategy_list("abs-whole-phrases,abs-entities,concat:2", &c);
  ASSERT_EQ(chain.size(), 3u);
  EXPECT_EQ(chain[0].name, "abs-whole-phrases");
  EXPECT_EQ(chain[2].name, "concat:2");

  Grammar g = geo_grammar();
  Grammar manual = abs_whole_phrases(abs_entities(concat_k(g, 2), c), c);
  Strategy composed = compose(chain[0], compose(chain[1], chain[2]));
  Grammar via = composed(g);
  ASSERT_EQ(via.rules.size(), manual.rules.size());
  for (std::size_t i = 0; i < via.rules.size(); ++i) EXPECT_EQ(via.rules[i], manual.rules[i]);

  EXPECT_THROW(parse_strategy_list("", &c), std::invalid_argument);
  EXPECT_THROW(parse_strategy_list("abs-entities,,concat:2", &c), std::invalid_argument);
  EXPECT_THROW(parse_strategy_list("bogus", &c), std::invalid_argument);
  EXPECT_THROW(parse_strategy_list("concat:1", &c), std::invalid_argument);
  EXPECT_THROW(parse_strategy_list("concat:x", &c), std::invalid_argument);
  EXPECT_THROW(parse_strategy_list("abs-entities", nullptr), std::invalid_argument);
}

TEST(Sampler, MatchesEnumeratedDistribution) {
  Grammar g = abs_entities(geo_grammar(), geo_config());
  auto dist = testutil::DerivationEnumerator(g).distribution();
  double total = 0;
  for (const auto& [_, p] : dist) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);

  const std::pair<Tokens, Tokens> ohio{
      split_tokens("what states border ohio ?"),
      split_tokens(kBorder + "const ( V0 , stateid ( ohio ) ) ) )")};
  ASSERT_TRUE(dist.count(ohio));
  EXPECT_NEAR(dist.at(ohio), 1.0 / 8.0, 1e-15);

  Sampler sampler(g);
  Rng rng(11);
  const int n = 4000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    Example ex = sampler.sample(rng);
    ASSERT_TRUE(dist.count({ex.utterance, ex.logical_form})) << join_tokens(ex.utterance);
    hits += ex.utterance == ohio.first && ex.logical_form == ohio.second;
  }
  const double p = dist.at(ohio);
  EXPECT_LT(std::abs(hits - n * p), 5 * std::sqrt(n * p * (1 - p)));
}

TEST(Sampler, AlignedNonterminalsShareDerivation) {
  Grammar g = abs_entities(geo_grammar(), geo_config());
  Sampler sampler(g);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    Example ex = sampler.sample(rng);
    // The state in the utterance is the state in the logical form.
    const std::string& state = ex.utterance[ex.utterance.size() - 2];
    EXPECT_NE(std::find(ex.logical_form.begin(), ex.logical_form.end(), state), ex.logical_form.end());
  }
}

TEST(Sampler, Errors) {
  Grammar g;
  g.rules.push_back(Rule{"Root", {Symbol::nonterminal("Missing", 0)}, {Symbol::nonterminal("Missing", 0)}});
  EXPECT_EQ(unproductive_categories(g), std::vector<std::string>{"Missing"});
  Rng rng(1);
  try {
    Sampler(g).sample(rng);
    FAIL();
  } catch (const GrammarError& e) {
    EXPECT_NE(std::string(e.what()).find("Missing"), std::string::npos);
  }

  Grammar loop;
  loop.rules.push_back(Rule{"Root", {Symbol::nonterminal("Root", 0)}, {Symbol::nonterminal("Root", 0)}});
  EXPECT_FALSE(max_derivation_depth(loop).has_value());
  EXPECT_THROW(Sampler(loop, 20).sample(rng), GrammarError);
}

TEST(Grammar, DepthOfGeoGrammars) {
  DomainConfig c = geo_config();
  EXPECT_EQ(max_derivation_depth(geo_grammar()), 1);
  EXPECT_EQ(max_derivation_depth(abs_entities(geo_grammar(), c)), 2);
  EXPECT_EQ(max_derivation_depth(concat_k(abs_entities(geo_grammar(), c), 2)), 3);
}

TEST(GrammarFile, RoundTrip) {
  Grammar g = concat_k(abs_whole_phrases(abs_entities(geo_grammar(), geo_config()), geo_config()), 2);
  std::string text = serialize_grammar(g);
  Grammar back = parse_grammar(text);
  EXPECT_EQ(back.root, g.root);
  EXPECT_EQ(back.rules, g.rules);
  EXPECT_EQ(serialize_grammar(back), text);
}

TEST(GrammarFile, Errors) {
  EXPECT_THROW(parse_grammar("nope\n"), ParseError);
  EXPECT_THROW(parse_grammar("scfg-grammar 1\nroot Root\nRoot a ||| b\n"), ParseError);
  EXPECT_THROW(parse_grammar("scfg-grammar 1\nroot Root\nRoot -> a b\n"), ParseError);
  try {
    parse_grammar("scfg-grammar 1\nroot Root\nRoot -> a ||| b\nRoot -> @E:0 ||| @E:1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
  Grammar g;
  g.rules.push_back(Rule{"Root", terminals({"@odd"}), terminals({"x"})});
  EXPECT_THROW(serialize_grammar(g), GrammarError);
}
