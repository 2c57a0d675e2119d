#include <gtest/gtest.h>

#include "recomb/domain_config.hpp"
#include "test_util.hpp"

using namespace recomb;

TEST(SlotPattern, ParseAndMatch) {
  SlotPattern p = SlotPattern::parse("stateid ( $ )");
  EXPECT_EQ(p.tokens.size(), 4u);
  EXPECT_EQ(p.slot, 2u);
  EXPECT_EQ(p.slot_value("texas"), "texas");

  SlotPattern q = SlotPattern::parse("_$");
  EXPECT_EQ(q.slot_value("_ent:14"), "ent:14");
  EXPECT_FALSE(q.slot_value("ent:14").has_value());
  EXPECT_FALSE(q.slot_value("_").has_value());
  EXPECT_EQ(q.slot_token("ent:03"), "_ent:03");

  EXPECT_THROW(SlotPattern::parse("stateid ( x )"), ParseError);
  EXPECT_THROW(SlotPattern::parse("$ $"), ParseError);
}

TEST(CopyRule, ForbiddenAndReserved) {
  CopyRule c;
  EXPECT_TRUE(c.copyable("texas"));
  EXPECT_FALSE(c.copyable("_rel:01"));
  EXPECT_FALSE(c.copyable("<unk>"));
  EXPECT_FALSE(c.copyable("</s>"));
  c.set_allow("ent:[0-9]+");
  EXPECT_TRUE(c.copyable("ent:07"));
  EXPECT_FALSE(c.copyable("of"));
}

TEST(DomainConfig, LoadsGeoConfig) {
  DomainConfig c = load_domain_config(testutil::data_dir() / "geo_domain.json");
  ASSERT_EQ(c.entity_types.size(), 1u);
  EXPECT_EQ(c.entity_types[0].category, "StateId");
  EXPECT_EQ(c.entity_types[0].set_category, "State");
  ASSERT_EQ(c.question_prefixes.size(), 2u);
  EXPECT_EQ(c.question_prefixes[0].size(), 3u);  // longest first
  ASSERT_EQ(c.phrase_types.size(), 1u);
  EXPECT_EQ(c.phrase_types[0].head, "state");
}

TEST(DomainConfig, RoundTrip) {
  DomainConfig c = load_domain_config(testutil::data_dir() / "geo_domain.json");
  std::string once = serialize_domain_config(c);
  EXPECT_EQ(serialize_domain_config(parse_domain_config(once)), once);
}

TEST(DomainConfig, Errors) {
  EXPECT_THROW(parse_domain_config("{"), ParseError);
  EXPECT_THROW(parse_domain_config("{}"), ParseError);
  EXPECT_THROW(parse_domain_config(R"({"version": 2})"), ParseError);
  EXPECT_THROW(parse_domain_config(R"({"version": 1, "entity_types": [{"category": "Root", "pattern": "$"}]})"),
               ParseError);
  EXPECT_THROW(parse_domain_config(R"({"version": 1, "entities": [{"token": "a", "type": "Nope"}]})"), ParseError);
  EXPECT_THROW(
      parse_domain_config(R"({"version": 1, "entity_types": [{"category": "E", "pattern": "$", "value_filter": "("}]})"),
      ParseError);
}

TEST(DomainConfig, ExplicitEntityListOverridesFilter) {
  DomainConfig c = parse_domain_config(R"j({"version": 1,
    "entity_types": [{"category": "City", "pattern": "cityid ( $ )"}],
    "entities": [{"token": "new_york", "type": "City", "utterance": "new york"}]})j");
  const EntityType& t = c.entity_types[0];
  EXPECT_TRUE(c.accepts_entity(t, "new_york"));
  EXPECT_FALSE(c.accepts_entity(t, "boston"));
  EXPECT_EQ(c.utterance_form(t, "new_york"), (Tokens{"new", "york"}));
}
