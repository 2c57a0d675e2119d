#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "recomb/corpus.hpp"

namespace recomb {

inline constexpr int kDomainConfigVersion = 1;

/// One logical-form token pattern with a single slot, e.g. `stateid ( $ )` or
/// `_$`. The slot element may carry a literal prefix/suffix around `$`.
struct SlotPattern {
  Tokens tokens;
  std::size_t slot = 0;
  std::string slot_prefix;
  std::string slot_suffix;

  static SlotPattern parse(std::string_view text);
  /// Entity value if `token` fits the slot element, else nullopt.
  std::optional<std::string> slot_value(std::string_view token) const;
  std::string slot_token(std::string_view value) const { return slot_prefix + std::string(value) + slot_suffix; }
};

/// How an entity is recognized in a logical form and what it abstracts to.
struct EntityType {
  std::string category;      // e.g. StateId
  SlotPattern pattern;       // e.g. stateid ( $ )
  std::string set_category;  // e.g. State; empty disables set-type abstraction
  SlotPattern set_pattern;   // e.g. const ( V0 , stateid ( $ ) )
  std::optional<std::regex> value_filter;
  std::string value_filter_text;
};

/// Explicit (entity, type) pair, optionally with a multi-token utterance form.
struct EntityEntry {
  std::string token;
  std::string type;
  Tokens utterance;
};

/// Declares that a logical form `prefix body suffix` whose body begins with
/// `head` denotes a set of `category`.
struct PhraseType {
  std::string category;
  Tokens prefix;
  Tokens suffix;
  std::optional<std::string> head;
};

/// Which surface tokens a Copy action may emit. Underscore-prefixed predicate
/// tokens and the reserved tokens are never copied.
struct CopyRule {
  std::string forbid_prefix = "_";
  std::optional<std::regex> allow;
  std::string allow_text;

  bool copyable(std::string_view token) const;
  void set_allow(std::string pattern);
};

struct DomainConfig {
  std::vector<EntityType> entity_types;
  std::vector<EntityEntry> entities;
  std::vector<PhraseType> phrase_types;
  std::vector<Tokens> question_prefixes;  // longest first
  std::vector<Tokens> question_suffixes;  // longest first
  CopyRule copy;

  const EntityType* find_entity_type(std::string_view category) const;
  /// Utterance-side surface of an entity value of the given type.
  Tokens utterance_form(const EntityType& type, std::string_view value) const;
  /// Whether `value` counts as an entity of `type` (explicit list and filter).
  bool accepts_entity(const EntityType& type, std::string_view value) const;
  bool is_copyable(std::string_view token) const;

  void validate() const;
};

DomainConfig parse_domain_config(std::string_view json_text);
DomainConfig load_domain_config(const std::filesystem::path& path);
std::string serialize_domain_config(const DomainConfig& config);

}  // namespace recomb
