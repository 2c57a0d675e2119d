#include "recomb/domain_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace recomb {

using nlohmann::json;

SlotPattern SlotPattern::parse(std::string_view text) {
  SlotPattern p;
  p.tokens = split_tokens(text);
  std::size_t slots = 0;
  for (std::size_t i = 0; i < p.tokens.size(); ++i) {
    const auto& tok = p.tokens[i];
    auto dollar = tok.find('$');
    if (dollar == std::string::npos) continue;
    if (tok.find('$', dollar + 1) != std::string::npos) throw ParseError("pattern token has two slots: " + tok);
    ++slots;
    p.slot = i;
    p.slot_prefix = tok.substr(0, dollar);
    p.slot_suffix = tok.substr(dollar + 1);
  }
  if (slots != 1) throw ParseError("pattern '" + std::string(text) + "' must contain exactly one $ slot");
  return p;
}

std::optional<std::string> SlotPattern::slot_value(std::string_view token) const {
  if (token.size() <= slot_prefix.size() + slot_suffix.size()) return std::nullopt;
  if (!token.starts_with(slot_prefix) || !token.ends_with(slot_suffix)) return std::nullopt;
  return std::string(token.substr(slot_prefix.size(), token.size() - slot_prefix.size() - slot_suffix.size()));
}

const EntityType* DomainConfig::find_entity_type(std::string_view category) const {
  for (const auto& t : entity_types)
    if (t.category == category) return &t;
  return nullptr;
}

Tokens DomainConfig::utterance_form(const EntityType& type, std::string_view value) const {
  for (const auto& e : entities)
    if (e.type == type.category && e.token == value && !e.utterance.empty()) return e.utterance;
  return Tokens{std::string(value)};
}

bool DomainConfig::accepts_entity(const EntityType& type, std::string_view value) const {
  bool listed_type = false;
  for (const auto& e : entities) {
    if (e.type != type.category) continue;
    listed_type = true;
    if (e.token == value) return true;
  }
  if (listed_type) return false;
  if (type.value_filter) return std::regex_match(value.begin(), value.end(), *type.value_filter);
  return true;
}

bool CopyRule::copyable(std::string_view token) const {
  if (token == kUnk || token == kEos) return false;
  if (!forbid_prefix.empty() && token.starts_with(forbid_prefix)) return false;
  if (allow) return std::regex_match(token.begin(), token.end(), *allow);
  return true;
}

void CopyRule::set_allow(std::string pattern) {
  allow_text = std::move(pattern);
  if (allow_text.empty())
    allow.reset();
  else
    allow.emplace(allow_text);
}

bool DomainConfig::is_copyable(std::string_view token) const { return copy.copyable(token); }

void DomainConfig::validate() const {
  std::set<std::string> reserved{"Root", "Sent"};
  std::set<std::string> set_like;
  for (const auto& p : phrase_types) set_like.insert(p.category);
  for (const auto& t : entity_types)
    if (!t.set_category.empty()) set_like.insert(t.set_category);
  for (const auto& c : set_like)
    if (reserved.count(c)) throw ParseError("category name '" + c + "' is reserved");

  std::set<std::string> seen;
  for (const auto& t : entity_types) {
    if (t.category.empty()) throw ParseError("entity type without category");
    if (reserved.count(t.category) || set_like.count(t.category))
      throw ParseError("entity type '" + t.category + "' collides with another category name");
    if (!seen.insert(t.category).second) throw ParseError("duplicate entity type '" + t.category + "'");
  }
  for (const auto& e : entities)
    if (!find_entity_type(e.type)) throw ParseError("entity '" + e.token + "' has unknown type '" + e.type + "'");
  for (const auto& p : phrase_types)
    if (p.category.empty()) throw ParseError("phrase type without category");
}

namespace {

std::vector<Tokens> token_lists(const json& arr) {
  std::vector<Tokens> out;
  for (const auto& s : arr) out.push_back(split_tokens(s.get<std::string>()));
  std::stable_sort(out.begin(), out.end(), [](const Tokens& a, const Tokens& b) { return a.size() > b.size(); });
  return out;
}

json token_lists_json(const std::vector<Tokens>& lists) {
  json arr = json::array();
  for (const auto& t : lists) arr.push_back(join_tokens(t));
  return arr;
}

}  // namespace

DomainConfig parse_domain_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("domain config: ") + e.what());
  }
  try {
    if (!j.contains("version")) throw ParseError("domain config: missing \"version\"");
    int version = j.at("version").get<int>();
    if (version != kDomainConfigVersion)
      throw ParseError("domain config: unsupported version " + std::to_string(version));

    DomainConfig c;
    for (const auto& t : j.value("entity_types", json::array())) {
      EntityType et;
      et.category = t.at("category").get<std::string>();
      et.pattern = SlotPattern::parse(t.at("pattern").get<std::string>());
      et.set_category = t.value("set_category", std::string());
      if (!et.set_category.empty()) et.set_pattern = SlotPattern::parse(t.at("set_pattern").get<std::string>());
      if (t.contains("value_filter")) {
        et.value_filter_text = t.at("value_filter").get<std::string>();
        et.value_filter.emplace(et.value_filter_text);
      }
      c.entity_types.push_back(std::move(et));
    }
    for (const auto& e : j.value("entities", json::array())) {
      EntityEntry entry;
      entry.token = e.at("token").get<std::string>();
      entry.type = e.at("type").get<std::string>();
      if (e.contains("utterance")) entry.utterance = split_tokens(e.at("utterance").get<std::string>());
      c.entities.push_back(std::move(entry));
    }
    for (const auto& p : j.value("phrase_types", json::array())) {
      PhraseType pt;
      pt.category = p.at("category").get<std::string>();
      pt.prefix = split_tokens(p.value("prefix", std::string()));
      pt.suffix = split_tokens(p.value("suffix", std::string()));
      if (p.contains("head")) pt.head = p.at("head").get<std::string>();
      c.phrase_types.push_back(std::move(pt));
    }
    c.question_prefixes = token_lists(j.value("question_prefixes", json::array()));
    c.question_suffixes = token_lists(j.value("question_suffixes", json::array()));
    if (j.contains("copy")) {
      const auto& cp = j.at("copy");
      c.copy.forbid_prefix = cp.value("forbid_prefix", std::string("_"));
      if (cp.contains("allow")) c.copy.set_allow(cp.at("allow").get<std::string>());
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("domain config: ") + e.what());
  } catch (const std::regex_error& e) {
    throw ParseError(std::string("domain config: bad regex: ") + e.what());
  }
}

DomainConfig load_domain_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open domain config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_domain_config(buf.str());
}

std::string serialize_domain_config(const DomainConfig& c) {
  json j;
  j["version"] = kDomainConfigVersion;
  j["entity_types"] = json::array();
  for (const auto& t : c.entity_types) {
    json e{{"category", t.category}, {"pattern", join_tokens(t.pattern.tokens)}};
    if (!t.set_category.empty()) {
      e["set_category"] = t.set_category;
      e["set_pattern"] = join_tokens(t.set_pattern.tokens);
    }
    if (t.value_filter) e["value_filter"] = t.value_filter_text;
    j["entity_types"].push_back(e);
  }
  j["entities"] = json::array();
  for (const auto& e : c.entities) {
    json x{{"token", e.token}, {"type", e.type}};
    if (!e.utterance.empty()) x["utterance"] = join_tokens(e.utterance);
    j["entities"].push_back(x);
  }
  j["phrase_types"] = json::array();
  for (const auto& p : c.phrase_types) {
    json x{{"category", p.category}, {"prefix", join_tokens(p.prefix)}, {"suffix", join_tokens(p.suffix)}};
    if (p.head) x["head"] = *p.head;
    j["phrase_types"].push_back(x);
  }
  j["question_prefixes"] = token_lists_json(c.question_prefixes);
  j["question_suffixes"] = token_lists_json(c.question_suffixes);
  json cp{{"forbid_prefix", c.copy.forbid_prefix}};
  if (c.copy.allow) cp["allow"] = c.copy.allow_text;
  j["copy"] = cp;
  return j.dump(2) + "\n";
}

}  // namespace recomb
