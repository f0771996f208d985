#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dqos/common.hpp"

namespace dqos {

// Minimal reader for the `[section]` / `key = value` files used for topology
// and experiment configs. Keys may repeat (list-valued entries such as links).
// `#` and `;` start comments.
class IniDocument {
 public:
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
  };

  static IniDocument parse(std::string_view text) {
    IniDocument doc;
    std::string section;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      if (auto c = line.find_first_of("#;"); c != std::string_view::npos) line = line.substr(0, c);
      line = trim(line);
      if (line.empty()) {
        if (eol == text.size()) break;
        continue;
      }
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) throw ConfigError("malformed section header", line_no);
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
      auto key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("empty key", line_no);
      doc.entries_.push_back({section, std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
      if (eol == text.size()) break;
    }
    return doc;
  }

  const std::vector<Entry>& entries() const { return entries_; }

  std::vector<const Entry*> all(std::string_view section, std::string_view key) const {
    std::vector<const Entry*> out;
    for (const auto& e : entries_)
      if (e.section == section && e.key == key) out.push_back(&e);
    return out;
  }

  std::vector<const Entry*> section(std::string_view section) const {
    std::vector<const Entry*> out;
    for (const auto& e : entries_)
      if (e.section == section) out.push_back(&e);
    return out;
  }

  // Last occurrence wins, so later files/overrides can shadow defaults.
  const Entry* find(std::string_view section, std::string_view key) const {
    const Entry* hit = nullptr;
    for (const auto& e : entries_)
      if (e.section == section && e.key == key) hit = &e;
    return hit;
  }

  bool has_section(std::string_view section) const {
    for (const auto& e : entries_)
      if (e.section == section) return true;
    return false;
  }

 private:
  std::vector<Entry> entries_;
};

inline double entry_number(const IniDocument::Entry& e) {
  try {
    return parse_double(e.value);
  } catch (const Error&) {
    throw ConfigError("'" + e.key + "' expects a number, got '" + e.value + "'", e.line);
  }
}

}  // namespace dqos
