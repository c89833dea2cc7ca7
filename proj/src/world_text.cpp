#include <algorithm>
#include <sstream>

#include "banditmatch/dialogworld.hpp"

namespace bmatch::world {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

WorldSchema parse_world(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<Domain> domains;
  Domain* current = nullptr;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 2 || tok[0] != "world") throw ParseError("expected 'world v1' header", lineno);
      if (tok[1] != "v1") throw VersionError("world format version '" + tok[1] + "' unsupported");
      header = true;
      continue;
    }
    const std::string& kw = tok[0];
    if (kw == "domain") {
      if (current) throw ParseError("nested domain (missing 'end')", lineno);
      if (tok.size() != 2) throw ParseError("expected 'domain <name>'", lineno);
      domains.push_back(Domain{});
      current = &domains.back();
      current->name = tok[1];
    } else if (kw == "end") {
      if (!current) throw ParseError("'end' outside a domain", lineno);
      current = nullptr;
    } else if (!current) {
      throw ParseError("'" + kw + "' outside a domain", lineno);
    } else if (kw == "informable") {
      if (tok.size() < 3) throw ParseError("informable slot needs a name and values", lineno);
      if (!current->entities.empty()) throw ParseError("informable slots must precede entities", lineno);
      current->informable.push_back(tok[1]);
      current->values.emplace_back(tok.begin() + 2, tok.end());
    } else if (kw == "requestable") {
      if (tok.size() < 2) throw ParseError("requestable needs slot names", lineno);
      current->requestable.insert(current->requestable.end(), tok.begin() + 1, tok.end());
    } else if (kw == "entity") {
      std::vector<int> e(current->informable.size(), -1);
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto eq = tok[i].find('=');
        if (eq == std::string::npos) throw ParseError("entity field must be slot=value", lineno);
        const std::string slot = tok[i].substr(0, eq);
        const std::string value = tok[i].substr(eq + 1);
        const auto sit = std::find(current->informable.begin(), current->informable.end(), slot);
        if (sit == current->informable.end()) throw ParseError("unknown slot '" + slot + "'", lineno);
        const auto s = static_cast<std::size_t>(sit - current->informable.begin());
        const auto vit = std::find(current->values[s].begin(), current->values[s].end(), value);
        if (vit == current->values[s].end()) throw ParseError("unknown value '" + value + "' for " + slot, lineno);
        e[s] = static_cast<int>(vit - current->values[s].begin());
      }
      if (std::find(e.begin(), e.end(), -1) != e.end()) {
        throw ParseError("entity must assign every informable slot", lineno);
      }
      current->entities.push_back(std::move(e));
    } else {
      throw ParseError("unknown keyword '" + kw + "'", lineno);
    }
  }
  if (!header) throw ParseError("empty world file", lineno);
  if (current) throw ParseError("unterminated domain '" + current->name + "'", lineno);
  try {
    return WorldSchema(std::move(domains));
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), lineno);
  }
}

std::string world_to_text(const WorldSchema& schema) {
  std::ostringstream out;
  out << "world v1\n";
  for (const auto& d : schema.domains()) {
    out << "\ndomain " << d.name << "\n";
    for (std::size_t s = 0; s < d.informable.size(); ++s) {
      out << "  informable " << d.informable[s];
      for (const auto& v : d.values[s]) out << ' ' << v;
      out << '\n';
    }
    out << "  requestable";
    for (const auto& r : d.requestable) out << ' ' << r;
    out << '\n';
    for (const auto& e : d.entities) {
      out << "  entity";
      for (std::size_t s = 0; s < e.size(); ++s) out << ' ' << d.informable[s] << '=' << d.values[s][static_cast<std::size_t>(e[s])];
      out << '\n';
    }
    out << "end\n";
  }
  return out.str();
}

WorldSchema load_world(const std::string& path) { return parse_world(read_file(path)); }

void save_world(const std::string& path, const WorldSchema& schema) { write_file(path, world_to_text(schema)); }

}  // namespace bmatch::world
