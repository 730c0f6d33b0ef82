#include "oovforge/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "oovforge/errors.hpp"

namespace oovforge {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::normalize_key(std::string_view key) {
  std::string out(trim(key));
  for (char& c : out) {
    if (c == '_') c = '-';
  }
  return out;
}

void RunConfig::set(std::string key, std::string value) { values_[normalize_key(key)] = std::move(value); }

bool RunConfig::has(std::string_view key) const { return values_.count(normalize_key(key)) > 0; }

std::optional<std::string> RunConfig::find(std::string_view key) const {
  auto it = values_.find(normalize_key(key));
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(normalize_key(key));
  if (it == values_.end()) throw UsageError("missing required setting '" + std::string(key) + "'");
  return it->second;
}

std::size_t RunConfig::size_value(std::string_view key) const {
  const auto& v = get(key);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("setting '" + std::string(key) + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t RunConfig::u64(std::string_view key) const {
  const auto& v = get(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("setting '" + std::string(key) + "' expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::real(std::string_view key) const {
  const auto& v = get(key);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("setting '" + std::string(key) + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::flag(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError("setting '" + std::string(key) + "' expects true or false, got '" + v + "'");
}

void RunConfig::merge_text(std::string_view text, std::string_view origin) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw UsageError(std::string(origin) + " line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::to_comment_block() const {
  std::string out;
  for (const auto& [k, v] : values_) out += "# " + k + " = " + v + "\n";
  return out;
}

ConfigEntries RunConfig::to_entries() const {
  ConfigEntries out;
  for (const auto& [k, v] : values_) out.emplace_back("run." + k, v);
  return out;
}

}  // namespace oovforge
