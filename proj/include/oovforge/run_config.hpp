#pragma once

// Merged command configuration: defaults, then a "key = value" file, then
// the OOVFORGE_SEED environment variable, then explicit flags. Keys use
// dashes, matching flag names; underscores in files are accepted.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "oovforge/container.hpp"

namespace oovforge {

class RunConfig {
 public:
  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  const std::string& get(std::string_view key) const;  // throws UsageError when absent
  std::optional<std::string> find(std::string_view key) const;

  std::string str(std::string_view key) const { return get(key); }
  std::size_t size_value(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  double real(std::string_view key) const;
  bool flag(std::string_view key) const;

  // Lines "key = value"; '#' starts a comment line. Unknown keys are kept.
  void merge_file(const std::filesystem::path& path);
  void merge_text(std::string_view text, std::string_view origin = "config");

  // Sorted "key = value" lines.
  std::string to_text() const;
  // The same lines, each prefixed with "# ".
  std::string to_comment_block() const;
  // Entries with "run." prepended, for binary containers.
  ConfigEntries to_entries() const;

  const std::map<std::string, std::string>& values() const { return values_; }

  static std::string normalize_key(std::string_view key);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace oovforge
