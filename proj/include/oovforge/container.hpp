#pragma once

// Binary container shared by checkpoints and fitted baselines:
//   magic bytes
//   u32 length + UTF-8 "key=value\n" config block
//   u32 entry count, then per entry: u32 name length, name, u8 dtype (0 = float32),
//   u8 rank, rank x u64 dims
//   little-endian float32 payloads in manifest order

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "oovforge/tensor.hpp"

namespace oovforge {

using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

struct ContainerEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Container {
  ConfigEntries config;
  std::vector<ContainerEntry> entries;

  const ContainerEntry* find(std::string_view name) const;
  std::optional<std::string> config_value(std::string_view key) const;
};

void write_container(std::ostream& out, std::string_view magic, const Container& c);
// Throws FormatError on a wrong magic, truncation or inconsistent manifest.
Container read_container(std::istream& in, std::string_view magic);

void save_container(const std::filesystem::path& path, std::string_view magic, const Container& c);
Container load_container(const std::filesystem::path& path, std::string_view magic);

// "key=value" lines; keys may not contain '=' or newlines, values no newlines.
std::string format_config_block(const ConfigEntries& entries);
ConfigEntries parse_config_block(std::string_view text);

std::vector<float> to_float32(std::span<const double> values);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace oovforge
