#include "oovforge/container.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "oovforge/errors.hpp"

namespace oovforge {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

constexpr std::uint8_t kFloat32 = 0;
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 40;

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

void put_string(std::ostream& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class T>
  T get(const char* what) {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof value, what);
    return value;
  }

  std::string get_string(const char* what, std::size_t limit = 1u << 24) {
    const auto n = get<std::uint32_t>(what);
    if (n > limit) throw FormatError(std::string("implausible length for ") + what);
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }

  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError(std::string("truncated container while reading ") + what);
  }

 private:
  std::istream& in_;
};

}  // namespace

const ContainerEntry* Container::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::optional<std::string> Container::config_value(std::string_view key) const {
  for (const auto& [k, v] : config) {
    if (k == key) return v;
  }
  return std::nullopt;
}

std::string format_config_block(const ConfigEntries& entries) {
  std::string out;
  for (const auto& [k, v] : entries) {
    if (k.empty() || k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw UsageError("config entry '" + k + "' cannot be serialized");
    }
    out += k + "=" + v + "\n";
  }
  return out;
}

ConfigEntries parse_config_block(std::string_view text) {
  ConfigEntries out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) throw FormatError("config block is not newline-terminated");
    std::string_view line = text.substr(pos, end - pos);
    auto eq = line.find('=');
    if (eq == std::string_view::npos || eq == 0) throw FormatError("malformed config line '" + std::string(line) + "'");
    out.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    pos = end + 1;
  }
  return out;
}

std::vector<float> to_float32(std::span<const double> values) {
  return std::vector<float>(values.begin(), values.end());
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_container(std::ostream& out, std::string_view magic, const Container& c) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  put_string(out, format_config_block(c.config));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& e : c.entries) {
    if (shape_size(e.shape) != e.values.size()) throw UsageError("container entry '" + e.name + "' has inconsistent shape");
    put_string(out, e.name);
    put<std::uint8_t>(out, kFloat32);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
  }
  for (const auto& e : c.entries) {
    out.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  }
  if (!out) throw Error("failed to write container");
}

Container read_container(std::istream& in, std::string_view magic) {
  Reader r(in);
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (static_cast<std::size_t>(in.gcount()) != magic.size() || got != magic) {
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
  }
  Container c;
  c.config = parse_config_block(r.get_string("config block", std::size_t{1} << 31));
  const auto count = r.get<std::uint32_t>("entry count");
  if (count > (1u << 20)) throw FormatError("implausible entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    ContainerEntry e;
    e.name = r.get_string("entry name", 4096);
    if (r.get<std::uint8_t>("dtype") != kFloat32) throw FormatError("unsupported dtype for '" + e.name + "'");
    const auto rank = r.get<std::uint8_t>("rank");
    std::uint64_t total = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>("dims");
      if (d > kMaxDim || (d && total > kMaxDim / d)) throw FormatError("implausible shape for '" + e.name + "'");
      total *= d;
      e.shape.push_back(static_cast<std::size_t>(d));
    }
    c.entries.push_back(std::move(e));
  }
  for (auto& e : c.entries) {
    const std::size_t n = shape_size(e.shape);
    std::vector<float> values;
    // Grow in chunks so a corrupted manifest cannot force a huge allocation up front.
    constexpr std::size_t kChunk = 1 << 16;
    for (std::size_t done = 0; done < n;) {
      const std::size_t take = std::min(kChunk, n - done);
      values.resize(done + take);
      r.read(reinterpret_cast<char*>(values.data() + done), take * sizeof(float), "payload");
      done += take;
    }
    e.values = std::move(values);
  }
  return c;
}

void save_container(const std::filesystem::path& path, std::string_view magic, const Container& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_container(out, magic, c);
}

Container load_container(const std::filesystem::path& path, std::string_view magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  return read_container(in, magic);
}

}  // namespace oovforge
