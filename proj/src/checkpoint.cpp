#include "oovforge/checkpoint.hpp"

#include <cmath>

#include "oovforge/errors.hpp"

namespace oovforge {

namespace {

constexpr std::string_view kModelPrefix = "model.";

}  // namespace

Container checkpoint_container(const HiceParams& params, const EmbeddingTable& table, const ConfigEntries& extra) {
  if (params.frozen.dim(0) != table.size() || table.dim() != params.config.dim) {
    throw DimensionError("checkpoint: parameters were not built over this embedding table");
  }
  Container c;
  for (const auto& [k, v] : params.config.to_entries()) c.config.emplace_back(std::string(kModelPrefix) + k, v);
  c.config.emplace_back("table.path", table.source());
  c.config.emplace_back("table.rows", std::to_string(table.size()));
  c.config.emplace_back("table.dim", std::to_string(table.dim()));
  c.config.emplace_back("table.fingerprint", std::to_string(table.fingerprint()));
  c.config.insert(c.config.end(), extra.begin(), extra.end());
  for (const auto& [name, t] : params.named_learnable()) {
    c.entries.push_back({name, t.shape(), to_float32(t.data())});
  }
  return c;
}

HiceParams params_from_container(const Container& c, const EmbeddingTable& table) {
  ConfigEntries model;
  for (const auto& [k, v] : c.config) {
    if (k.starts_with(kModelPrefix)) model.emplace_back(k.substr(kModelPrefix.size()), v);
  }
  const HiceConfig config = HiceConfig::from_entries(model);
  const auto fingerprint = c.config_value("table.fingerprint");
  if (!fingerprint) throw FormatError("checkpoint does not record its embedding table");
  if (*fingerprint != std::to_string(table.fingerprint())) {
    throw FormatError("checkpoint was trained over a different embedding table (fingerprint mismatch)");
  }
  HiceParams p = init_params(config, table, 0);
  std::vector<Tensor> learned;
  for (const auto& [name, t] : p.named_learnable()) {
    const ContainerEntry* e = c.find(name);
    if (!e) throw FormatError("checkpoint is missing parameter '" + name + "'");
    if (e->shape != t.shape()) {
      throw FormatError("parameter '" + name + "' has shape " + shape_string(e->shape) + ", expected " +
                        shape_string(t.shape()));
    }
    std::vector<double> values(e->values.begin(), e->values.end());
    for (double v : values) {
      if (!std::isfinite(v)) throw FormatError("parameter '" + name + "' holds a non-finite value");
    }
    learned.push_back(Tensor::param(e->shape, std::move(values)));
  }
  return p.with_learnable(learned);
}

void save_checkpoint(const std::filesystem::path& path, const HiceParams& params, const EmbeddingTable& table,
                     const ConfigEntries& extra) {
  save_container(path, kCheckpointMagic, checkpoint_container(params, table, extra));
}

ConfigEntries read_checkpoint_config(const std::filesystem::path& path) {
  return load_container(path, kCheckpointMagic).config;
}

HiceParams load_checkpoint(const std::filesystem::path& path, const EmbeddingTable& table) {
  return params_from_container(load_container(path, kCheckpointMagic), table);
}

}  // namespace oovforge
