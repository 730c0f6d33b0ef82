#pragma once

#include <filesystem>
#include <string_view>

#include "oovforge/container.hpp"
#include "oovforge/corpus.hpp"
#include "oovforge/hice.hpp"

namespace oovforge {

inline constexpr std::string_view kCheckpointMagic = "HICE1";

// The config block holds the model config under "model.*", the frozen table's
// identity under "table.*", and `extra` entries verbatim (run provenance).
void save_checkpoint(const std::filesystem::path& path, const HiceParams& params, const EmbeddingTable& table,
                     const ConfigEntries& extra = {});

// Config block only; lets callers find the table a checkpoint was built on.
ConfigEntries read_checkpoint_config(const std::filesystem::path& path);

// Rebuilds parameters over `table`, which must match the recorded fingerprint.
HiceParams load_checkpoint(const std::filesystem::path& path, const EmbeddingTable& table);

Container checkpoint_container(const HiceParams& params, const EmbeddingTable& table, const ConfigEntries& extra = {});
HiceParams params_from_container(const Container& c, const EmbeddingTable& table);

}  // namespace oovforge
