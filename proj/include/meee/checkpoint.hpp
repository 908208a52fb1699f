#pragma once

#include <filesystem>

#include "meee/dyn_model.hpp"
#include "meee/sac.hpp"

namespace meee {

// Flat binary checkpoints: a short header (magic, activation, layer sizes,
// member count and seeds where applicable) followed by raw little-endian
// doubles. Optimizer state is not persisted.

void save_policy(const GaussianPolicy& policy, const std::filesystem::path& path);
GaussianPolicy load_policy(const std::filesystem::path& path);

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& path);
Ensemble load_ensemble(const std::filesystem::path& path);

}  // namespace meee
