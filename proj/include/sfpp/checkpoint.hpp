#pragma once

#include <cstdint>
#include <filesystem>

#include "sfpp/model.hpp"

namespace sfpp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to resume or deploy a model. Entries are stored as
//   param/<name>, momentum/<name>, config/<key>, meta/step.
struct Checkpoint {
  ModelConfig config;
  ParameterSet<float> params;
  ParameterSet<float> momentum;  // may be empty
  std::int64_t step = 0;

  SiamModel<float> model() const { return SiamModel<float>(config, params); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfpp
