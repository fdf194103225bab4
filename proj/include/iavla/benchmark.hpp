#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iavla/pipeline.hpp"

namespace iavla {

struct BenchmarkOptions {
  TaskSetting setting = TaskSetting::Blocks;
  int episodes = 100;
  int size = 480;
  int frames = 8;
  std::uint64_t seed = 0;
  SeenManifest manifest = SeenManifest::defaults();
  ExecutorNoise noise;
  std::string variant = "ia-vla";
};

/// Random scenes with one instruction each. Episode k asks for category
/// k % 3 + 1 and redraws the scene (up to 64 times) until an instruction of
/// that category exists. Motion follows default_motion for the targets.
std::vector<EpisodeSpec> make_benchmark(const BenchmarkOptions& options);

}  // namespace iavla
