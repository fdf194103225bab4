#include "iavla/benchmark.hpp"

#include "iavla/errors.hpp"
#include "iavla/seeding.hpp"

namespace iavla {

std::vector<EpisodeSpec> make_benchmark(const BenchmarkOptions& options) {
  if (options.episodes < 0) throw ConfigError("episode count must be non-negative");
  if (options.frames < 1) throw ConfigError("episodes need at least one frame");
  std::vector<EpisodeSpec> specs;
  const std::string prefix(to_string(options.setting));
  for (int k = 0; k < options.episodes; ++k) {
    const int wanted = k % 3 + 1;
    const std::uint64_t ep_seed = derive_seed(options.seed, prefix + "/" + std::to_string(k));
    Rng rng(ep_seed);
    std::optional<SceneSpec> scene;
    std::optional<Instruction> pick;
    for (int attempt = 0; attempt < 64 && !pick; ++attempt) {
      auto s = gen_scene(options.setting, {}, derive_seed(ep_seed, static_cast<std::uint64_t>(attempt)),
                         options.size);
      const auto all = gen_instructions(s, options.manifest);
      std::vector<Instruction> matching;
      for (const auto& i : all)
        if (i.category == wanted) matching.push_back(i);
      if (!matching.empty()) {
        pick = matching[static_cast<std::size_t>(rng.below(static_cast<int>(matching.size())))];
        scene = std::move(s);
      } else if (!scene && !all.empty()) {
        scene = std::move(s);  // fallback: first scene with any instruction
      }
    }
    if (!pick) {
      if (!scene) throw GenError("no scene with a usable instruction for episode " + std::to_string(k));
      pick = gen_instructions(*scene, options.manifest).front();
    }

    EpisodeSpec spec;
    spec.episode_id = prefix + "-" + std::to_string(k);
    spec.world.scene = *scene;
    spec.world.motion = default_motion(*scene, resolve_instruction(*scene, *pick), options.frames);
    spec.instruction = pick->text;
    spec.category = pick->category;
    spec.noise = options.noise;
    spec.seed = ep_seed;
    spec.variant = options.variant;
    specs.push_back(std::move(spec));
  }
  return specs;
}

}  // namespace iavla
