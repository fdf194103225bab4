#include "iavla/setting.hpp"

#include <string>

#include "iavla/errors.hpp"

namespace iavla {

std::string_view to_string(TaskSetting s) {
  switch (s) {
    case TaskSetting::Blocks:
      return "blocks";
    case TaskSetting::Kitchen:
      return "kitchen";
    case TaskSetting::Drawers:
      return "drawers";
  }
  return "blocks";
}

TaskSetting setting_from_string(std::string_view name) {
  if (name == "blocks") return TaskSetting::Blocks;
  if (name == "kitchen" || name == "pots") return TaskSetting::Kitchen;
  if (name == "drawers") return TaskSetting::Drawers;
  throw ConfigError("unknown task setting '" + std::string(name) + "'");
}

}  // namespace iavla
