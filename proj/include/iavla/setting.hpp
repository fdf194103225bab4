#pragma once

#include <string>
#include <string_view>

namespace iavla {

enum class TaskSetting { Blocks, Kitchen, Drawers };

std::string_view to_string(TaskSetting s);
/// Accepts "blocks", "kitchen" (alias "pots") and "drawers". Throws ConfigError.
TaskSetting setting_from_string(std::string_view name);

/// Number of tags a selection must contain: the kitchen task needs the
/// vegetable and the pot, the others a single object.
inline int selection_arity(TaskSetting s) { return s == TaskSetting::Kitchen ? 2 : 1; }

}  // namespace iavla
