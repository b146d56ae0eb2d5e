#pragma once

#include <string_view>

// Default fixtures compiled in from data/ so the library works without an
// install tree. The files under data/ remain the source of truth.
namespace infragpt::assets {

std::string_view screening_prompt();
std::string_view planning_prompt();
std::string_view plan_skeleton();
std::string_view fallback_actions();

}  // namespace infragpt::assets
