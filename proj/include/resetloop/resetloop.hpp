#pragma once

#include "errors.hpp"
#include "numerics.hpp"
#include "lti.hpp"
#include "reset_system.hpp"
#include "harmonics.hpp"
#include "controllers.hpp"
#include "plant.hpp"
#include "simulate.hpp"
#include "metrics.hpp"

namespace resetloop {
inline constexpr const char* kVersion = "0.1.0";
}
