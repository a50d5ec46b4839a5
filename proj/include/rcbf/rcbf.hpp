#pragma once

// Core library. config.hpp (yaml-cpp) and export.hpp (nlohmann/json) are
// opt-in because they pull in extra dependencies.

#include "rcbf/barrier.hpp"
#include "rcbf/disturbance.hpp"
#include "rcbf/dynamics.hpp"
#include "rcbf/filter.hpp"
#include "rcbf/qp.hpp"
#include "rcbf/sim.hpp"
