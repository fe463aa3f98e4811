#pragma once

// Umbrella header for the full library.

#include "cosrod/controller.hpp"
#include "cosrod/harness.hpp"
#include "cosrod/jacobian.hpp"
#include "cosrod/plant.hpp"
#include "cosrod/rod.hpp"
#include "cosrod/scenario.hpp"
#include "cosrod/shooting.hpp"
#include "cosrod/so3.hpp"
#include "cosrod/trace_io.hpp"
