#pragma once

// Everything except the command-line layer.

#include "grainbasis/calibration.hpp"
#include "grainbasis/futures_method.hpp"
#include "grainbasis/martingale.hpp"
#include "grainbasis/mc_oracle.hpp"
#include "grainbasis/numerics.hpp"
#include "grainbasis/parallel.hpp"
#include "grainbasis/processes.hpp"
#include "grainbasis/special_functions.hpp"
#include "grainbasis/xou.hpp"
