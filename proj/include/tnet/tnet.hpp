#pragma once

// Everything at once.

#include "tnet/error.hpp"
#include "tnet/paths.hpp"
#include "tnet/network.hpp"
#include "tnet/spec_io.hpp"
#include "tnet/rng.hpp"
#include "tnet/quadrature.hpp"
#include "tnet/stochastic.hpp"
#include "tnet/reflection.hpp"
#include "tnet/simulator.hpp"
#include "tnet/fluid.hpp"
#include "tnet/diffusion.hpp"
#include "tnet/bottleneck.hpp"
#include "tnet/verify.hpp"

namespace tnet {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tnet
