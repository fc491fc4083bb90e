#pragma once

// Core library. experiments.hpp is separate because it needs libcrypto.

#include "cellfree/errors.hpp"
#include "cellfree/numerics.hpp"
#include "cellfree/config.hpp"
#include "cellfree/scenario.hpp"
#include "cellfree/channel.hpp"
#include "cellfree/precoding.hpp"
#include "cellfree/spectral_efficiency.hpp"
#include "cellfree/parallel.hpp"
#include "cellfree/monte_carlo.hpp"
#include "cellfree/nsga2.hpp"
#include "cellfree/dnn.hpp"
#include "cellfree/svg.hpp"
