#pragma once

#include "colflux/column_model.hpp"
#include "colflux/config.hpp"
#include "colflux/csv.hpp"
#include "colflux/diff_sim.hpp"
#include "colflux/errors.hpp"
#include "colflux/io.hpp"
#include "colflux/lbfgs.hpp"
#include "colflux/manifest.hpp"
#include "colflux/mpc.hpp"
#include "colflux/parallel.hpp"
#include "colflux/plot.hpp"
#include "colflux/policy.hpp"
#include "colflux/random.hpp"
#include "colflux/sampling.hpp"
#include "colflux/scenarios.hpp"
#include "colflux/sobol.hpp"
#include "colflux/training.hpp"
