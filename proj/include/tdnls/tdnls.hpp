#pragma once

#include "tdnls/bounds.hpp"
#include "tdnls/diagnostics.hpp"
#include "tdnls/errors.hpp"
#include "tdnls/grid.hpp"
#include "tdnls/lens.hpp"
#include "tdnls/model.hpp"
#include "tdnls/potentials.hpp"
#include "tdnls/resample.hpp"
#include "tdnls/scattering.hpp"
#include "tdnls/solver.hpp"
#include "tdnls/time_function.hpp"
