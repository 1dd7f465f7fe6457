#pragma once

#include "manifold_flow/charts.hpp"
#include "manifold_flow/density.hpp"
#include "manifold_flow/errors.hpp"
#include "manifold_flow/estimation.hpp"
#include "manifold_flow/flows.hpp"
#include "manifold_flow/mc_verify.hpp"
#include "manifold_flow/numeric.hpp"
#include "manifold_flow/random.hpp"
