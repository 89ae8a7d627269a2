#pragma once

// Convenience umbrella: the full bilevel-optimization toolkit.

#include "riebo/common.hpp"
#include "riebo/sym_matrix.hpp"
#include "riebo/manifold.hpp"
#include "riebo/spd_calculus.hpp"
#include "riebo/hypergrad.hpp"
#include "riebo/solvers.hpp"
#include "riebo/problems.hpp"
#include "riebo/trace_io.hpp"
#include "riebo/run_config.hpp"
#include "riebo/runner.hpp"
