#pragma once

#include "spdelab/config.hpp"
#include "spdelab/digest.hpp"
#include "spdelab/domain_ops.hpp"
#include "spdelab/error.hpp"
#include "spdelab/experiments.hpp"
#include "spdelab/expression.hpp"
#include "spdelab/gamma_calc.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/io.hpp"
#include "spdelab/mild_solver.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/path_norms.hpp"
#include "spdelab/rng.hpp"
