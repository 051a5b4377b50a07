#pragma once

#include "varshap/baselines.hpp"
#include "varshap/bench.hpp"
#include "varshap/casestudy.hpp"
#include "varshap/core.hpp"
#include "varshap/io.hpp"
#include "varshap/metrics.hpp"
#include "varshap/mlp.hpp"
#include "varshap/parallel.hpp"
#include "varshap/perturb.hpp"
#include "varshap/rng.hpp"
#include "varshap/shapley.hpp"
#include "varshap/svg.hpp"
#include "varshap/synth.hpp"
#include "varshap/varshap.hpp"
