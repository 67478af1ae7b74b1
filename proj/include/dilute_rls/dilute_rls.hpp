#pragma once

#include "dilute_rls/errors.hpp"
#include "dilute_rls/numerics.hpp"
#include "dilute_rls/format.hpp"
#include "dilute_rls/rng.hpp"
#include "dilute_rls/graph.hpp"
#include "dilute_rls/model.hpp"
#include "dilute_rls/parallel.hpp"
#include "dilute_rls/estimator.hpp"
#include "dilute_rls/analysis.hpp"
#include "dilute_rls/config.hpp"
#include "dilute_rls/scenarios.hpp"
#include "dilute_rls/plot.hpp"
#include "dilute_rls/experiment.hpp"
#include "dilute_rls/cli.hpp"
