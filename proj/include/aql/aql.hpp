#pragma once

#include "aql/rng.hpp"
#include "aql/mdp.hpp"
#include "aql/expectile.hpp"
#include "aql/tabular.hpp"
#include "aql/approx.hpp"
#include "aql/continuous/env.hpp"
#include "aql/continuous/replay.hpp"
#include "aql/continuous/policy.hpp"
#include "aql/continuous/agent.hpp"
#include "aql/harness/stats.hpp"
#include "aql/harness/config.hpp"
#include "aql/harness/sweep.hpp"
