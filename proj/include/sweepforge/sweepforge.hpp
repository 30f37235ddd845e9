#pragma once

#include "sweepforge/aggregate.hpp"
#include "sweepforge/checkpoint.hpp"
#include "sweepforge/config.hpp"
#include "sweepforge/demo/epidemic.hpp"
#include "sweepforge/engine.hpp"
#include "sweepforge/error.hpp"
#include "sweepforge/expr.hpp"
#include "sweepforge/netstruct.hpp"
#include "sweepforge/plot.hpp"
#include "sweepforge/rng.hpp"
#include "sweepforge/runner.hpp"
#include "sweepforge/space.hpp"
#include "sweepforge/timepoint.hpp"
#include "sweepforge/value.hpp"
