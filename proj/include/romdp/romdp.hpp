#pragma once

#include "romdp/prob.hpp"
#include "romdp/chain.hpp"
#include "romdp/rules.hpp"
#include "romdp/window.hpp"
#include "romdp/planner.hpp"
#include "romdp/env.hpp"
#include "romdp/cei.hpp"
#include "romdp/goei.hpp"
#include "romdp/metrics.hpp"
#include "romdp/config.hpp"
#include "romdp/experiment.hpp"
