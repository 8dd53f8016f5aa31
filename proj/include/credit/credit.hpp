#pragma once

// Learners, environments and analysis. The experiment harness (JSON configs, CSV output) lives
// under credit/harness/ and additionally needs nlohmann/json.

#include "credit/analysis.hpp"
#include "credit/control.hpp"
#include "credit/core.hpp"
#include "credit/couplings.hpp"
#include "credit/envs.hpp"
#include "credit/error.hpp"
#include "credit/evaluation.hpp"
#include "credit/random.hpp"
#include "credit/traces.hpp"
