#pragma once

#include "cci/baselines.hpp"
#include "cci/certify.hpp"
#include "cci/confseq.hpp"
#include "cci/constraints.hpp"
#include "cci/error.hpp"
#include "cci/generators.hpp"
#include "cci/harness.hpp"
#include "cci/llm_client.hpp"
#include "cci/policy.hpp"
#include "cci/rng.hpp"
#include "cci/sample.hpp"
