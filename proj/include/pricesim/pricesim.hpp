#pragma once

#include "pricesim/clustering.hpp"
#include "pricesim/config.hpp"
#include "pricesim/demand_env.hpp"
#include "pricesim/errors.hpp"
#include "pricesim/estimation.hpp"
#include "pricesim/harness.hpp"
#include "pricesim/instance_io.hpp"
#include "pricesim/link.hpp"
#include "pricesim/linalg.hpp"
#include "pricesim/policy.hpp"
#include "pricesim/pricing.hpp"
#include "pricesim/random.hpp"
#include "pricesim/report_io.hpp"
