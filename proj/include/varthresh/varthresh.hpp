// SPDX-License-Identifier: Apache-2.0

#pragma once
#include "varthresh/bootstrap.hpp"
#include "varthresh/catalogue.hpp"
#include "varthresh/catalogue_io.hpp"
#include "varthresh/error.hpp"
#include "varthresh/exceedance_diag.hpp"
#include "varthresh/gpd.hpp"
#include "varthresh/likelihood.hpp"
#include "varthresh/metrics.hpp"
#include "varthresh/random.hpp"
#include "varthresh/simulate.hpp"
#include "varthresh/threshold.hpp"
#include "varthresh/threshold_search.hpp"
