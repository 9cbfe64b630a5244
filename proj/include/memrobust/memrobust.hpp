#pragma once

#include "memrobust/bayesopt.hpp"
#include "memrobust/certify.hpp"
#include "memrobust/errors.hpp"
#include "memrobust/fsio.hpp"
#include "memrobust/ivdata.hpp"
#include "memrobust/memsim.hpp"
#include "memrobust/neural.hpp"
#include "memrobust/nonideality.hpp"
#include "memrobust/rng.hpp"
#include "memrobust/stats.hpp"
#include "memrobust/version.hpp"
