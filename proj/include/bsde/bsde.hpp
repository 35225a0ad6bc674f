#pragma once

#include "bsde/core.hpp"
#include "bsde/lattice.hpp"
#include "bsde/representation.hpp"
#include "bsde/root_finding.hpp"
#include "bsde/driver.hpp"
#include "bsde/solver.hpp"
#include "bsde/comparison.hpp"
#include "bsde/recovery.hpp"
#include "bsde/nlexp.hpp"
#include "bsde/static2dyn.hpp"
