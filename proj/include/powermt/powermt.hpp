#pragma once

#include "powermt/allocator.hpp"
#include "powermt/error.hpp"
#include "powermt/model.hpp"
#include "powermt/numerics.hpp"
#include "powermt/oracle.hpp"
#include "powermt/procedures.hpp"
#include "powermt/rng.hpp"
#include "powermt/sim.hpp"
