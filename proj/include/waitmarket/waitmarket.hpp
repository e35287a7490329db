#pragma once

#include "waitmarket/cli.hpp"
#include "waitmarket/commitment.hpp"
#include "waitmarket/config.hpp"
#include "waitmarket/csv.hpp"
#include "waitmarket/equilibrium.hpp"
#include "waitmarket/error.hpp"
#include "waitmarket/fixtures.hpp"
#include "waitmarket/model.hpp"
#include "waitmarket/numerics.hpp"
#include "waitmarket/profile.hpp"
#include "waitmarket/simulator.hpp"
