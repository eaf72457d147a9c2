#pragma once

#include "dcgrad/errors.hpp"
#include "dcgrad/grid_model.hpp"
#include "dcgrad/potential.hpp"
#include "dcgrad/equilibrium.hpp"
#include "dcgrad/roa.hpp"
#include "dcgrad/simulator.hpp"
#include "dcgrad/io.hpp"
