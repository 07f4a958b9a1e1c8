#pragma once

#include "upen2d/io.hpp"
#include "upen2d/metrics.hpp"
#include "upen2d/model.hpp"
#include "upen2d/operators.hpp"
#include "upen2d/solvers.hpp"
#include "upen2d/upen.hpp"
