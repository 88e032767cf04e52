#pragma once

#include "dips/data.hpp"
#include "dips/errors.hpp"
#include "dips/estimators.hpp"
#include "dips/glm.hpp"
#include "dips/inference.hpp"
#include "dips/parallel.hpp"
#include "dips/report.hpp"
#include "dips/simulation.hpp"
#include "dips/smoother.hpp"
#include "dips/stats.hpp"
