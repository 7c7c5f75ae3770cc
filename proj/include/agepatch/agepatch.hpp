#pragma once

#include "agepatch/analysis.hpp"
#include "agepatch/characteristics.hpp"
#include "agepatch/renewal.hpp"
#include "agepatch/scenario.hpp"
#include "agepatch/scenario_io.hpp"
#include "agepatch/spectral.hpp"
