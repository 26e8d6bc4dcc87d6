#pragma once

#include "fairproj/csv.hpp"
#include "fairproj/error.hpp"
#include "fairproj/experiment.hpp"
#include "fairproj/log.hpp"
#include "fairproj/metrics.hpp"
#include "fairproj/models.hpp"
#include "fairproj/projection.hpp"
#include "fairproj/rng.hpp"
#include "fairproj/synth.hpp"
#include "fairproj/tabular.hpp"
#include "fairproj/version.hpp"
