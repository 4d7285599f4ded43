#pragma once

// Umbrella header for the whole toolkit.

#include "hestondml/calibrate.hpp"
#include "hestondml/charfn.hpp"
#include "hestondml/checkpoint.hpp"
#include "hestondml/dataset.hpp"
#include "hestondml/errors.hpp"
#include "hestondml/gridsearch.hpp"
#include "hestondml/heston.hpp"
#include "hestondml/marketdata.hpp"
#include "hestondml/montecarlo.hpp"
#include "hestondml/optim.hpp"
#include "hestondml/pricer.hpp"
#include "hestondml/quadrature.hpp"
#include "hestondml/sensitivities.hpp"
#include "hestondml/training.hpp"
#include "hestondml/twinnet.hpp"
