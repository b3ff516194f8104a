#pragma once

// Panel cointegration with unobserved common stochastic trends: the
// continuously-updated estimator family (Cup, CupBC, CupFM), kernel long-run
// covariance machinery, inference, factor-number selection, and a seeded
// Monte Carlo harness.

#include "cupfm/errors.hpp"
#include "cupfm/estimators.hpp"
#include "cupfm/factor_select.hpp"
#include "cupfm/inference.hpp"
#include "cupfm/linalg.hpp"
#include "cupfm/lrcov.hpp"
#include "cupfm/mc.hpp"
#include "cupfm/panel.hpp"
#include "cupfm/rng.hpp"
