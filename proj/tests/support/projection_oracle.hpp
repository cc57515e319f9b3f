#pragma once

#include "ngvi/expfam.hpp"
#include "ngvi/projections.hpp"

namespace testutil {

// Numerical Bregman projection by projected compass search over the moment
// parametrization.  Deliberately avoids the closed forms under test; accuracy
// is tuned to the agreement tolerance, not to speed.  Throws NoConvergence if
// the evaluation cap is hit before the step floor.
ngvi::ExpParam project_oracle(const ngvi::ExpParam& omega, const ngvi::ConstraintSet& c,
                              double tol);

}  // namespace testutil
