#pragma once

#include <functional>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace fuseformer {

// Scalar-valued function of several tensors. When called with tracked inputs
// it must build its graph on their tape; with constants it is a plain
// forward evaluation.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Central-difference check of the reverse-mode gradient. Perturbs every
// element of every input and returns the worst relative error with
// denominator max(|analytic|, |numeric|, 1e-8). Two guards keep the oracle
// itself honest: gaps below the rounding resolution of the central
// difference (|f| * ulp / eps) count as agreement, and coordinates whose
// eps and eps/2 slopes disagree (a relu/max kink inside the probe interval)
// are excluded, since the difference quotient is invalid there. A wrong
// backward function shows consistent slopes at both scales and is reported.
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps);

// Same, but perturbing at most `max_coords` randomly chosen coordinates
// across all inputs. Used for whole-model checks where exhaustive central
// differences are too slow.
double grad_check_sampled(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps,
                          int max_coords, Rng& rng);

// Random tensor with entries uniform in [lo,hi)
Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0);

} // namespace fuseformer
