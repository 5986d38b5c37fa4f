#pragma once

#include "modcausal/distribution.hpp"

namespace modcausal {

/// Total variation distance, half the L1 distance per conditioning slice.
/// For conditional tables the reported value is the maximum over slices.
double tvd(const Distribution& p, const Distribution& q);

/// KL divergence sum p log(p/q), slice-max convention as tvd. Cells where
/// p > 0 and q == 0 are smoothed with eps = 1e-12; `smoothed`, when given,
/// reports whether smoothing was applied.
double kl(const Distribution& p, const Distribution& q, bool* smoothed = nullptr);

}  // namespace modcausal
