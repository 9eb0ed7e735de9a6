#pragma once

namespace grainbasis {

/// How a futures price E[V(state_T)] is evaluated.
enum class FuturesMethod {
    expectation,      ///< adaptive quadrature of V against the normal law, split at every kink
    truncated_normal, ///< unconditional truncated-normal identities plus swapped-order integrals
    printed           ///< conditional truncated means in place of unconditional ones (documented mismatch)
};

}  // namespace grainbasis
