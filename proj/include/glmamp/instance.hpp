#pragma once

#include <cstdint>

#include "glmamp/denoisers.hpp"
#include "glmamp/operator.hpp"
#include "glmamp/types.hpp"

namespace glmamp {

// One realized recovery problem y = Clip(Ax) + n. The channel's sigma2 is
// the resolved noise variance actually used to draw n (any SNR convention is
// applied by the generator, not here). Regenerable bit-identically from
// (config, seed): see generate_instance in the harness.
struct GlmInstance {
    SpectralOperator op;
    BernoulliGaussianPrior prior;
    ClipChannel channel;
    Vec x_true;  // length N
    Vec z_true;  // length M, = A x_true
    Vec y;       // length M
    std::uint64_t seed = 0;
};

}  // namespace glmamp
