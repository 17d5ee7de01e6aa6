#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace glmamp {

// One simulated iteration of either algorithm. mse_x is the mean-square error
// of the posterior estimate x̂_t (the quantity an end user would report).
struct IterationRecord {
    int t = 0;
    double mse_x = 0.0;
    double mse_x_db = 0.0;
    double v_x_predicted = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = 0.0;
};

struct IterationTrace {
    std::string algorithm;
    std::string kind = "simulated";  // "predicted" for state-evolution traces
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string build_id;
    std::vector<IterationRecord> records;
    // Non-fatal events worth surfacing (e.g. covariance-estimate fallbacks).
    std::vector<std::string> notes;
    // Empty when the run completed; otherwise the reason it stopped early.
    std::string termination;
};

// One state-evolution iteration: mse_x is the predicted posterior MSE; v_x/v_z
// are the damped extrinsic NLE error variances; vv_x/vv_z are the next
// iteration's predicted input variances.
struct SePoint {
    int t = 0;
    double mse_x = 0.0;
    double v_x = 0.0;
    double v_z = 0.0;
    double vv_x = 0.0;
    double vv_z = 0.0;
    double wall_ms = 0.0;
};

struct ScalarSeTrace {
    std::vector<SePoint> points;
    double sigma2 = 0.0;  // noise variance the prediction used
    std::uint64_t seed = 0;
    int sample_budget = 0;
};

// 10·log₁₀(mse), floored so that exact zeros stay finite in traces and files.
inline double to_db(double mse) { return 10.0 * std::log10(std::max(mse, 1e-300)); }

}  // namespace glmamp
