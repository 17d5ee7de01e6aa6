#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "glmamp/gmamp.hpp"
#include "glmamp/instance.hpp"
#include "glmamp/operator.hpp"
#include "glmamp/trace.hpp"

namespace glmamp {

// Full description of one experiment: problem family, algorithms to run, and
// execution/output policy. Round-trips through JSON; snr_db and clip_c accept
// the string "inf" for the linear/noiseless limits. Every value that affects
// computed numbers is covered by config_hash — out_dir and threads are
// excluded, so re-running elsewhere or with different parallelism hashes (and
// must compute) identically.
struct ExperimentConfig {
    int N = 2048;
    double delta = 0.5;  // aspect ratio; M = llround(delta * N)
    double kappa = 30.0;  // operator condition number
    double mu = 0.1;      // prior nonzero fraction (unit-power BG prior)
    double clip_c = 2.0;  // clip threshold; inf degenerates to a linear channel
    double snr_db = 40.0;  // inf floors the noise variance at 1e-12
    int T = 64;            // iteration budget
    int L = 3;             // damping window length
    std::vector<std::string> algorithms = {"bo-gmamp", "gvamp", "se"};
    int trials = 20;
    std::uint64_t seed = 1;
    CovMode cov_mode = CovMode::se_companion;  // covariance source for bo-gmamp
    bool theta_optimized = true;  // false → fixed θ_t = 1/λ†
    bool xi_optimized = true;     // false → fixed ξ_t = 1
    OperatorKind operator_kind = OperatorKind::fast_transform;
    int se_sample_budget = 200000;  // Monte Carlo population per SE evaluation
    int threads = 0;                // worker count; 0 → hardware concurrency
    std::string out_dir = "results";
};

// Known algorithm names: "bo-gmamp" and "gvamp" run on sampled instances;
// "se" and "gvamp-se" are their state-evolution predictions (one run,
// recorded as trial 0 with kind = "predicted").
bool is_predicted_algorithm(const std::string& name);
bool is_known_algorithm(const std::string& name);

int rows_of(const ExperimentConfig& config);  // M

// Throws InvalidConfig naming the offending field.
void validate_config(const ExperimentConfig& config);

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);

// FNV-1a 64-bit hash of the canonical JSON minus out_dir/threads, hex-encoded.
std::string config_hash(const ExperimentConfig& config);

// Identifies the code revision that produced an artifact (fixed at configure
// time; see GLMAMP_BUILD_ID).
std::string build_id();

// Draws one problem realization, deterministic in (config, trial_index) alone
// — independent of thread count and of which other trials run. The noise
// variance is resolved from the realized clipped-signal power P as
// σ² = max(P · 10^(−snr_db/10), 1e-12); the floor also covers snr_db = inf.
GlmInstance generate_instance(const ExperimentConfig& config, int trial_index);

struct TrialTrace {
    int trial = 0;
    IterationTrace trace;
};

// A trial that threw: recorded, never fatal to the surrounding experiment.
struct TrialFailure {
    std::string algorithm;
    int trial = 0;
    std::string message;
};

// Median and interquartile range of per-trial MSE at one iteration, over the
// n trials whose traces reach that iteration.
struct AggregatePoint {
    int t = 0;
    int n = 0;
    double mse_median = 0.0;
    double mse_q1 = 0.0;
    double mse_q3 = 0.0;
    double mse_db_median = 0.0;
};

struct AlgorithmAggregate {
    std::string algorithm;
    std::vector<AggregatePoint> points;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::string hash;   // config_hash(config)
    std::string build;  // build_id()
    // Fixed order regardless of scheduling: config algorithm order, ascending
    // trial within each algorithm. Failed trials are absent here.
    std::vector<TrialTrace> traces;
    std::vector<AlgorithmAggregate> aggregates;
    std::vector<TrialFailure> failures;
    std::vector<std::string> notes;  // non-fatal events (noise floor, fallbacks)
};

// Runs every algorithm × trial task on a worker pool, aggregates, and — when
// persist is true — writes run.json, traces.csv, and aggregate.csv atomically
// under config.out_dir. Trial failures land in result.failures and the run
// continues; configuration and I/O errors throw.
ExperimentResult run_experiment(const ExperimentConfig& config, bool persist = true);

// Deterministic renderings of the artifacts (run_experiment uses these; they
// are exposed so tests can compare text without touching the filesystem).
// Trace CSV columns: t,algorithm,trial,mse,mse_db,wall_ms. The aggregate CSV
// carries no timing column and is byte-identical across re-runs.
std::string traces_csv(const ExperimentResult& result);
std::string aggregate_csv(const ExperimentResult& result);
std::string result_json(const ExperimentResult& result);

// Writes via a temp file + rename in the destination directory, so a reader
// never observes a partially written artifact. Creates parent directories.
void write_atomic(const std::string& path, const std::string& content);

struct TraceComparison {
    std::vector<double> gap_db;     // |ΔMSE| in dB at every iteration
    double max_gap_db = 0.0;        // maximum over the compared range
    double converged_gap_db = 0.0;  // gap at the final iteration
    int compared = 0;               // iterations with t ≥ from_t
    bool pass = false;              // max_gap_db ≤ tol_db
};

// Per-iteration comparison of two MSE series. Lengths must match
// (DimensionMismatch) and be nonzero (InvalidConfig). from_t (1-based)
// excludes the transient from max/pass; gap_db still covers every iteration.
TraceComparison compare_traces(const std::vector<double>& mse_a,
                               const std::vector<double>& mse_b, double tol_db,
                               int from_t = 1);

// One algorithm's per-iteration MSE ladder recovered from a trace CSV in the
// traces_csv format: median over the trials present at each t. The file must
// contain exactly one algorithm (InvalidConfig otherwise).
struct CsvSeries {
    std::string algorithm;
    std::vector<double> mse;  // index t−1
};
CsvSeries load_mse_series(const std::string& csv_path);

}  // namespace glmamp
