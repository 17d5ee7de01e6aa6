#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "glmamp/denoisers.hpp"
#include "glmamp/errors.hpp"
#include "glmamp/harness.hpp"

namespace glmamp {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string temp_path(const std::string& leaf) {
    return ::testing::TempDir() + "glmamp_harness/" + leaf;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Removes the final column from every CSV line (used to ignore wall-clock
// fields when comparing artifacts across runs).
std::string drop_last_column(const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line)) {
        out += line.substr(0, line.rfind(','));
        out += '\n';
    }
    return out;
}

void erase_wall_ms(nlohmann::json& j) {
    if (j.is_object()) {
        j.erase("wall_ms");
        for (auto& [key, value] : j.items()) {
            (void)key;
            erase_wall_ms(value);
        }
    } else if (j.is_array()) {
        for (auto& value : j) erase_wall_ms(value);
    }
}

TEST(AlgorithmNamesTest, KnownAndPredictedSets) {
    EXPECT_TRUE(is_known_algorithm("bo-gmamp"));
    EXPECT_TRUE(is_known_algorithm("gvamp"));
    EXPECT_TRUE(is_known_algorithm("se"));
    EXPECT_TRUE(is_known_algorithm("gvamp-se"));
    EXPECT_FALSE(is_known_algorithm("amp"));
    EXPECT_TRUE(is_predicted_algorithm("se"));
    EXPECT_TRUE(is_predicted_algorithm("gvamp-se"));
    EXPECT_FALSE(is_predicted_algorithm("bo-gmamp"));
    EXPECT_FALSE(is_predicted_algorithm("gvamp"));
}

TEST(RowsOfTest, RoundsHalfAwayFromZero) {
    ExperimentConfig cfg;
    cfg.N = 256;
    cfg.delta = 0.5;
    EXPECT_EQ(rows_of(cfg), 128);
    cfg.N = 2048;
    cfg.delta = 0.4;
    EXPECT_EQ(rows_of(cfg), 819);  // 819.2 rounds down
    cfg.N = 255;
    cfg.delta = 0.5;
    EXPECT_EQ(rows_of(cfg), 128);  // 127.5 rounds up
}

TEST(ValidateConfigTest, AcceptsDefaultsAndNamesOffendingFields) {
    EXPECT_NO_THROW(validate_config(ExperimentConfig{}));

    auto expect_bad = [](auto mutate) {
        ExperimentConfig cfg;
        mutate(cfg);
        EXPECT_THROW(validate_config(cfg), InvalidConfig);
    };
    expect_bad([](ExperimentConfig& c) { c.N = 1; });
    expect_bad([](ExperimentConfig& c) { c.delta = 0.0; });
    expect_bad([](ExperimentConfig& c) { c.delta = 1.2; });
    expect_bad([](ExperimentConfig& c) {
        c.N = 2;
        c.delta = 0.1;  // rows round to zero
    });
    expect_bad([](ExperimentConfig& c) { c.kappa = 0.5; });
    expect_bad([](ExperimentConfig& c) { c.kappa = kInf; });
    expect_bad([](ExperimentConfig& c) { c.mu = 0.0; });
    expect_bad([](ExperimentConfig& c) { c.mu = 1.5; });
    expect_bad([](ExperimentConfig& c) { c.clip_c = 0.0; });
    expect_bad([](ExperimentConfig& c) { c.clip_c = -1.0; });
    expect_bad([](ExperimentConfig& c) { c.snr_db = std::nan(""); });
    expect_bad([](ExperimentConfig& c) { c.snr_db = -kInf; });
    expect_bad([](ExperimentConfig& c) { c.T = 0; });
    expect_bad([](ExperimentConfig& c) { c.L = 0; });
    expect_bad([](ExperimentConfig& c) { c.trials = 0; });
    expect_bad([](ExperimentConfig& c) { c.algorithms = {}; });
    expect_bad([](ExperimentConfig& c) { c.algorithms = {"amp"}; });
    expect_bad([](ExperimentConfig& c) { c.algorithms = {"gvamp", "gvamp"}; });
    expect_bad([](ExperimentConfig& c) { c.se_sample_budget = 9999; });
    expect_bad([](ExperimentConfig& c) { c.threads = -1; });

    // The linear/noiseless limits are valid configurations.
    ExperimentConfig limits;
    limits.clip_c = kInf;
    limits.snr_db = kInf;
    EXPECT_NO_THROW(validate_config(limits));
}

TEST(ConfigJsonTest, RoundTripsIncludingInfinities) {
    ExperimentConfig cfg;
    cfg.N = 512;
    cfg.delta = 0.25;
    cfg.kappa = 15.0;
    cfg.mu = 0.2;
    cfg.clip_c = kInf;
    cfg.snr_db = kInf;
    cfg.T = 7;
    cfg.L = 2;
    cfg.algorithms = {"gvamp", "se"};
    cfg.trials = 4;
    cfg.seed = 99;
    cfg.cov_mode = CovMode::oracle;
    cfg.theta_optimized = false;
    cfg.xi_optimized = false;
    cfg.operator_kind = OperatorKind::dense_haar;
    cfg.se_sample_budget = 12345;
    cfg.threads = 3;
    cfg.out_dir = "artifacts/run1";

    const ExperimentConfig back = config_from_json(config_to_json(cfg));
    EXPECT_EQ(back.N, cfg.N);
    EXPECT_DOUBLE_EQ(back.delta, cfg.delta);
    EXPECT_DOUBLE_EQ(back.kappa, cfg.kappa);
    EXPECT_DOUBLE_EQ(back.mu, cfg.mu);
    EXPECT_TRUE(std::isinf(back.clip_c));
    EXPECT_TRUE(std::isinf(back.snr_db));
    EXPECT_EQ(back.T, cfg.T);
    EXPECT_EQ(back.L, cfg.L);
    EXPECT_EQ(back.algorithms, cfg.algorithms);
    EXPECT_EQ(back.trials, cfg.trials);
    EXPECT_EQ(back.seed, cfg.seed);
    EXPECT_EQ(back.cov_mode, cfg.cov_mode);
    EXPECT_EQ(back.theta_optimized, cfg.theta_optimized);
    EXPECT_EQ(back.xi_optimized, cfg.xi_optimized);
    EXPECT_EQ(back.operator_kind, cfg.operator_kind);
    EXPECT_EQ(back.se_sample_budget, cfg.se_sample_budget);
    EXPECT_EQ(back.threads, cfg.threads);
    EXPECT_EQ(back.out_dir, cfg.out_dir);
    EXPECT_EQ(config_hash(back), config_hash(cfg));

    // Missing fields keep their defaults; the default config is valid.
    const ExperimentConfig defaults = config_from_json("{}");
    EXPECT_EQ(config_hash(defaults), config_hash(ExperimentConfig{}));
}

TEST(ConfigJsonTest, RejectsMalformedInput) {
    EXPECT_THROW(config_from_json("not json"), InvalidConfig);
    EXPECT_THROW(config_from_json("[1, 2]"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"bogus\": 1}"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"N\": \"big\"}"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"snr_db\": \"huge\"}"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"snr_db\": \"-inf\"}"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"cov_mode\": \"bogus\"}"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"operator_kind\": \"circulant\"}"), InvalidConfig);
    EXPECT_THROW(config_from_json("{\"mu\": 0.0}"), InvalidConfig);  // fails validation
}

TEST(ConfigHashTest, CoversComputedFieldsOnly) {
    const ExperimentConfig base;
    const std::string h = config_hash(base);
    ASSERT_EQ(h.size(), 16u);
    for (char ch : h) EXPECT_TRUE(std::isxdigit(static_cast<unsigned char>(ch))) << h;

    ExperimentConfig moved = base;
    moved.threads = 7;
    moved.out_dir = "elsewhere";
    EXPECT_EQ(config_hash(moved), h);

    ExperimentConfig changed = base;
    changed.N = 1024;
    EXPECT_NE(config_hash(changed), h);
    changed = base;
    changed.seed = 2;
    EXPECT_NE(config_hash(changed), h);
    changed = base;
    changed.cov_mode = CovMode::oracle;
    EXPECT_NE(config_hash(changed), h);
    changed = base;
    changed.snr_db = kInf;
    EXPECT_NE(config_hash(changed), h);
}

TEST(GenerateInstanceTest, DeterministicPerTrialAndSelfConsistent) {
    ExperimentConfig cfg;
    cfg.N = 1024;
    cfg.delta = 0.5;
    cfg.kappa = 10.0;
    cfg.mu = 0.1;
    cfg.clip_c = 2.0;
    cfg.snr_db = 35.0;
    cfg.seed = 3;

    const GlmInstance a = generate_instance(cfg, 0);
    const GlmInstance b = generate_instance(cfg, 0);
    EXPECT_EQ((a.x_true - b.x_true).norm(), 0.0);
    EXPECT_EQ((a.y - b.y).norm(), 0.0);
    EXPECT_EQ((a.op.singular_values() - b.op.singular_values()).norm(), 0.0);
    EXPECT_EQ(a.channel.sigma2, b.channel.sigma2);
    EXPECT_EQ(a.seed, cfg.seed);
    EXPECT_EQ(a.op.cols(), 1024);
    EXPECT_EQ(a.op.rows(), 512);

    const GlmInstance c = generate_instance(cfg, 1);
    EXPECT_GT((a.x_true - c.x_true).norm(), 0.0);
    EXPECT_GT((a.y - c.y).norm(), 0.0);

    // The stored linear image is exactly the operator applied to the signal.
    EXPECT_EQ((a.z_true - a.op.apply(a.x_true)).norm(), 0.0);

    // Sparsity matches the prior's nonzero fraction.
    int nnz = 0;
    for (int i = 0; i < a.x_true.size(); ++i) nnz += a.x_true(i) != 0.0;
    EXPECT_NEAR(nnz / 1024.0, cfg.mu, 0.05);
    EXPECT_DOUBLE_EQ(a.prior.mu, cfg.mu);
    EXPECT_DOUBLE_EQ(a.prior.variance(), 1.0);

    // The noise variance comes from the realized clipped-signal power.
    const Vec clipped = clip(a.z_true, cfg.clip_c);
    const double clip_power = clipped.squaredNorm() / 512;
    EXPECT_DOUBLE_EQ(a.channel.sigma2,
                     std::max(clip_power * std::pow(10.0, -cfg.snr_db / 10.0), 1e-12));
    EXPECT_DOUBLE_EQ(a.channel.c, cfg.clip_c);

    cfg.snr_db = kInf;
    const GlmInstance clean = generate_instance(cfg, 0);
    EXPECT_DOUBLE_EQ(clean.channel.sigma2, 1e-12);

    EXPECT_THROW(generate_instance(cfg, -1), InvalidConfig);
    cfg.mu = 0.0;
    EXPECT_THROW(generate_instance(cfg, 0), InvalidConfig);
}

ExperimentConfig small_experiment(const std::string& out_dir) {
    ExperimentConfig cfg;
    cfg.N = 256;
    cfg.delta = 0.5;
    cfg.kappa = 10.0;
    cfg.mu = 0.1;
    cfg.clip_c = 2.0;
    cfg.snr_db = 35.0;
    cfg.T = 8;
    cfg.L = 3;
    cfg.algorithms = {"bo-gmamp", "gvamp", "se", "gvamp-se"};
    cfg.trials = 3;
    cfg.seed = 6;
    cfg.se_sample_budget = 20000;
    cfg.out_dir = out_dir;
    return cfg;
}

TEST(RunExperimentTest, ProducesOrderedTracesAndArtifacts) {
    const std::string out_dir = temp_path("experiment");
    ExperimentConfig cfg = small_experiment(out_dir);
    cfg.threads = 2;

    const ExperimentResult result = run_experiment(cfg, /*persist=*/true);
    EXPECT_EQ(result.hash, config_hash(cfg));
    EXPECT_EQ(result.build, build_id());
    EXPECT_FALSE(build_id().empty());
    EXPECT_TRUE(result.failures.empty());

    // Fixed order: config algorithm order, ascending trial inside each.
    ASSERT_EQ(result.traces.size(), 8u);  // 3 + 3 + 1 + 1
    const std::vector<std::pair<std::string, int>> expected = {
        {"bo-gmamp", 0}, {"bo-gmamp", 1}, {"bo-gmamp", 2}, {"gvamp", 0},
        {"gvamp", 1},    {"gvamp", 2},    {"se", 0},       {"gvamp-se", 0}};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(result.traces[i].trace.algorithm, expected[i].first) << i;
        EXPECT_EQ(result.traces[i].trial, expected[i].second) << i;
        EXPECT_EQ(result.traces[i].trace.config_hash, result.hash);
        EXPECT_EQ(result.traces[i].trace.kind,
                  is_predicted_algorithm(expected[i].first) ? "predicted" : "simulated");
        ASSERT_EQ(result.traces[i].trace.records.size(), 8u)
            << result.traces[i].trace.termination;
    }

    // Aggregates follow the same order; medians are recomputable.
    ASSERT_EQ(result.aggregates.size(), 4u);
    for (std::size_t a = 0; a < 4; ++a)
        EXPECT_EQ(result.aggregates[a].algorithm, cfg.algorithms[a]);
    const AlgorithmAggregate& gv = result.aggregates[1];
    ASSERT_EQ(gv.points.size(), 8u);
    std::vector<double> first_iter = {result.traces[3].trace.records[0].mse_x,
                                      result.traces[4].trace.records[0].mse_x,
                                      result.traces[5].trace.records[0].mse_x};
    std::sort(first_iter.begin(), first_iter.end());
    EXPECT_EQ(gv.points[0].t, 1);
    EXPECT_EQ(gv.points[0].n, 3);
    EXPECT_DOUBLE_EQ(gv.points[0].mse_median, first_iter[1]);
    EXPECT_DOUBLE_EQ(gv.points[0].mse_q1, first_iter[0] + 0.5 * (first_iter[1] - first_iter[0]));
    EXPECT_DOUBLE_EQ(gv.points[0].mse_q3, first_iter[1] + 0.5 * (first_iter[2] - first_iter[1]));
    EXPECT_EQ(result.aggregates[2].points[0].n, 1);

    // Artifacts land on disk and match the in-memory renderings.
    namespace fs = std::filesystem;
    ASSERT_TRUE(fs::exists(out_dir + "/run.json"));
    ASSERT_TRUE(fs::exists(out_dir + "/traces.csv"));
    ASSERT_TRUE(fs::exists(out_dir + "/aggregate.csv"));
    EXPECT_EQ(slurp(out_dir + "/run.json"), result_json(result));
    EXPECT_EQ(slurp(out_dir + "/traces.csv"), traces_csv(result));
    EXPECT_EQ(slurp(out_dir + "/aggregate.csv"), aggregate_csv(result));

    const std::string traces = traces_csv(result);
    EXPECT_EQ(traces.substr(0, traces.find('\n')), "t,algorithm,trial,mse,mse_db,wall_ms");
    const std::string agg = aggregate_csv(result);
    EXPECT_EQ(agg.substr(0, agg.find('\n')),
              "t,algorithm,n,mse_median,mse_q1,mse_q3,mse_db_median");

    // run.json carries the full schema and an embedded config that parses
    // back to the same hash.
    nlohmann::json j = nlohmann::json::parse(result_json(result));
    for (const char* key : {"schema_version", "config", "config_hash", "build_id", "notes",
                            "failures", "traces", "aggregates"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["schema_version"].get<int>(), 1);
    EXPECT_EQ(j["config_hash"].get<std::string>(), result.hash);
    EXPECT_EQ(config_hash(config_from_json(j["config"].dump())), result.hash);
    ASSERT_EQ(j["traces"].size(), 8u);
    for (const char* key : {"t", "mse", "mse_db", "v_x_predicted", "wall_ms"})
        EXPECT_TRUE(j["traces"][0]["records"][0].contains(key)) << key;

    // A single-threaded re-run computes identical numbers: only wall-clock
    // fields may differ across artifacts.
    ExperimentConfig serial = cfg;
    serial.threads = 1;
    serial.out_dir = temp_path("experiment-serial");
    const ExperimentResult again = run_experiment(serial, /*persist=*/false);
    EXPECT_EQ(aggregate_csv(again), aggregate_csv(result));
    EXPECT_EQ(drop_last_column(traces_csv(again)), drop_last_column(traces_csv(result)));
    nlohmann::json ja = nlohmann::json::parse(result_json(again));
    nlohmann::json jb = nlohmann::json::parse(result_json(result));
    erase_wall_ms(ja);
    erase_wall_ms(jb);
    ja["config"].erase("threads");
    jb["config"].erase("threads");
    ja["config"].erase("out_dir");
    jb["config"].erase("out_dir");
    EXPECT_EQ(ja, jb);
    EXPECT_FALSE(std::filesystem::exists(serial.out_dir));
}

TEST(RunExperimentTest, NotesTheNoiseFloorAtInfiniteSnr) {
    ExperimentConfig cfg = small_experiment(temp_path("unused"));
    cfg.algorithms = {"gvamp"};
    cfg.trials = 1;
    cfg.T = 2;
    cfg.snr_db = kInf;
    const ExperimentResult result = run_experiment(cfg, /*persist=*/false);
    ASSERT_EQ(result.notes.size(), 1u);
    EXPECT_NE(result.notes[0].find("noise variance floored"), std::string::npos);
}

TEST(WriteAtomicTest, CreatesParentsAndOverwrites) {
    const std::string path = temp_path("nested/deeper/artifact.txt");
    write_atomic(path, "first\n");
    EXPECT_EQ(slurp(path), "first\n");
    write_atomic(path, "second\n");
    EXPECT_EQ(slurp(path), "second\n");

    // A parent that exists as a regular file cannot become a directory.
    EXPECT_THROW(write_atomic(path + "/impossible.txt", "x"), IoError);
}

TEST(CompareTracesTest, MeasuresGapsInDb) {
    const std::vector<double> base = {1.0, 0.1, 0.01};
    const TraceComparison same = compare_traces(base, base, 0.0);
    EXPECT_TRUE(same.pass);
    EXPECT_EQ(same.compared, 3);
    EXPECT_EQ(same.max_gap_db, 0.0);
    EXPECT_EQ(same.converged_gap_db, 0.0);

    std::vector<double> doubled = base;
    for (double& v : doubled) v *= 2.0;
    const TraceComparison twice = compare_traces(base, doubled, 3.02);
    ASSERT_EQ(twice.gap_db.size(), 3u);
    for (double g : twice.gap_db) EXPECT_NEAR(g, 10.0 * std::log10(2.0), 1e-9);
    EXPECT_TRUE(twice.pass);
    EXPECT_FALSE(compare_traces(base, doubled, 3.0).pass);

    // from_t excludes the transient from the verdict but not from gap_db.
    const std::vector<double> a = {100.0, 0.1, 0.01};
    const std::vector<double> b = {1.0, 0.1, 0.01};
    const TraceComparison tail = compare_traces(a, b, 0.5, 2);
    EXPECT_EQ(tail.compared, 2);
    EXPECT_TRUE(tail.pass);
    EXPECT_NEAR(tail.gap_db[0], 20.0, 1e-9);
    EXPECT_EQ(tail.max_gap_db, 0.0);

    EXPECT_THROW(compare_traces({}, {}, 1.0), InvalidConfig);
    EXPECT_THROW(compare_traces({1.0}, {1.0, 2.0}, 1.0), DimensionMismatch);
    EXPECT_THROW(compare_traces(base, base, 1.0, 0), InvalidConfig);
    EXPECT_THROW(compare_traces(base, base, 1.0, 4), InvalidConfig);
    EXPECT_THROW(compare_traces(base, base, -1.0), InvalidConfig);
}

TEST(LoadMseSeriesTest, MediansPerIteration) {
    const std::string path = temp_path("series.csv");
    write_atomic(path,
                 "t,algorithm,trial,mse,mse_db,wall_ms\n"
                 "1,gvamp,0,0.5,-3.01,1.5\n"
                 "1,gvamp,1,0.3,-5.23,1.2\n"
                 "2,gvamp,0,0.25,-6.02,1.4\n"
                 "2,gvamp,1,0.15,-8.24,1.1\n");
    const CsvSeries series = load_mse_series(path);
    EXPECT_EQ(series.algorithm, "gvamp");
    ASSERT_EQ(series.mse.size(), 2u);
    EXPECT_DOUBLE_EQ(series.mse[0], 0.3 + 0.5 * (0.5 - 0.3));
    EXPECT_DOUBLE_EQ(series.mse[1], 0.15 + 0.5 * (0.25 - 0.15));
}

TEST(LoadMseSeriesTest, RejectsBadFiles) {
    EXPECT_THROW(load_mse_series(temp_path("does-not-exist.csv")), IoError);

    const std::string two_algos = temp_path("two-algos.csv");
    write_atomic(two_algos,
                 "t,algorithm,trial,mse,mse_db,wall_ms\n"
                 "1,gvamp,0,0.5,-3.01,1.5\n"
                 "1,bo-gmamp,0,0.4,-3.98,1.5\n");
    EXPECT_THROW(load_mse_series(two_algos), InvalidConfig);

    const std::string no_mse = temp_path("no-mse.csv");
    write_atomic(no_mse, "t,algorithm,trial\n1,gvamp,0\n");
    EXPECT_THROW(load_mse_series(no_mse), InvalidConfig);

    const std::string gap = temp_path("gap.csv");
    write_atomic(gap,
                 "t,algorithm,trial,mse,mse_db,wall_ms\n"
                 "1,gvamp,0,0.5,-3.01,1.5\n"
                 "3,gvamp,0,0.1,-10.0,1.5\n");
    EXPECT_THROW(load_mse_series(gap), InvalidConfig);

    const std::string junk = temp_path("junk.csv");
    write_atomic(junk,
                 "t,algorithm,trial,mse,mse_db,wall_ms\n"
                 "one,gvamp,0,0.5,-3.01,1.5\n");
    EXPECT_THROW(load_mse_series(junk), InvalidConfig);

    const std::string ragged = temp_path("ragged.csv");
    write_atomic(ragged,
                 "t,algorithm,trial,mse,mse_db,wall_ms\n"
                 "1,gvamp,0,0.5\n");
    EXPECT_THROW(load_mse_series(ragged), InvalidConfig);

    const std::string empty = temp_path("empty.csv");
    write_atomic(empty, "");
    EXPECT_THROW(load_mse_series(empty), InvalidConfig);

    const std::string headers_only = temp_path("headers-only.csv");
    write_atomic(headers_only, "t,algorithm,trial,mse,mse_db,wall_ms\n");
    EXPECT_THROW(load_mse_series(headers_only), InvalidConfig);
}

}  // namespace
}  // namespace glmamp
