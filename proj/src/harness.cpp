#include "glmamp/harness.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "glmamp/errors.hpp"
#include "glmamp/gvamp.hpp"
#include "glmamp/rng.hpp"
#include "glmamp/se.hpp"

// Fixed revision stamp. A constant (rather than a VCS hash or timestamp)
// keeps artifacts byte-identical across rebuilds of the same sources; bump it
// with the code, or override at configure time.
#ifndef GLMAMP_BUILD_ID
#define GLMAMP_BUILD_ID "glmamp-0.1.0"
#endif

namespace glmamp {

namespace {

using json = nlohmann::ordered_json;

constexpr double kNoiseFloor = 1e-12;

// Stream ids (1 << 20) + trial keep instance randomness disjoint from the SE
// engines, which draw streams 0..T+1 and 100/101 off the same seed.
constexpr std::uint64_t kInstanceStreamBase = 1ull << 20;

// Shortest round-tripping decimal rendering: deterministic across platforms
// and reproduces the exact double on read-back.
std::string fmt_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

json json_double(double v) {
    if (std::isnan(v)) return nullptr;
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double double_from_json(const json& j, const std::string& field) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        throw InvalidConfig(field + ": only the string \"inf\" is accepted, got \"" + s + "\"");
    }
    if (!j.is_number()) throw InvalidConfig(field + ": expected a number or \"inf\"");
    return j.get<double>();
}

// Linear-interpolation quantile of a sorted sample (the convention most
// statistics packages default to).
double quantile_sorted(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Canonical config rendering; the hash covers only the fields that affect
// computed values, so out_dir/threads are emitted (for the record) but
// stripped before hashing.
json config_json(const ExperimentConfig& c) {
    json j;
    j["N"] = c.N;
    j["delta"] = c.delta;
    j["kappa"] = c.kappa;
    j["mu"] = c.mu;
    j["clip_c"] = json_double(c.clip_c);
    j["snr_db"] = json_double(c.snr_db);
    j["T"] = c.T;
    j["L"] = c.L;
    j["algorithms"] = c.algorithms;
    j["trials"] = c.trials;
    j["seed"] = c.seed;
    j["cov_mode"] = to_string(c.cov_mode);
    j["theta_optimized"] = c.theta_optimized;
    j["xi_optimized"] = c.xi_optimized;
    j["operator_kind"] = to_string(c.operator_kind);
    j["se_sample_budget"] = c.se_sample_budget;
    j["threads"] = c.threads;
    j["out_dir"] = c.out_dir;
    return j;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

IterationTrace predicted_trace(const std::string& name, const ScalarSeTrace& se) {
    IterationTrace trace;
    trace.algorithm = name;
    trace.kind = "predicted";
    trace.seed = se.seed;
    for (const SePoint& p : se.points) {
        IterationRecord rec;
        rec.t = p.t;
        rec.mse_x = p.mse_x;
        rec.mse_x_db = to_db(p.mse_x);
        rec.v_x_predicted = p.mse_x;
        rec.wall_ms = p.wall_ms;
        trace.records.push_back(rec);
    }
    return trace;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

bool is_predicted_algorithm(const std::string& name) {
    return name == "se" || name == "gvamp-se";
}

bool is_known_algorithm(const std::string& name) {
    return name == "bo-gmamp" || name == "gvamp" || is_predicted_algorithm(name);
}

int rows_of(const ExperimentConfig& config) {
    return static_cast<int>(std::llround(config.delta * config.N));
}

void validate_config(const ExperimentConfig& config) {
    if (config.N < 2) throw InvalidConfig("N must be at least 2");
    if (!(config.delta > 0.0) || config.delta > 1.0)
        throw InvalidConfig("delta must lie in (0, 1]");
    if (rows_of(config) < 1) throw InvalidConfig("delta * N rounds to zero rows");
    if (!(config.kappa >= 1.0) || std::isinf(config.kappa))
        throw InvalidConfig("kappa must be finite and at least 1");
    if (!(config.mu > 0.0) || config.mu > 1.0) throw InvalidConfig("mu must lie in (0, 1]");
    if (!(config.clip_c > 0.0)) throw InvalidConfig("clip_c must be positive");
    if (std::isnan(config.snr_db)) throw InvalidConfig("snr_db must not be NaN");
    if (std::isinf(config.snr_db) && config.snr_db < 0)
        throw InvalidConfig("snr_db must not be -inf");
    if (config.T < 1) throw InvalidConfig("T must be at least 1");
    if (config.L < 1) throw InvalidConfig("L must be at least 1");
    if (config.trials < 1) throw InvalidConfig("trials must be at least 1");
    if (config.algorithms.empty()) throw InvalidConfig("algorithms must not be empty");
    std::set<std::string> seen;
    for (const std::string& a : config.algorithms) {
        if (!is_known_algorithm(a))
            throw InvalidConfig(
                "unknown algorithm \"" + a +
                "\" (known: bo-gmamp, gvamp, se, gvamp-se)");
        if (!seen.insert(a).second) throw InvalidConfig("algorithm listed twice: " + a);
    }
    if (config.se_sample_budget < 10000)
        throw InvalidConfig("se_sample_budget must be at least 1e4");
    if (config.threads < 0) throw InvalidConfig("threads must be nonnegative");
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw InvalidConfig("config must be a JSON object");

    ExperimentConfig c;
    static const std::set<std::string> known = {
        "N",          "delta",          "kappa",           "mu",
        "clip_c",     "snr_db",         "T",               "L",
        "algorithms", "trials",         "seed",            "cov_mode",
        "theta_optimized", "xi_optimized", "operator_kind", "se_sample_budget",
        "threads",    "out_dir"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw InvalidConfig("unknown config field: " + key);
        (void)value;
    }
    try {
        if (j.contains("N")) c.N = j["N"].get<int>();
        if (j.contains("delta")) c.delta = j["delta"].get<double>();
        if (j.contains("kappa")) c.kappa = j["kappa"].get<double>();
        if (j.contains("mu")) c.mu = j["mu"].get<double>();
        if (j.contains("clip_c")) c.clip_c = double_from_json(j["clip_c"], "clip_c");
        if (j.contains("snr_db")) c.snr_db = double_from_json(j["snr_db"], "snr_db");
        if (j.contains("T")) c.T = j["T"].get<int>();
        if (j.contains("L")) c.L = j["L"].get<int>();
        if (j.contains("algorithms"))
            c.algorithms = j["algorithms"].get<std::vector<std::string>>();
        if (j.contains("trials")) c.trials = j["trials"].get<int>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("cov_mode"))
            c.cov_mode = cov_mode_from_string(j["cov_mode"].get<std::string>());
        if (j.contains("theta_optimized")) c.theta_optimized = j["theta_optimized"].get<bool>();
        if (j.contains("xi_optimized")) c.xi_optimized = j["xi_optimized"].get<bool>();
        if (j.contains("operator_kind"))
            c.operator_kind = operator_kind_from_string(j["operator_kind"].get<std::string>());
        if (j.contains("se_sample_budget")) c.se_sample_budget = j["se_sample_budget"].get<int>();
        if (j.contains("threads")) c.threads = j["threads"].get<int>();
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    } catch (const json::type_error& e) {
        throw InvalidConfig(std::string("config field has the wrong type: ") + e.what());
    }
    validate_config(c);
    return c;
}

std::string config_to_json(const ExperimentConfig& config) {
    return config_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
    json j = config_json(config);
    j.erase("threads");
    j.erase("out_dir");
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return std::string(buf);
}

std::string build_id() { return GLMAMP_BUILD_ID; }

GlmInstance generate_instance(const ExperimentConfig& config, int trial_index) {
    validate_config(config);
    if (trial_index < 0) throw InvalidConfig("trial_index must be nonnegative");

    const int N = config.N;
    const int M = rows_of(config);
    Rng rng = Rng::stream(config.seed,
                          kInstanceStreamBase + static_cast<std::uint64_t>(trial_index));

    const std::uint64_t op_seed = rng.next_u64();
    SpectralOperator op =
        SpectralOperator::build(M, N, config.kappa, config.operator_kind, op_seed);

    const BernoulliGaussianPrior prior = BernoulliGaussianPrior::unit_power(config.mu);
    const double sd = std::sqrt(prior.v_g);
    Vec x(N);
    for (int i = 0; i < N; ++i)
        x[i] = rng.uniform() < config.mu ? sd * rng.gaussian() : 0.0;

    Vec z = op.apply(x);
    Vec clipped = clip(z, config.clip_c);

    const double clip_power = clipped.squaredNorm() / M;
    const double sigma2 =
        std::max(clip_power * std::pow(10.0, -config.snr_db / 10.0), kNoiseFloor);

    Vec y = clipped;
    const double noise_sd = std::sqrt(sigma2);
    for (int i = 0; i < M; ++i) y[i] += noise_sd * rng.gaussian();

    return GlmInstance{std::move(op),  prior,        ClipChannel{config.clip_c, sigma2},
                       std::move(x),   std::move(z), std::move(y),
                       config.seed};
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool persist) {
    validate_config(config);

    ExperimentResult result;
    result.config = config;
    result.hash = config_hash(config);
    result.build = build_id();
    if (std::isinf(config.snr_db))
        result.notes.push_back("snr_db = inf: noise variance floored at 1e-12");

    const int M = rows_of(config);

    // The spectrum — hence the moment table and every state-evolution
    // quantity — is deterministic in (M, N, κ), so one computation serves all
    // trials and all predicted traces.
    const bool wants_bo = contains(config.algorithms, "bo-gmamp");
    const bool needs_schedule = wants_bo && config.cov_mode != CovMode::oracle;
    const bool any_predicted =
        std::any_of(config.algorithms.begin(), config.algorithms.end(), is_predicted_algorithm);

    std::optional<SpectralMoments> moments;
    if (needs_schedule || any_predicted) {
        SpectralOperator reference =
            SpectralOperator::build(M, config.N, config.kappa, config.operator_kind, 0);
        moments = compute_moments(reference, config.T);
    }

    SeConfig se_cfg;
    se_cfg.T = config.T;
    se_cfg.L = config.L;
    se_cfg.theta_optimized = config.theta_optimized;
    se_cfg.xi_optimized = config.xi_optimized;
    se_cfg.sample_budget = config.se_sample_budget;
    se_cfg.seed = config.seed;
    se_cfg.prior = BernoulliGaussianPrior::unit_power(config.mu);
    se_cfg.channel = ClipChannel{config.clip_c, 1.0};  // sigma2 resolved via snr_db
    se_cfg.snr_db = config.snr_db;

    std::optional<std::vector<SeScheduleEntry>> schedule;
    if (needs_schedule) schedule = se_covariance_schedule(*moments, se_cfg);

    BoGmampConfig bo_cfg;
    bo_cfg.T = config.T;
    bo_cfg.L = config.L;
    bo_cfg.cov_mode = config.cov_mode;
    bo_cfg.theta_optimized = config.theta_optimized;
    bo_cfg.xi_optimized = config.xi_optimized;
    bo_cfg.seed = config.seed;
    bo_cfg.se_sample_budget = config.se_sample_budget;

    struct Task {
        std::string algorithm;
        int trial = 0;
    };
    std::vector<Task> tasks;
    for (const std::string& name : config.algorithms) {
        const int n_trials = is_predicted_algorithm(name) ? 1 : config.trials;
        for (int trial = 0; trial < n_trials; ++trial) tasks.push_back({name, trial});
    }

    // Disjoint result slots indexed by task; collection below walks them in
    // task order, so artifacts do not depend on scheduling or thread count.
    std::vector<std::optional<TrialTrace>> done(tasks.size());
    std::vector<std::optional<TrialFailure>> failed(tasks.size());
    std::atomic<std::size_t> next{0};

    auto run_task = [&](const Task& task) -> IterationTrace {
        if (task.algorithm == "se") return predicted_trace("se", run_se(*moments, se_cfg));
        if (task.algorithm == "gvamp-se")
            return predicted_trace(
                "gvamp-se", gvamp_se(se_cfg.prior, se_cfg.channel, *moments, config.T,
                                     config.se_sample_budget, config.seed, config.snr_db));
        GlmInstance instance = generate_instance(config, task.trial);
        if (task.algorithm == "bo-gmamp")
            return run_bo_gmamp(instance, bo_cfg, nullptr,
                                schedule ? &*schedule : nullptr);
        return run_gvamp(instance, config.T);
    };

    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            const Task& task = tasks[i];
            try {
                IterationTrace trace = run_task(task);
                trace.config_hash = result.hash;
                trace.build_id = result.build;
                done[i] = TrialTrace{task.trial, std::move(trace)};
            } catch (const std::exception& e) {
                failed[i] = TrialFailure{task.algorithm, task.trial, e.what()};
            }
        }
    };

    int n_threads = config.threads > 0
                        ? config.threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp<int>(n_threads, 1, static_cast<int>(tasks.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (done[i]) result.traces.push_back(std::move(*done[i]));
        if (failed[i]) result.failures.push_back(std::move(*failed[i]));
    }

    // Median / IQR over the trials that reached each iteration.
    for (const std::string& name : config.algorithms) {
        AlgorithmAggregate agg;
        agg.algorithm = name;
        std::size_t max_len = 0;
        for (const TrialTrace& tt : result.traces)
            if (tt.trace.algorithm == name) max_len = std::max(max_len, tt.trace.records.size());
        for (std::size_t k = 0; k < max_len; ++k) {
            std::vector<double> vals;
            int t = 0;
            for (const TrialTrace& tt : result.traces) {
                if (tt.trace.algorithm != name || k >= tt.trace.records.size()) continue;
                vals.push_back(tt.trace.records[k].mse_x);
                t = tt.trace.records[k].t;
            }
            if (vals.empty()) continue;
            std::sort(vals.begin(), vals.end());
            AggregatePoint p;
            p.t = t;
            p.n = static_cast<int>(vals.size());
            p.mse_median = quantile_sorted(vals, 0.5);
            p.mse_q1 = quantile_sorted(vals, 0.25);
            p.mse_q3 = quantile_sorted(vals, 0.75);
            p.mse_db_median = to_db(p.mse_median);
            agg.points.push_back(p);
        }
        result.aggregates.push_back(std::move(agg));
    }

    if (persist) {
        namespace fs = std::filesystem;
        const fs::path dir(config.out_dir);
        write_atomic((dir / "run.json").string(), result_json(result));
        write_atomic((dir / "traces.csv").string(), traces_csv(result));
        write_atomic((dir / "aggregate.csv").string(), aggregate_csv(result));
    }
    return result;
}

std::string traces_csv(const ExperimentResult& result) {
    std::string out = "t,algorithm,trial,mse,mse_db,wall_ms\n";
    for (const TrialTrace& tt : result.traces)
        for (const IterationRecord& rec : tt.trace.records) {
            out += std::to_string(rec.t);
            out += ',';
            out += tt.trace.algorithm;
            out += ',';
            out += std::to_string(tt.trial);
            out += ',';
            out += fmt_double(rec.mse_x);
            out += ',';
            out += fmt_double(rec.mse_x_db);
            out += ',';
            out += fmt_double(rec.wall_ms);
            out += '\n';
        }
    return out;
}

std::string aggregate_csv(const ExperimentResult& result) {
    std::string out = "t,algorithm,n,mse_median,mse_q1,mse_q3,mse_db_median\n";
    for (const AlgorithmAggregate& agg : result.aggregates)
        for (const AggregatePoint& p : agg.points) {
            out += std::to_string(p.t);
            out += ',';
            out += agg.algorithm;
            out += ',';
            out += std::to_string(p.n);
            out += ',';
            out += fmt_double(p.mse_median);
            out += ',';
            out += fmt_double(p.mse_q1);
            out += ',';
            out += fmt_double(p.mse_q3);
            out += ',';
            out += fmt_double(p.mse_db_median);
            out += '\n';
        }
    return out;
}

std::string result_json(const ExperimentResult& result) {
    json j;
    j["schema_version"] = 1;
    j["config"] = config_json(result.config);
    j["config_hash"] = result.hash;
    j["build_id"] = result.build;
    j["notes"] = result.notes;

    j["failures"] = json::array();
    for (const TrialFailure& f : result.failures)
        j["failures"].push_back(
            {{"algorithm", f.algorithm}, {"trial", f.trial}, {"message", f.message}});

    j["traces"] = json::array();
    for (const TrialTrace& tt : result.traces) {
        json trace;
        trace["algorithm"] = tt.trace.algorithm;
        trace["kind"] = tt.trace.kind;
        trace["trial"] = tt.trial;
        trace["seed"] = tt.trace.seed;
        trace["termination"] = tt.trace.termination;
        trace["notes"] = tt.trace.notes;
        trace["records"] = json::array();
        for (const IterationRecord& rec : tt.trace.records)
            trace["records"].push_back({{"t", rec.t},
                                        {"mse", rec.mse_x},
                                        {"mse_db", rec.mse_x_db},
                                        {"v_x_predicted", json_double(rec.v_x_predicted)},
                                        {"wall_ms", rec.wall_ms}});
        j["traces"].push_back(std::move(trace));
    }

    j["aggregates"] = json::array();
    for (const AlgorithmAggregate& agg : result.aggregates) {
        json a;
        a["algorithm"] = agg.algorithm;
        a["points"] = json::array();
        for (const AggregatePoint& p : agg.points)
            a["points"].push_back({{"t", p.t},
                                   {"n", p.n},
                                   {"mse_median", p.mse_median},
                                   {"mse_q1", p.mse_q1},
                                   {"mse_q3", p.mse_q3},
                                   {"mse_db_median", p.mse_db_median}});
        j["aggregates"].push_back(std::move(a));
    }
    return j.dump(2) + "\n";
}

void write_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    std::error_code ec;
    if (target.has_parent_path()) {
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + target.parent_path().string() +
                              ": " + ec.message());
    }
    fs::path tmp = target;
    tmp += ".tmp-" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) {
            fs::remove(tmp, ec);
            throw IoError("write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move artifact into place at " + path + ": " + ec.message());
    }
}

TraceComparison compare_traces(const std::vector<double>& mse_a,
                               const std::vector<double>& mse_b, double tol_db,
                               int from_t) {
    if (mse_a.empty() || mse_b.empty()) throw InvalidConfig("cannot compare an empty trace");
    if (mse_a.size() != mse_b.size())
        throw DimensionMismatch("trace length mismatch: " + std::to_string(mse_a.size()) +
                                " vs " + std::to_string(mse_b.size()));
    if (from_t < 1 || from_t > static_cast<int>(mse_a.size()))
        throw InvalidConfig("from_t outside the trace range");
    if (!(tol_db >= 0.0)) throw InvalidConfig("tol_db must be nonnegative");

    TraceComparison cmp;
    for (std::size_t i = 0; i < mse_a.size(); ++i) {
        const double gap = std::abs(to_db(mse_a[i]) - to_db(mse_b[i]));
        cmp.gap_db.push_back(gap);
        if (static_cast<int>(i) + 1 >= from_t) {
            cmp.max_gap_db = std::max(cmp.max_gap_db, gap);
            ++cmp.compared;
        }
    }
    cmp.converged_gap_db = cmp.gap_db.back();
    cmp.pass = cmp.max_gap_db <= tol_db;
    return cmp;
}

CsvSeries load_mse_series(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open " + csv_path);

    std::string line;
    if (!std::getline(in, line)) throw InvalidConfig(csv_path + ": empty file");
    const std::vector<std::string> header = split_csv_line(line);
    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw InvalidConfig(csv_path + ": missing column \"" + name + "\"");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t t_col = column("t");
    const std::size_t algo_col = column("algorithm");
    const std::size_t mse_col = column("mse");

    CsvSeries series;
    std::map<int, std::vector<double>> by_t;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw InvalidConfig(csv_path + ":" + std::to_string(line_no) +
                                ": wrong number of fields");
        try {
            const int t = std::stoi(fields[t_col]);
            const double mse = std::stod(fields[mse_col]);
            if (t < 1) throw std::invalid_argument("t");
            by_t[t].push_back(mse);
        } catch (const std::exception&) {
            throw InvalidConfig(csv_path + ":" + std::to_string(line_no) +
                                ": unparsable numeric field");
        }
        const std::string& algo = fields[algo_col];
        if (series.algorithm.empty()) {
            series.algorithm = algo;
        } else if (series.algorithm != algo) {
            throw InvalidConfig(csv_path + ": contains more than one algorithm (" +
                                series.algorithm + ", " + algo + ")");
        }
    }
    if (by_t.empty()) throw InvalidConfig(csv_path + ": no data rows");

    const int max_t = by_t.rbegin()->first;
    for (int t = 1; t <= max_t; ++t) {
        auto it = by_t.find(t);
        if (it == by_t.end())
            throw InvalidConfig(csv_path + ": missing iteration t=" + std::to_string(t));
        std::vector<double>& vals = it->second;
        std::sort(vals.begin(), vals.end());
        series.mse.push_back(quantile_sorted(vals, 0.5));
    }
    return series;
}

}  // namespace glmamp
