#include "hteguard/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include "hteguard/errors.hpp"
#include "hteguard/knockoff.hpp"
#include "hteguard/pipelines.hpp"
#include "hteguard/rng.hpp"

namespace hteguard::sim {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::OrthogonalGaussian: return "orthogonal-gaussian";
        case Regime::NonGaussianTO: return "non-gaussian-to";
        case Regime::NonOrthogonal: return "non-orthogonal";
    }
    return "unknown";
}

Regime regime_from_name(const std::string& name) {
    if (name == "orthogonal-gaussian") return Regime::OrthogonalGaussian;
    if (name == "non-gaussian-to") return Regime::NonGaussianTO;
    if (name == "non-orthogonal") return Regime::NonOrthogonal;
    throw ConfigError("unknown regime '" + name +
                      "' (use orthogonal-gaussian|non-gaussian-to|non-orthogonal)");
}

void Scenario::validate() const {
    if (n_units < 2) throw ConfigError("scenario: n_units must be >= 2");
    if (n_units % 2 != 0) throw ConfigError("scenario: n_units must be even for a 50/50 split");
    if (n_vars < 1) throw ConfigError("scenario: n_vars must be >= 1");
    if (n_signals < 0 || n_signals > n_vars) {
        throw ConfigError("scenario: need 0 <= n_signals <= n_vars");
    }
    if (n_units < 2 * n_vars) throw ConfigError("scenario: need n_units >= 2 * n_vars");
    if (!(correlation >= 0.0 && correlation < 1.0)) {
        throw ConfigError("scenario: correlation must be in [0,1)");
    }
    if (amplitude < 0.0) throw ConfigError("scenario: amplitude must be >= 0");
}

namespace {

std::string padded_label(const char* prefix, Index i, Index max_value) {
    std::string digits = std::to_string(max_value);
    std::string s = std::to_string(i);
    return std::string(prefix) + std::string(digits.size() - s.size(), '0') + s;
}

// zero-inflated heavy-tailed noise with unit variance:
// 0 w.p. 0.7, else a scaled Student t with 3 df
double mixture_noise(rngutil::Rng& rng) {
    if (rng.uniform() < 0.7) return 0.0;
    const double scale = 1.0 / std::sqrt(0.9); // 0.3 * scale^2 * Var(t_3) = 1
    return scale * rng.student_t(3) / std::sqrt(3.0);
}

} // namespace

std::pair<data::ExperimentDataset, GroundTruth> generate(const Scenario& scenario,
                                                         int replicate) {
    scenario.validate();
    rngutil::Rng rng(rngutil::derive_seed(scenario.seed, static_cast<std::uint64_t>(replicate)));

    const Index n = scenario.n_units;
    const Index p = scenario.n_vars;
    const Index k = scenario.n_signals;

    data::ExperimentDataset ds;
    ds.assignment_probability = 0.5;
    ds.unit_ids.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ds.unit_ids.push_back(padded_label("u", i, n - 1));

    // exact 50/50 random split
    std::vector<std::uint8_t> treatment(static_cast<std::size_t>(n), 0);
    std::fill(treatment.begin(), treatment.begin() + static_cast<std::ptrdiff_t>(n / 2), 1);
    rng.shuffle(treatment);
    ds.treatment = std::move(treatment);

    GroundTruth gt;
    gt.per_unit_tau.resize(n);
    ds.outcome.resize(n);

    if (scenario.regime == Regime::NonOrthogonal) {
        // AR(1) continuous covariates, linear treatment effect on the signals
        std::vector<Vector> x(static_cast<std::size_t>(p));
        for (Index j = 0; j < p; ++j) x[static_cast<std::size_t>(j)].resize(n);
        const double rho = scenario.correlation;
        const double innov = std::sqrt(1.0 - rho * rho);
        for (Index i = 0; i < n; ++i) {
            double prev = rng.normal();
            x[0](i) = prev;
            for (Index j = 1; j < p; ++j) {
                prev = rho * prev + innov * rng.normal();
                x[static_cast<std::size_t>(j)](i) = prev;
            }
        }
        for (Index j = 0; j < p; ++j) {
            ds.continuous[padded_label("x", j, p - 1)] = x[static_cast<std::size_t>(j)];
        }
        for (Index i = 0; i < n; ++i) {
            double tau = 0.0;
            for (Index j = 0; j < k; ++j) tau += scenario.amplitude * x[static_cast<std::size_t>(j)](i);
            gt.per_unit_tau(i) = tau;
            const double t = ds.treatment[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            ds.outcome(i) = tau * t + rng.normal();
        }
        for (Index j = 0; j < k; ++j) gt.signal_labels.push_back(padded_label("x", j, p - 1));
    } else {
        // equal-size one-hot subgroups; signal groups alternate +/- amplitude
        data::CategoricalColumn group;
        group.levels.reserve(static_cast<std::size_t>(p));
        for (Index g = 0; g < p; ++g) group.levels.push_back(padded_label("g", g, p - 1));
        group.codes.resize(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) group.codes[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(i % p);

        Vector tau_of_group = Vector::Zero(p);
        for (Index g = 0; g < k; ++g) {
            tau_of_group(g) = scenario.amplitude * (g % 2 == 0 ? 1.0 : -1.0);
        }
        const bool gaussian = scenario.regime == Regime::OrthogonalGaussian;
        for (Index i = 0; i < n; ++i) {
            const double tau = tau_of_group(i % p);
            gt.per_unit_tau(i) = tau;
            const double t = ds.treatment[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
            const double noise = gaussian ? rng.normal() : mixture_noise(rng);
            ds.outcome(i) = tau * t + noise;
        }
        ds.categorical["group"] = std::move(group);
        for (Index g = 0; g < k; ++g) gt.signal_labels.push_back(padded_label("g", g, p - 1));
    }

    std::sort(gt.signal_labels.begin(), gt.signal_labels.end());
    ds.validate();
    return {std::move(ds), std::move(gt)};
}

std::vector<Scenario> default_sweep(Regime regime,
                                    std::uint64_t seed,
                                    Index n_units,
                                    Index n_vars,
                                    Index n_signals,
                                    double rho,
                                    int n_amplitudes,
                                    double amp_min,
                                    double amp_max) {
    if (n_amplitudes < 1) throw ConfigError("default_sweep: need at least one amplitude");
    std::vector<Scenario> sweep;
    for (int a = 0; a < n_amplitudes; ++a) {
        Scenario s;
        s.regime = regime;
        s.n_units = n_units;
        s.n_vars = n_vars;
        s.n_signals = n_signals;
        s.correlation = regime == Regime::NonOrthogonal ? rho : 0.0;
        s.seed = seed;
        s.amplitude =
            n_amplitudes == 1
                ? amp_max
                : amp_min * std::pow(amp_max / amp_min,
                                     static_cast<double>(a) / (n_amplitudes - 1));
        s.validate();
        sweep.push_back(s);
    }
    return sweep;
}

int resolve_thread_count(int requested) {
    int threads = requested > 0 ? requested
                                : static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    if (const char* cap = std::getenv("HTE_GUARD_THREADS")) {
        const int limit = std::atoi(cap);
        if (limit >= 1) threads = std::min(threads, limit);
    }
    return threads;
}

namespace {

struct MethodOutcome {
    double fdr = 0.0;
    double power = 0.0;
};

MethodOutcome score(const std::vector<std::string>& selected,
                    const std::vector<std::string>& signals,
                    Index k) {
    const std::set<std::string> signal_set(signals.begin(), signals.end());
    Index false_pos = 0, true_pos = 0;
    for (const auto& label : selected) {
        if (signal_set.count(label)) {
            ++true_pos;
        } else {
            ++false_pos;
        }
    }
    MethodOutcome o;
    const auto r = static_cast<double>(selected.size());
    o.fdr = r > 0.0 ? static_cast<double>(false_pos) / r : 0.0;
    o.power = k > 0 ? static_cast<double>(true_pos) / static_cast<double>(k) : 0.0;
    return o;
}

std::vector<MethodOutcome> run_replicate(const Scenario& scenario,
                                         int replicate,
                                         const std::vector<mht::Method>& methods,
                                         double q) {
    auto [ds, gt] = generate(scenario, replicate);
    const std::uint64_t knockoff_seed =
        rngutil::derive_seed(scenario.seed ^ 0x6b6e6f636bULL, static_cast<std::uint64_t>(replicate));

    const bool subgroups = scenario.regime != Regime::NonOrthogonal;

    // p-value methods share one regression; the knockoff runs on the same design
    bool need_pvalues = false;
    for (auto m : methods) need_pvalues |= m != mht::Method::Knockoff;

    mht::PValueSet pvalues;
    if (need_pvalues) {
        if (subgroups) {
            pvalues = pipelines::subgroup_pvalues(ds, "group").pvalues;
        } else {
            std::vector<std::string> names;
            for (const auto& [name, col] : ds.continuous) names.push_back(name);
            std::sort(names.begin(), names.end());
            const data::DesignMatrix design = data::build_factor_design(ds, {}, names);
            // drop the intercept; covariates are centered already
            data::DesignMatrix tested;
            tested.matrix = design.matrix.rightCols(design.p() - 1);
            tested.labels.assign(design.labels.begin() + 1, design.labels.end());
            const Vector y =
                data::center_by_ate(data::transformed_outcomes(ds), data::estimate_ate(ds));
            pvalues = pipelines::ols_pvalues(tested, y).pvalues;
        }
    }

    std::vector<MethodOutcome> outcomes;
    outcomes.reserve(methods.size());
    for (auto m : methods) {
        std::vector<std::string> selected;
        switch (m) {
            case mht::Method::Naive:
                selected = mht::naive_select(pvalues, q).selected_labels();
                break;
            case mht::Method::Bonferroni:
                selected = mht::bonferroni_select(pvalues, q).selected_labels();
                break;
            case mht::Method::BH:
                selected = mht::bh_select(pvalues, q).selected_labels();
                break;
            case mht::Method::Knockoff: {
                if (subgroups) {
                    const pipelines::SubgroupReport rep =
                        pipelines::knockoff_subgroups(ds, "group", q, knockoff_seed);
                    for (const auto& row : rep.per_subgroup) {
                        if (row.selected) selected.push_back(row.label);
                    }
                } else {
                    std::vector<std::string> names;
                    for (const auto& [name, col] : ds.continuous) names.push_back(name);
                    std::sort(names.begin(), names.end());
                    const pipelines::FactorReport rep =
                        pipelines::hte_knockoff(ds, {}, names, q, knockoff_seed);
                    for (const auto& row : rep.per_column) {
                        if (row.selected) selected.push_back(row.label);
                    }
                }
                break;
            }
        }
        outcomes.push_back(score(selected, gt.signal_labels, scenario.n_signals));
    }
    return outcomes;
}

} // namespace

std::vector<FdrPowerCurve> evaluate(const std::vector<Scenario>& sweep,
                                    const std::vector<mht::Method>& methods,
                                    int replicates,
                                    double q,
                                    int max_threads) {
    if (sweep.empty()) throw ConfigError("evaluate: empty scenario sweep");
    if (methods.empty()) throw ConfigError("evaluate: no methods requested");
    if (replicates < 1) throw ConfigError("evaluate: replicates must be >= 1");
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("evaluate: q must be in (0,1)");
    const Regime regime = sweep.front().regime;
    for (const auto& s : sweep) {
        s.validate();
        if (s.regime != regime) throw ConfigError("evaluate: sweep mixes regimes");
    }

    const auto n_amps = static_cast<Index>(sweep.size());
    const auto n_methods = static_cast<Index>(methods.size());

    // outcome[amplitude](replicate, method); filled by index so thread
    // scheduling cannot change the aggregate
    std::vector<Matrix> fdr_raw(static_cast<std::size_t>(n_amps)),
        power_raw(static_cast<std::size_t>(n_amps));
    for (Index a = 0; a < n_amps; ++a) {
        fdr_raw[static_cast<std::size_t>(a)].resize(replicates, n_methods);
        power_raw[static_cast<std::size_t>(a)].resize(replicates, n_methods);
    }

    const int total_tasks = static_cast<int>(n_amps) * replicates;
    std::atomic<int> next_task{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        while (true) {
            const int task = next_task.fetch_add(1);
            if (task >= total_tasks) return;
            const Index a = task / replicates;
            const int rep = task % replicates;
            try {
                const auto outcomes =
                    run_replicate(sweep[static_cast<std::size_t>(a)], rep, methods, q);
                for (Index m = 0; m < n_methods; ++m) {
                    fdr_raw[static_cast<std::size_t>(a)](rep, m) = outcomes[static_cast<std::size_t>(m)].fdr;
                    power_raw[static_cast<std::size_t>(a)](rep, m) = outcomes[static_cast<std::size_t>(m)].power;
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next_task.store(total_tasks);
                return;
            }
        }
    };

    const int threads = std::min(resolve_thread_count(max_threads), total_tasks);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<FdrPowerCurve> curves;
    for (Index m = 0; m < n_methods; ++m) {
        FdrPowerCurve c;
        c.method = methods[static_cast<std::size_t>(m)];
        c.regime = regime;
        c.replicates = replicates;
        c.amplitudes.resize(n_amps);
        c.fdr.resize(n_amps);
        c.fdr_se.resize(n_amps);
        c.power.resize(n_amps);
        c.power_se.resize(n_amps);
        for (Index a = 0; a < n_amps; ++a) {
            c.amplitudes(a) = sweep[static_cast<std::size_t>(a)].amplitude;
            const Vector f = fdr_raw[static_cast<std::size_t>(a)].col(m);
            const Vector p = power_raw[static_cast<std::size_t>(a)].col(m);
            c.fdr(a) = f.mean();
            c.power(a) = p.mean();
            const double denom = replicates > 1 ? static_cast<double>(replicates - 1) : 1.0;
            c.fdr_se(a) = std::sqrt((f.array() - c.fdr(a)).square().sum() / denom /
                                    static_cast<double>(replicates));
            c.power_se(a) = std::sqrt((p.array() - c.power(a)).square().sum() / denom /
                                      static_cast<double>(replicates));
        }
        curves.push_back(std::move(c));
    }
    return curves;
}

} // namespace hteguard::sim
