#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hteguard/data.hpp"
#include "hteguard/mht.hpp"
#include "hteguard/types.hpp"

namespace hteguard::sim {

enum class Regime { OrthogonalGaussian, NonGaussianTO, NonOrthogonal };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

struct Scenario {
    Regime regime = Regime::OrthogonalGaussian;
    Index n_units = 3000;
    Index n_vars = 30;      // subgroups or continuous variables
    Index n_signals = 10;   // heterogeneous subgroups/variables
    double amplitude = 1.0; // treatment-effect size of the signals
    double correlation = 0.5; // AR(1) rho, NonOrthogonal only
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    std::vector<std::string> signal_labels; // sorted
    Vector per_unit_tau;
};

struct FdrPowerCurve {
    mht::Method method = mht::Method::BH;
    Regime regime = Regime::OrthogonalGaussian;
    Vector amplitudes;
    Vector fdr;
    Vector fdr_se;
    Vector power;
    Vector power_se;
    int replicates = 0;
};

// Deterministic in (scenario.seed, replicate). Units are split exactly in
// half between treatment and control; signals carry an additive treatment
// effect of +/- amplitude (alternating sign, so the average effect is zero
// for an even signal count).
std::pair<data::ExperimentDataset, GroundTruth> generate(const Scenario& scenario,
                                                         int replicate);

// Sweep of scenarios sharing a regime, geometric amplitude grid.
std::vector<Scenario> default_sweep(Regime regime,
                                    std::uint64_t seed = 0,
                                    Index n_units = 3000,
                                    Index n_vars = 30,
                                    Index n_signals = 10,
                                    double rho = 0.5,
                                    int n_amplitudes = 8,
                                    double amp_min = 0.05,
                                    double amp_max = 2.0);

// Empirical FDR and power per (method, amplitude). Replicates run
// concurrently on derived seeds; results do not depend on scheduling.
// max_threads = 0 uses the hardware count, capped by HTE_GUARD_THREADS.
std::vector<FdrPowerCurve> evaluate(const std::vector<Scenario>& sweep,
                                    const std::vector<mht::Method>& methods,
                                    int replicates,
                                    double q,
                                    int max_threads = 0);

int resolve_thread_count(int requested);

} // namespace hteguard::sim
