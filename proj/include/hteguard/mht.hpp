#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hteguard/types.hpp"

namespace hteguard::mht {

enum class Method { Naive, Bonferroni, BH, Knockoff };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct PValueSet {
    std::vector<std::string> labels;
    Vector pvalues;

    void validate() const; // labels unique, sizes match, entries in [0,1]
};

struct SelectionResult {
    Method method = Method::Naive;
    std::vector<std::string> labels; // input order
    Vector evidence;                 // p-value or W statistic per label
    std::vector<bool> selected;      // parallel to labels
    std::optional<double> threshold; // none when nothing qualifies (BH k=0)
    double target_level = 0.0;       // alpha or q

    std::vector<std::string> selected_labels() const;
    Index selected_count() const;
};

// All labels with p < alpha, no correction.
SelectionResult naive_select(const PValueSet& pv, double alpha);

// All labels with p < alpha / m.
SelectionResult bonferroni_select(const PValueSet& pv, double alpha);

// Step-up rule: largest k with p_(k) <= (k/m) q, select the k smallest.
// Ties in p are broken by label order so output is deterministic.
SelectionResult bh_select(const PValueSet& pv, double q);

} // namespace hteguard::mht
