#include "hteguard/mht.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "hteguard/errors.hpp"

namespace hteguard::mht {

std::string method_name(Method m) {
    switch (m) {
        case Method::Naive: return "naive";
        case Method::Bonferroni: return "bonferroni";
        case Method::BH: return "bh";
        case Method::Knockoff: return "knockoff";
    }
    return "unknown";
}

Method method_from_name(const std::string& name) {
    if (name == "naive") return Method::Naive;
    if (name == "bonferroni") return Method::Bonferroni;
    if (name == "bh") return Method::BH;
    if (name == "knockoff") return Method::Knockoff;
    throw ConfigError("unknown method '" + name + "' (use naive|bonferroni|bh|knockoff)");
}

void PValueSet::validate() const {
    if (static_cast<Index>(labels.size()) != pvalues.size()) {
        throw DimensionError("PValueSet: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(pvalues.size()) + " p-values");
    }
    std::set<std::string> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l).second) {
            throw Error("PValueSet: duplicate label '" + l + "'");
        }
    }
    for (Index i = 0; i < pvalues.size(); ++i) {
        if (!(pvalues(i) >= 0.0 && pvalues(i) <= 1.0)) {
            throw Error("PValueSet: p-value " + std::to_string(pvalues(i)) + " for label '" +
                        labels[i] + "' is outside [0,1]");
        }
    }
}

std::vector<std::string> SelectionResult::selected_labels() const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (selected[i]) out.push_back(labels[i]);
    }
    return out;
}

Index SelectionResult::selected_count() const {
    return static_cast<Index>(std::count(selected.begin(), selected.end(), true));
}

namespace {

void require_level(double level, const char* op) {
    if (!(level > 0.0 && level < 1.0)) {
        throw ConfigError(std::string(op) + ": level must be in (0,1), got " +
                          std::to_string(level));
    }
}

SelectionResult cutoff_select(const PValueSet& pv, double cutoff, Method method, double level) {
    SelectionResult r;
    r.method = method;
    r.labels = pv.labels;
    r.evidence = pv.pvalues;
    r.selected.resize(pv.labels.size());
    for (std::size_t i = 0; i < pv.labels.size(); ++i) {
        r.selected[i] = pv.pvalues(static_cast<Index>(i)) < cutoff;
    }
    r.threshold = cutoff;
    r.target_level = level;
    return r;
}

} // namespace

SelectionResult naive_select(const PValueSet& pv, double alpha) {
    require_level(alpha, "naive_select");
    pv.validate();
    return cutoff_select(pv, alpha, Method::Naive, alpha);
}

SelectionResult bonferroni_select(const PValueSet& pv, double alpha) {
    require_level(alpha, "bonferroni_select");
    pv.validate();
    if (pv.pvalues.size() < 1) throw Error("bonferroni_select: empty p-value set");
    const double m = static_cast<double>(pv.pvalues.size());
    return cutoff_select(pv, alpha / m, Method::Bonferroni, alpha);
}

SelectionResult bh_select(const PValueSet& pv, double q) {
    require_level(q, "bh_select");
    pv.validate();
    const Index m = pv.pvalues.size();
    if (m < 1) throw Error("bh_select: empty p-value set");

    std::vector<Index> order(m);
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        if (pv.pvalues(a) != pv.pvalues(b)) return pv.pvalues(a) < pv.pvalues(b);
        return pv.labels[a] < pv.labels[b];
    });

    Index k = 0;
    for (Index i = m; i >= 1; --i) {
        if (pv.pvalues(order[i - 1]) <= static_cast<double>(i) / m * q) {
            k = i;
            break;
        }
    }

    SelectionResult r;
    r.method = Method::BH;
    r.labels = pv.labels;
    r.evidence = pv.pvalues;
    r.selected.assign(pv.labels.size(), false);
    for (Index i = 0; i < k; ++i) r.selected[static_cast<std::size_t>(order[i])] = true;
    if (k > 0) r.threshold = static_cast<double>(k) / m * q;
    r.target_level = q;
    return r;
}

} // namespace hteguard::mht
