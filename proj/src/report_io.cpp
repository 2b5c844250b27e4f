#include "hteguard/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hteguard/errors.hpp"

namespace hteguard::report_io {

namespace {

using nlohmann::json;

// fixed shortest-ish general format, stable across runs
std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

json json_number(double v) {
    if (std::isnan(v)) return json("nan");
    if (std::isinf(v)) return json(v > 0 ? "inf" : "-inf");
    return json(v);
}

double number_from_json(const json& j) {
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw Error("report JSON: unexpected numeric string '" + s + "'");
    }
    return j.get<double>();
}

} // namespace

std::string subgroup_report_text(const pipelines::SubgroupReport& rep) {
    std::ostringstream os;
    os << "subgroup analysis (" << mht::method_name(rep.method) << ") on column '" << rep.column
       << "'\n";
    os << "  target level: " << fmt(rep.target_q) << "\n";
    os << "  estimated ATE: " << fmt(rep.ate) << "\n";
    if (rep.threshold) {
        os << "  selection threshold: " << fmt(*rep.threshold) << "\n";
    } else {
        os << "  selection threshold: none (nothing qualified)\n";
    }
    const bool knockoff = rep.method == mht::Method::Knockoff;
    os << "  " << rep.per_subgroup.size() << " subgroups, "
       << std::count_if(rep.per_subgroup.begin(), rep.per_subgroup.end(),
                        [](const pipelines::SubgroupRow& r) { return r.selected; })
       << " selected as heterogeneous (effect differs from ATE)\n\n";
    os << "  label | n | effect | " << (knockoff ? "W" : "t | p") << " | selected\n";
    for (const auto& row : rep.per_subgroup) {
        os << "  " << row.label << " | " << row.n_units << " | " << fmt(row.effect) << " | ";
        if (knockoff) {
            os << fmt(row.w);
        } else {
            os << fmt(row.t_statistic) << " | " << fmt(row.p_value);
        }
        os << " | " << (row.selected ? "yes" : "no") << "\n";
    }
    for (const auto& w : rep.warnings) os << "  warning: " << w << "\n";
    return os.str();
}

std::string factor_report_text(const pipelines::FactorReport& rep) {
    std::ostringstream os;
    os << "factor analysis (" << mht::method_name(rep.method) << ")\n";
    os << "  target level: " << fmt(rep.target_q) << "\n";
    os << "  estimated ATE: " << fmt(rep.ate) << "\n";
    os << "  knockoff threshold: " << fmt(rep.threshold) << "\n\n";
    os << "  column | W | selected\n";
    for (const auto& row : rep.per_column) {
        os << "  " << row.label << " | " << fmt(row.w) << " | " << (row.selected ? "yes" : "no")
           << "\n";
    }
    os << "\n";
    for (const auto& note : rep.interpretation_notes) os << "  note: " << note << "\n";
    return os.str();
}

std::string subgroup_report_csv(const pipelines::SubgroupReport& rep) {
    std::ostringstream os;
    const bool knockoff = rep.method == mht::Method::Knockoff;
    os << "label,n,effect," << (knockoff ? "w" : "p") << ",selected\n";
    for (const auto& row : rep.per_subgroup) {
        os << row.label << ',' << row.n_units << ',' << fmt(row.effect) << ','
           << fmt(knockoff ? row.w : row.p_value) << ',' << (row.selected ? 1 : 0) << "\n";
    }
    return os.str();
}

std::string factor_report_csv(const pipelines::FactorReport& rep) {
    std::ostringstream os;
    os << "label,w,selected\n";
    for (const auto& row : rep.per_column) {
        os << row.label << ',' << fmt(row.w) << ',' << (row.selected ? 1 : 0) << "\n";
    }
    return os.str();
}

std::string fdr_power_csv(const std::vector<sim::FdrPowerCurve>& curves) {
    std::ostringstream os;
    os << "method,regime,amplitude,fdr,fdr_se,power,power_se,replicates\n";
    for (const auto& c : curves) {
        for (Index a = 0; a < c.amplitudes.size(); ++a) {
            os << mht::method_name(c.method) << ',' << sim::regime_name(c.regime) << ','
               << fmt(c.amplitudes(a)) << ',' << fmt(c.fdr(a)) << ',' << fmt(c.fdr_se(a)) << ','
               << fmt(c.power(a)) << ',' << fmt(c.power_se(a)) << ',' << c.replicates << "\n";
        }
    }
    return os.str();
}

json to_json(const pipelines::SubgroupReport& rep) {
    json rows = json::array();
    for (const auto& row : rep.per_subgroup) {
        rows.push_back(json{{"label", row.label},
                            {"n", row.n_units},
                            {"effect", json_number(row.effect)},
                            {"t", json_number(row.t_statistic)},
                            {"p", json_number(row.p_value)},
                            {"w", json_number(row.w)},
                            {"selected", row.selected}});
    }
    json j{{"type", "subgroup_report"},
           {"method", mht::method_name(rep.method)},
           {"column", rep.column},
           {"ate", json_number(rep.ate)},
           {"target_q", json_number(rep.target_q)},
           {"subgroups", rows},
           {"warnings", rep.warnings}};
    if (rep.threshold) {
        j["threshold"] = json_number(*rep.threshold);
    } else {
        j["threshold"] = nullptr;
    }
    return j;
}

pipelines::SubgroupReport subgroup_report_from_json(const json& j) {
    pipelines::SubgroupReport rep;
    rep.method = mht::method_from_name(j.at("method").get<std::string>());
    rep.column = j.at("column").get<std::string>();
    rep.ate = number_from_json(j.at("ate"));
    rep.target_q = number_from_json(j.at("target_q"));
    if (!j.at("threshold").is_null()) rep.threshold = number_from_json(j.at("threshold"));
    for (const auto& row : j.at("subgroups")) {
        pipelines::SubgroupRow r;
        r.label = row.at("label").get<std::string>();
        r.n_units = row.at("n").get<Index>();
        r.effect = number_from_json(row.at("effect"));
        r.t_statistic = number_from_json(row.at("t"));
        r.p_value = number_from_json(row.at("p"));
        r.w = number_from_json(row.at("w"));
        r.selected = row.at("selected").get<bool>();
        rep.per_subgroup.push_back(std::move(r));
    }
    rep.warnings = j.at("warnings").get<std::vector<std::string>>();
    return rep;
}

json to_json(const pipelines::FactorReport& rep) {
    json rows = json::array();
    for (const auto& row : rep.per_column) {
        rows.push_back(json{{"label", row.label},
                            {"w", json_number(row.w)},
                            {"selected", row.selected}});
    }
    return json{{"type", "factor_report"},
                {"method", mht::method_name(rep.method)},
                {"ate", json_number(rep.ate)},
                {"target_q", json_number(rep.target_q)},
                {"threshold", json_number(rep.threshold)},
                {"columns", rows},
                {"notes", rep.interpretation_notes}};
}

pipelines::FactorReport factor_report_from_json(const json& j) {
    pipelines::FactorReport rep;
    rep.method = mht::method_from_name(j.at("method").get<std::string>());
    rep.ate = number_from_json(j.at("ate"));
    rep.target_q = number_from_json(j.at("target_q"));
    rep.threshold = number_from_json(j.at("threshold"));
    for (const auto& row : j.at("columns")) {
        rep.per_column.push_back(pipelines::FactorRow{row.at("label").get<std::string>(),
                                                      number_from_json(row.at("w")),
                                                      row.at("selected").get<bool>()});
    }
    rep.interpretation_notes = j.at("notes").get<std::vector<std::string>>();
    return rep;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
    if (!out) throw Error("failed writing '" + path + "'");
}

} // namespace hteguard::report_io
