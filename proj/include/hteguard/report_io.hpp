#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "hteguard/pipelines.hpp"
#include "hteguard/sim.hpp"

namespace hteguard::report_io {

// human-readable report text
std::string subgroup_report_text(const pipelines::SubgroupReport& rep);
std::string factor_report_text(const pipelines::FactorReport& rep);

// machine-readable CSV side files; numeric formatting is fixed so identical
// inputs produce byte-identical files
std::string subgroup_report_csv(const pipelines::SubgroupReport& rep);
std::string factor_report_csv(const pipelines::FactorReport& rep);
std::string fdr_power_csv(const std::vector<sim::FdrPowerCurve>& curves);

// lossless JSON round-trip (non-finite values encoded as strings)
nlohmann::json to_json(const pipelines::SubgroupReport& rep);
nlohmann::json to_json(const pipelines::FactorReport& rep);
pipelines::SubgroupReport subgroup_report_from_json(const nlohmann::json& j);
pipelines::FactorReport factor_report_from_json(const nlohmann::json& j);

void write_file(const std::string& path, const std::string& content);

} // namespace hteguard::report_io
