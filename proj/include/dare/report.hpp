#pragma once

// CSV and JSON serialization of metrics, traces and analysis tables.
//
// Numbers use 6 significant digits, '.' as the decimal separator and no
// locale dependence. Column orders are fixed:
//   dice.csv            label,dice
//   summary.csv         mean_dice,pct_jac_ge1,pct_jac_le0,strain_energy
//   volume_change.csv   label,moving_voxels,warped_voxels,percent_change
//   histogram CSVs      bin_lo,bin_hi,count
//   curves.csv          g,lambda_hat,mu_hat,alpha_hat
//   scatter.csv         g,lambda_hat,mu_hat,alpha_hat,e_strain,e_shear,e_total,folding
//   trace.csv           level,iteration,sim,reg,strain,shear,folding,total

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dare/metrics.hpp"
#include "dare/optimizer.hpp"

namespace dare {

std::string format_number(double v);

std::string dice_csv(const DiceResult &d);
std::string summary_csv(const MetricsReport &r);
std::string volume_change_csv(const std::map<std::int32_t, VolumeChange> &changes);
std::string histogram_csv(const Histogram &h);
std::string curves_csv(const std::vector<CurvePoint> &curves);
std::string scatter_csv(const std::vector<ParameterRecord> &records);
std::string trace_csv(const OptimizationTrace &trace);

nlohmann::ordered_json metrics_json(const MetricsReport &r);

// Writes text exactly as given; throws IoError on failure.
void write_text(const std::filesystem::path &path, const std::string &text);

} // namespace dare
