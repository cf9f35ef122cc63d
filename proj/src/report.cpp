#include "dare/report.hpp"

#include <charconv>
#include <fstream>

#include "dare/io.hpp"

namespace dare {

std::string format_number(double v) {
    if (v == 0.0) {
        return "0"; // also folds -0
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

namespace {

std::string row(std::initializer_list<std::string> cells) {
    std::string out;
    bool first = true;
    for (const std::string &c : cells) {
        if (!first) out += ',';
        out += c;
        first = false;
    }
    out += '\n';
    return out;
}

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

} // namespace

std::string dice_csv(const DiceResult &d) {
    std::string out = "label,dice\n";
    for (const auto &[label, value] : d.per_label) {
        out += row({std::to_string(label), num(value)});
    }
    return out;
}

std::string summary_csv(const MetricsReport &r) {
    return "mean_dice,pct_jac_ge1,pct_jac_le0,strain_energy\n" +
           row({num(r.dice.mean), num(r.jacobian.pct_ge1), num(r.jacobian.pct_le0), num(r.strain_energy)});
}

std::string volume_change_csv(const std::map<std::int32_t, VolumeChange> &changes) {
    std::string out = "label,moving_voxels,warped_voxels,percent_change\n";
    for (const auto &[label, vc] : changes) {
        out += row({std::to_string(label), num(vc.moving_voxels), num(vc.warped_voxels),
                    vc.percent ? num(*vc.percent) : std::string("undefined")});
    }
    return out;
}

std::string histogram_csv(const Histogram &h) {
    std::string out = "bin_lo,bin_hi,count\n";
    const std::size_t bins = h.counts.size();
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = h.lo + (h.hi - h.lo) * static_cast<double>(b) / static_cast<double>(bins);
        const double hi = h.lo + (h.hi - h.lo) * static_cast<double>(b + 1) / static_cast<double>(bins);
        out += row({num(lo), num(hi), num(h.counts[b])});
    }
    return out;
}

std::string curves_csv(const std::vector<CurvePoint> &curves) {
    std::string out = "g,lambda_hat,mu_hat,alpha_hat\n";
    for (const CurvePoint &p : curves) {
        out += row({num(p.g), num(p.lambda), num(p.mu), num(p.alpha)});
    }
    return out;
}

std::string scatter_csv(const std::vector<ParameterRecord> &records) {
    std::string out = "g,lambda_hat,mu_hat,alpha_hat,e_strain,e_shear,e_total,folding\n";
    for (const ParameterRecord &r : records) {
        out += row({num(r.g), num(r.lambda), num(r.mu), num(r.alpha), num(r.e_strain), num(r.e_shear), num(r.e_total),
                    num(r.folding)});
    }
    return out;
}

std::string trace_csv(const OptimizationTrace &trace) {
    std::string out = "level,iteration,sim,reg,strain,shear,folding,total\n";
    for (const TraceRecord &r : trace.records) {
        const EnergyBreakdown &e = r.energy;
        out += row({std::to_string(r.level), std::to_string(r.iteration), num(e.sim), num(e.reg), num(e.strain), num(e.shear),
                    num(e.folding), num(e.total)});
    }
    return out;
}

nlohmann::ordered_json metrics_json(const MetricsReport &r) {
    nlohmann::ordered_json j;
    nlohmann::ordered_json dice = nlohmann::ordered_json::object();
    for (const auto &[label, value] : r.dice.per_label) {
        dice[std::to_string(label)] = value;
    }
    j["dice_per_label"] = dice;
    j["mean_dice"] = r.dice.mean;
    j["pct_jac_ge1"] = r.jacobian.pct_ge1;
    j["pct_jac_in_0_1"] = r.jacobian.pct_in_0_1;
    j["pct_jac_le0"] = r.jacobian.pct_le0;
    j["min_jac_det"] = r.jacobian.min_det;
    j["strain_energy"] = r.strain_energy;
    j["strain_exceed_count"] = r.strain.exceed_count;
    auto hist = [](const Histogram &h) {
        nlohmann::ordered_json o;
        o["lo"] = h.lo;
        o["hi"] = h.hi;
        o["counts"] = h.counts;
        return o;
    };
    j["neg_jac_histogram"] = hist(r.jacobian.neg_histogram);
    j["strain_histogram"] = hist(r.strain.histogram);
    nlohmann::ordered_json vc = nlohmann::ordered_json::object();
    for (const auto &[label, change] : r.volume_changes) {
        nlohmann::ordered_json o;
        o["moving_voxels"] = change.moving_voxels;
        o["warped_voxels"] = change.warped_voxels;
        o["percent_change"] = change.percent ? nlohmann::ordered_json(*change.percent) : nlohmann::ordered_json("undefined");
        vc[std::to_string(label)] = o;
    }
    j["volume_changes"] = vc;
    return j;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(IoErrc::WriteFailed, "cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError(IoErrc::WriteFailed, "short write to " + path.string());
    }
}

} // namespace dare
