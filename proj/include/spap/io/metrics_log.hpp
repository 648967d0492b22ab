#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spap::io {

struct MetricsRow {
    std::size_t step = 0;
    std::optional<double> loss_d, loss_g, loss_cyc, fid, psnr, ssim, gamma;
};

inline constexpr const char* kMetricsHeader = "step,loss_d,loss_g,loss_cyc,fid,psnr,ssim,gamma";

/// Shortest round-trip decimal; "inf"/"-inf"/"nan" for non-finite values.
inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline std::string format_row(const MetricsRow& r) {
    std::string s = std::to_string(r.step);
    for (const auto& v : {r.loss_d, r.loss_g, r.loss_cyc, r.fid, r.psnr, r.ssim, r.gamma}) {
        s += ',';
        if (v) s += format_real(*v);
    }
    return s;
}

/// Append-only CSV; absent fields are left empty.
class MetricsLog {
   public:
    MetricsLog() = default;
    explicit MetricsLog(const std::string& path) : path_(path) {
        std::ofstream f(path_, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write metrics log " + path_);
        f << kMetricsHeader << '\n';
    }

    void append(const MetricsRow& r) {
        rows_.push_back(r);
        if (path_.empty()) return;
        std::ofstream f(path_, std::ios::app);
        if (!f) throw std::runtime_error("cannot append to metrics log " + path_);
        f << format_row(r) << '\n';
    }

    const std::vector<MetricsRow>& rows() const { return rows_; }

   private:
    std::string path_;
    std::vector<MetricsRow> rows_;
};

}  // namespace spap::io
