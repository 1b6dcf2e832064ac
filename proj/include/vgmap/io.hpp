#pragma once

// CSV interchange files with unit-suffixed headers, plus JSON sidecars.
// Numbers are written in shortest round-trip form so a file read back and
// rewritten is byte-identical.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "vgmap/digest.hpp"
#include "vgmap/errors.hpp"
#include "vgmap/extraction.hpp"
#include "vgmap/field.hpp"
#include "vgmap/reconstruction.hpp"
#include "vgmap/signal.hpp"

namespace vgmap::io {

inline constexpr const char* kToolVersion = "vgmap 0.1.0";

inline std::string format_number(double v)
{
    require(std::isfinite(v), "format_number: non-finite value");
    if (v == 0.0) {
        return "0";  // also folds -0
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

inline std::string format_optional(const std::optional<double>& v)
{
    return v ? format_number(*v) : std::string();
}

/// Parsed CSV with a header row; cells are kept as text.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(std::string_view name) const
    {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - header.begin());
    }
};

/// Canonical location text for error messages: data rows count from 1, the
/// file line is data row + 1.
inline std::string location(std::size_t row, std::string_view col)
{
    return "row " + std::to_string(row + 1) + " (line " + std::to_string(row + 2) + "), column '" +
           std::string(col) + "'";
}

inline std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                             : comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

inline CsvTable parse_csv(std::string_view text)
{
    CsvTable t;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty()) {
            continue;
        }
        auto cells = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(cells);
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw ValidationError("csv: line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " fields, header has " +
                                  std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) {
        throw ValidationError("csv: missing header row");
    }
    return t;
}

inline CsvTable read_csv(const std::filesystem::path& path)
{
    return parse_csv(read_file(path));
}

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : columns_(header.size())
    {
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells)
    {
        require(cells.size() == columns_, "csv: row width does not match header");
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k > 0) {
                out_ << ',';
            }
            out_ << cells[k];
        }
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    std::size_t columns_;
    std::ostringstream out_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) {
            throw IoError("cannot create directory " + path.parent_path().string());
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& path)
{
    return path.string() + ".meta.json";
}

/// Writes `text` to `path` and a sidecar naming the schema and the digest of
/// the producing config.
inline void write_with_sidecar(const std::filesystem::path& path, const std::string& text,
                               const std::string& schema, const std::string& config_digest)
{
    write_text(path, text);
    const nlohmann::json meta = {{"schema", schema},
                                 {"config_digest", config_digest},
                                 {"sha256", sha256_hex(text)},
                                 {"tool_version", kToolVersion}};
    write_text(sidecar_path(path), meta.dump(2) + "\n");
}

// ---- cell parsing -------------------------------------------------------

inline double parse_number(const CsvTable& t, std::size_t row, std::size_t col)
{
    const std::string& s = t.rows[row][col];
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw ValidationError(location(row, t.header[col]) + ": '" + s + "' is not a finite number");
    }
    return v;
}

inline std::optional<double> parse_optional(const CsvTable& t, std::size_t row, std::size_t col)
{
    if (t.rows[row][col].empty()) {
        return std::nullopt;
    }
    return parse_number(t, row, col);
}

inline bool parse_flag(const CsvTable& t, std::size_t row, std::size_t col)
{
    const std::string& s = t.rows[row][col];
    if (s == "0") {
        return false;
    }
    if (s == "1") {
        return true;
    }
    throw ValidationError(location(row, t.header[col]) + ": '" + s + "' is not 0 or 1");
}

/// Column indices for `names`, failing on the first one that is absent.
inline std::vector<std::size_t> require_columns(const CsvTable& t, const std::vector<std::string>& names,
                                                const std::string& schema)
{
    std::vector<std::size_t> idx;
    for (const auto& n : names) {
        const auto c = t.column(n);
        if (!c) {
            throw ValidationError(schema + ": missing required column '" + n + "'");
        }
        idx.push_back(*c);
    }
    return idx;
}

inline std::string flag(bool b) { return b ? "1" : "0"; }

// ---- field --------------------------------------------------------------

inline const std::vector<std::string> kFieldHeader{"d_nm", "y_nm", "re_ueV", "im_ueV", "evs_ueV", "phi_rad"};

inline std::string field_csv(const ValleyField& field)
{
    CsvWriter w(kFieldHeader);
    for (std::size_t i = 0; i < field.nodes_d(); ++i) {
        for (std::size_t j = 0; j < field.nodes_y(); ++j) {
            const auto& v = field.at(i, j);
            w.write_row({format_number(field.d_coord(i)), format_number(field.y_coord(j)),
                         format_number(v.re), format_number(v.im), format_number(evs_from_delta(v)),
                         format_number(v.phase())});
        }
    }
    return w.str();
}

/// Rebuilds a field from its CSV; `params` supplies correlation metadata
/// while the grid geometry is taken from the file.
inline ValleyField parse_field(const CsvTable& t, FieldParams params)
{
    const auto c = require_columns(t, {"d_nm", "y_nm", "re_ueV", "im_ueV"}, "field");
    require(!t.rows.empty(), "field: no data rows");
    std::vector<double> ds, ys;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        ds.push_back(parse_number(t, r, c[0]));
        ys.push_back(parse_number(t, r, c[1]));
    }
    std::vector<double> ud = ds, uy = ys;
    std::sort(ud.begin(), ud.end());
    ud.erase(std::unique(ud.begin(), ud.end()), ud.end());
    std::sort(uy.begin(), uy.end());
    uy.erase(std::unique(uy.begin(), uy.end()), uy.end());
    require(ud.size() * uy.size() == t.rows.size(), "field: rows do not form a complete grid");
    const double step = ud.size() > 1 ? ud[1] - ud[0] : (uy.size() > 1 ? uy[1] - uy[0] : params.grid_step);
    params.grid_step = step;
    params.origin_d = ud.front();
    params.origin_y = uy.front();
    params.extent_d = static_cast<double>(ud.size()) * step;
    params.extent_y = static_cast<double>(uy.size()) * step;
    std::vector<ComplexCoupling> values(t.rows.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto i = static_cast<std::size_t>(std::llround((ds[r] - params.origin_d) / step));
        const auto j = static_cast<std::size_t>(std::llround((ys[r] - params.origin_y) / step));
        require(i < ud.size() && j < uy.size() && std::abs(ds[r] - ud[i]) <= 1e-9 * std::max(1.0, step) &&
                    std::abs(ys[r] - uy[j]) <= 1e-9 * std::max(1.0, step),
                "field: " + location(r, "d_nm") + ": coordinates are not on a uniform grid");
        values[i * uy.size() + j] = {parse_number(t, r, c[2]), parse_number(t, r, c[3])};
    }
    return ValleyField(params, std::move(values));
}

// ---- raster -------------------------------------------------------------

inline const std::vector<std::string> kRasterHeader{"y_nm", "d_nm", "tau_ns", "ps"};

inline std::string raster_csv(const std::vector<PsRaster>& rasters)
{
    CsvWriter w(kRasterHeader);
    for (const auto& r : rasters) {
        for (std::size_t i = 0; i < r.rows(); ++i) {
            for (std::size_t k = 0; k < r.cols(); ++k) {
                w.write_row({format_number(r.y_nm), format_number(r.d_nm[i]), format_number(r.tau_ns[k]),
                             format_number(r.at(i, k))});
            }
        }
    }
    return w.str();
}

/// One raster per distinct y, in order of first appearance. Within a
/// scanline rows must be ordered by d then tau on a shared tau grid.
inline std::vector<PsRaster> parse_raster(const CsvTable& t)
{
    const auto c = require_columns(t, kRasterHeader, "raster");
    require(!t.rows.empty(), "raster: no data rows");
    std::vector<PsRaster> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const double y = parse_number(t, r, c[0]);
        const double d = parse_number(t, r, c[1]);
        const double tau = parse_number(t, r, c[2]);
        const double ps = parse_number(t, r, c[3]);
        if (!(ps >= 0.0 && ps <= 1.0)) {
            throw ValidationError("raster: " + location(r, "ps") + ": P_S " + t.rows[r][c[3]] +
                                  " outside [0, 1]");
        }
        if (tau < 0.0) {
            throw ValidationError("raster: " + location(r, "tau_ns") + ": negative wait time");
        }
        if (out.empty() || out.back().y_nm != y) {
            for (const auto& prev : out) {
                if (prev.y_nm == y) {
                    throw ValidationError("raster: " + location(r, "y_nm") + ": scanline rows are not contiguous");
                }
            }
            out.emplace_back();
            out.back().y_nm = y;
        }
        auto& cur = out.back();
        if (cur.d_nm.empty() || cur.d_nm.back() != d) {
            if (!cur.d_nm.empty()) {
                if (d <= cur.d_nm.back()) {
                    throw ValidationError("raster: " + location(r, "d_nm") + ": d not increasing");
                }
                // The first d column defines the tau grid; later ones must repeat it.
                if (cur.d_nm.size() > 1 && cur.values.size() != cur.d_nm.size() * cur.tau_ns.size()) {
                    throw ValidationError("raster: " + location(r, "d_nm") + ": incomplete tau sweep before this row");
                }
            }
            cur.d_nm.push_back(d);
        }
        if (cur.d_nm.size() == 1) {
            if (!cur.tau_ns.empty() && tau <= cur.tau_ns.back()) {
                throw ValidationError("raster: " + location(r, "tau_ns") + ": tau not increasing");
            }
            cur.tau_ns.push_back(tau);
        } else {
            const std::size_t k = cur.values.size() - (cur.d_nm.size() - 1) * cur.tau_ns.size();
            if (k >= cur.tau_ns.size() || cur.tau_ns[k] != tau) {
                throw ValidationError("raster: " + location(r, "tau_ns") + ": tau grid differs from first column");
            }
        }
        cur.values.push_back(ps);
    }
    for (const auto& r : out) {
        if (r.values.size() != r.rows() * r.cols()) {
            throw ValidationError("raster: scanline y = " + format_number(r.y_nm) + " ends with an incomplete tau sweep");
        }
    }
    return out;
}

// ---- peaks --------------------------------------------------------------

inline const std::vector<std::string> kPeaksHeader{"d_nm", "y_nm", "dg1", "dg2", "amp1", "amp2", "overridden"};

inline std::string peaks_csv(const std::vector<PeakSet>& sets)
{
    CsvWriter w(kPeaksHeader);
    for (const auto& p : sets) {
        std::vector<std::string> row{format_number(p.d), format_number(p.y), "", "", "", "", flag(p.swapped)};
        for (std::size_t k = 0; k < std::min<std::size_t>(2, p.peaks.size()); ++k) {
            row[2 + k] = format_number(p.peaks[k].delta_g);
            row[4 + k] = format_number(p.peaks[k].amplitude);
        }
        w.write_row(row);
    }
    return w.str();
}

inline std::vector<PeakSet> parse_peaks(const CsvTable& t)
{
    const auto c = require_columns(t, {"d_nm", "y_nm", "dg1", "amp1", "dg2", "amp2"}, "peaks");
    // c lists (dg, amp) per peak at 2 + 2k and 3 + 2k.
    const auto ov = t.column("overridden");
    std::vector<PeakSet> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        PeakSet p;
        p.d = parse_number(t, r, c[0]);
        p.y = parse_number(t, r, c[1]);
        p.swapped = ov ? parse_flag(t, r, *ov) : false;
        for (std::size_t k = 0; k < 2; ++k) {
            const auto dg = parse_optional(t, r, c[2 + 2 * k]);
            const auto amp = parse_optional(t, r, c[3 + 2 * k]);
            if (dg.has_value() != amp.has_value()) {
                throw ValidationError("peaks: " + location(r, t.header[c[2 + 2 * k]]) +
                                      ": Delta-g and amplitude must be given together");
            }
            if (!dg) {
                continue;
            }
            if (k == 1 && p.peaks.empty()) {
                throw ValidationError("peaks: " + location(r, "dg2") + ": dg2 given without dg1");
            }
            if (*dg < 0.0) {
                throw ValidationError("peaks: " + location(r, t.header[c[2 + 2 * k]]) + ": negative Delta-g");
            }
            if (*amp < 0.0) {
                throw ValidationError("peaks: " + location(r, t.header[c[3 + 2 * k]]) + ": negative amplitude");
            }
            p.peaks.push_back({*dg, *amp, k == 0});
        }
        out.push_back(std::move(p));
    }
    return out;
}

// ---- g-factor map -------------------------------------------------------

inline const std::vector<std::string> kGmapHeader{"d_nm",    "y_nm",    "dg1",          "dg2",
                                                  "dg_mean", "abs_dgs", "mean_extrapolated", "overridden"};

inline std::string gmap_csv(const GFactorMap& map)
{
    CsvWriter w(kGmapHeader);
    for (const auto& r : map.records) {
        w.write_row({format_number(r.d), format_number(r.y), format_optional(r.dg1), format_optional(r.dg2),
                     format_optional(r.dg_mean), format_optional(r.abs_dgs), flag(r.mean_extrapolated),
                     flag(r.overridden)});
    }
    return w.str();
}

inline GFactorMap parse_gmap(const CsvTable& t)
{
    const auto c = require_columns(t, kGmapHeader, "gmap");
    GFactorMap map;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        SiteRecord s;
        s.d = parse_number(t, r, c[0]);
        s.y = parse_number(t, r, c[1]);
        s.dg1 = parse_optional(t, r, c[2]);
        s.dg2 = parse_optional(t, r, c[3]);
        s.dg_mean = parse_optional(t, r, c[4]);
        s.abs_dgs = parse_optional(t, r, c[5]);
        s.mean_extrapolated = parse_flag(t, r, c[6]);
        s.overridden = parse_flag(t, r, c[7]);
        if (s.overridden) {
            map.overrides.push_back({s.d, s.y});
        }
        map.records.push_back(s);
    }
    return map;
}

inline std::string gridded_csv(const GriddedMap& g)
{
    CsvWriter w({"y_nm", "d_nm", "value"});
    for (std::size_t iy = 0; iy < g.y_axis.size(); ++iy) {
        for (std::size_t id = 0; id < g.d_axis.size(); ++id) {
            const double v = g.values[iy * g.d_axis.size() + id];
            w.write_row({format_number(g.y_axis[iy]), format_number(g.d_axis[id]),
                         std::isnan(v) ? std::string() : format_number(v)});
        }
    }
    return w.str();
}

// ---- E_VS map -----------------------------------------------------------

struct EvsSample {
    double d;
    double y;
    double evs;
};

inline const std::vector<std::string> kEvsHeader{"d_nm", "y_nm", "evs_ueV"};

inline std::string evs_csv(const std::vector<EvsSample>& samples)
{
    CsvWriter w(kEvsHeader);
    for (const auto& s : samples) {
        w.write_row({format_number(s.d), format_number(s.y), format_number(s.evs)});
    }
    return w.str();
}

inline std::vector<EvsSample> parse_evs(const CsvTable& t)
{
    const auto c = require_columns(t, kEvsHeader, "evs");
    std::vector<EvsSample> out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        EvsSample s{parse_number(t, r, c[0]), parse_number(t, r, c[1]), parse_number(t, r, c[2])};
        if (s.evs < 0.0) {
            throw ValidationError("evs: " + location(r, "evs_ueV") + ": negative valley splitting");
        }
        out.push_back(s);
    }
    return out;
}

/// (d, E_VS) of one scanline, sorted by d.
inline std::pair<std::vector<double>, std::vector<double>> evs_line(const std::vector<EvsSample>& samples,
                                                                    double y)
{
    std::vector<std::pair<double, double>> pts;
    for (const auto& s : samples) {
        if (std::abs(s.y - y) <= 1e-6) {
            pts.emplace_back(s.d, s.evs);
        }
    }
    std::sort(pts.begin(), pts.end());
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [d, e] : pts) {
        out.first.push_back(d);
        out.second.push_back(e);
    }
    return out;
}

// ---- reconstructed traces -----------------------------------------------

inline const std::vector<std::string> kTraceHeader{"d_nm",        "y_nm",    "evs_ueV", "re_ueV",
                                                   "im_ueV",      "phi_rad", "phi_raw_rad",
                                                   "branch_sign", "clamped", "low_confidence",
                                                   "axis_ambiguous"};

inline std::string traces_csv(const std::vector<std::pair<double, ReconstructedTrace>>& traces)
{
    CsvWriter w(kTraceHeader);
    for (const auto& [y, tr] : traces) {
        for (const auto& p : tr.points) {
            w.write_row({format_number(p.d), format_number(y), format_number(evs_from_delta(p.delta)),
                         format_number(p.delta.re), format_number(p.delta.im), format_number(p.phi),
                         format_number(p.phi_raw), p.branch_sign > 0 ? "1" : "-1", flag(p.clamped),
                         flag(p.low_confidence), flag(p.axis_ambiguous)});
        }
    }
    return w.str();
}

} // namespace vgmap::io
