#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stlf/csv.hpp"
#include "stlf/error.hpp"
#include "stlf/timeutil.hpp"

namespace stlf {

enum class ColumnKind { load, premise, weather, calendar };

inline const char* to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::load: return "load";
        case ColumnKind::premise: return "premise";
        case ColumnKind::weather: return "weather";
        case ColumnKind::calendar: return "calendar";
    }
    return "?";
}

inline ColumnKind column_kind_from_string(const std::string& s) {
    if (s == "load") return ColumnKind::load;
    if (s == "premise") return ColumnKind::premise;
    if (s == "weather") return ColumnKind::weather;
    if (s == "calendar") return ColumnKind::calendar;
    throw DataError("unknown column kind: '" + s + "'");
}

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Aligned hourly multivariate series for one region. Immutable after
// construction; all transforms return a new Panel. Rows sit on a strict
// 1-hour grid starting at start_hour(); missing cells are masked and hold
// NaN.
class Panel {
public:
    Panel(std::string region, std::int64_t start_hour, Eigen::MatrixXd data,
          BoolArray observed, std::vector<std::string> names, std::vector<ColumnKind> kinds)
        : region_(std::move(region)),
          start_hour_(start_hour),
          data_(std::move(data)),
          observed_(std::move(observed)),
          names_(std::move(names)),
          kinds_(std::move(kinds)) {
        if (data_.cols() != static_cast<Eigen::Index>(names_.size()) ||
            names_.size() != kinds_.size() || observed_.rows() != data_.rows() ||
            observed_.cols() != data_.cols())
            throw DataError("panel dimension mismatch");
        std::set<std::string> seen;
        for (const auto& n : names_)
            if (!seen.insert(n).second)
                throw DataError("duplicate panel column: '" + n + "'");
        for (Eigen::Index i = 0; i < data_.rows(); ++i)
            for (Eigen::Index j = 0; j < data_.cols(); ++j)
                if (!observed_(i, j)) data_(i, j) = std::numeric_limits<double>::quiet_NaN();
    }

    // Validates an explicit timestamp vector against the hourly-grid
    // invariant before collapsing it to start + row index.
    static Panel from_timestamps(std::string region, const std::vector<std::int64_t>& ts,
                                 Eigen::MatrixXd data, BoolArray observed,
                                 std::vector<std::string> names,
                                 std::vector<ColumnKind> kinds) {
        if (ts.empty())
            throw DataError("panel has no rows");
        for (std::size_t i = 1; i < ts.size(); ++i)
            if (ts[i] != ts[i - 1] + 1)
                throw DataError("timestamps not on a strict hourly grid near " +
                                format_iso_hour(ts[i]));
        if (static_cast<Eigen::Index>(ts.size()) != data.rows())
            throw DataError("timestamp/data length mismatch");
        return Panel(std::move(region), ts.front(), std::move(data), std::move(observed),
                     std::move(names), std::move(kinds));
    }

    std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(data_.cols()); }
    const std::string& region() const { return region_; }
    std::int64_t start_hour() const { return start_hour_; }
    std::int64_t timestamp(std::size_t i) const {
        return start_hour_ + static_cast<std::int64_t>(i);
    }

    const Eigen::MatrixXd& data() const { return data_; }
    const BoolArray& observed() const { return observed_; }
    const std::vector<std::string>& names() const { return names_; }
    ColumnKind kind(std::size_t j) const { return kinds_[j]; }
    const std::vector<ColumnKind>& kinds() const { return kinds_; }

    double value(std::size_t i, std::size_t j) const { return data_(i, j); }
    bool is_observed(std::size_t i, std::size_t j) const { return observed_(i, j); }

    int find(const std::string& name) const {
        for (std::size_t j = 0; j < names_.size(); ++j)
            if (names_[j] == name) return static_cast<int>(j);
        return -1;
    }

    std::size_t require(const std::string& name) const {
        const int j = find(name);
        if (j < 0)
            throw DataError("panel has no column '" + name + "'");
        return static_cast<std::size_t>(j);
    }

    std::vector<std::string> names_of_kind(ColumnKind k) const {
        std::vector<std::string> out;
        for (std::size_t j = 0; j < names_.size(); ++j)
            if (kinds_[j] == k) out.push_back(names_[j]);
        return out;
    }

    Panel select_columns(const std::vector<std::string>& wanted) const {
        Eigen::MatrixXd d(data_.rows(), static_cast<Eigen::Index>(wanted.size()));
        BoolArray m(data_.rows(), static_cast<Eigen::Index>(wanted.size()));
        std::vector<ColumnKind> kk;
        for (std::size_t w = 0; w < wanted.size(); ++w) {
            const std::size_t j = require(wanted[w]);
            d.col(static_cast<Eigen::Index>(w)) = data_.col(static_cast<Eigen::Index>(j));
            m.col(static_cast<Eigen::Index>(w)) = observed_.col(static_cast<Eigen::Index>(j));
            kk.push_back(kinds_[j]);
        }
        return Panel(region_, start_hour_, std::move(d), std::move(m), wanted, std::move(kk));
    }

    Panel slice_rows(std::size_t lo, std::size_t hi) const {
        if (lo >= hi || hi > rows())
            throw DataError("bad row slice");
        const Eigen::Index n = static_cast<Eigen::Index>(hi - lo);
        return Panel(region_, timestamp(lo), data_.middleRows(static_cast<Eigen::Index>(lo), n),
                     observed_.middleRows(static_cast<Eigen::Index>(lo), n), names_, kinds_);
    }

    Panel with_columns(const std::vector<std::string>& names,
                       const std::vector<ColumnKind>& kinds, const Eigen::MatrixXd& cols,
                       const BoolArray& obs) const {
        if (cols.rows() != data_.rows())
            throw DataError("appended columns must match panel length");
        Eigen::MatrixXd d(data_.rows(), data_.cols() + cols.cols());
        d << data_, cols;
        BoolArray m(data_.rows(), data_.cols() + cols.cols());
        m << observed_, obs;
        std::vector<std::string> nn = names_;
        nn.insert(nn.end(), names.begin(), names.end());
        std::vector<ColumnKind> kk = kinds_;
        kk.insert(kk.end(), kinds.begin(), kinds.end());
        return Panel(region_, start_hour_, std::move(d), std::move(m), std::move(nn),
                     std::move(kk));
    }

    bool fully_observed(std::size_t row_lo, std::size_t row_hi) const {
        for (std::size_t i = row_lo; i < row_hi; ++i)
            for (std::size_t j = 0; j < cols(); ++j)
                if (!observed_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)))
                    return false;
        return true;
    }

private:
    std::string region_;
    std::int64_t start_hour_;
    Eigen::MatrixXd data_;
    BoolArray observed_;
    std::vector<std::string> names_;
    std::vector<ColumnKind> kinds_;
};

struct LoadIngestOptions {
    // Filter on a consumer_type column when it exists in the file; empty
    // keeps every row.
    std::string consumer_type;
};

// Reads a raw load report (header: timestamp,region,premise_count,
// consumption_kwh), restricts it to one region, aggregates duplicate hours
// (several reporting areas per region) and places the result on a gap-filled
// hourly grid.
inline Panel ingest_load_csv(const std::string& path, const std::string& region,
                             const LoadIngestOptions& opts = {}) {
    CsvReader csv(path);
    const int c_ts = csv.require("timestamp");
    const int c_region = csv.require("region");
    const int c_premise = csv.require("premise_count");
    const int c_kwh = csv.require("consumption_kwh");
    const int c_type = csv.find("consumer_type");

    std::map<std::int64_t, std::pair<double, double>> agg; // hour -> (kwh, premises)
    std::vector<std::string> row;
    while (csv.next(row)) {
        if (row.size() != csv.header().size())
            throw DataError(path + ":" + std::to_string(csv.line_number()) +
                            ": expected " + std::to_string(csv.header().size()) +
                            " fields, got " + std::to_string(row.size()));
        if (row[static_cast<std::size_t>(c_region)] != region) continue;
        if (c_type >= 0 && !opts.consumer_type.empty() &&
            row[static_cast<std::size_t>(c_type)] != opts.consumer_type)
            continue;
        std::int64_t ts;
        try {
            ts = parse_iso_hour(row[static_cast<std::size_t>(c_ts)]);
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(csv.line_number()) + ": " + e.what());
        }
        const double kwh = parse_double_field(row[static_cast<std::size_t>(c_kwh)], path,
                                              csv.line_number(), "consumption_kwh");
        const double prem = parse_double_field(row[static_cast<std::size_t>(c_premise)], path,
                                               csv.line_number(), "premise_count");
        auto& cell = agg[ts];
        cell.first += kwh;
        cell.second += prem;
    }
    if (agg.empty())
        throw DataError(path + ": no rows for region '" + region + "'");

    const std::int64_t t0 = agg.begin()->first;
    const std::int64_t t1 = agg.rbegin()->first;
    const std::size_t n = static_cast<std::size_t>(t1 - t0 + 1);
    Eigen::MatrixXd data(n, 2);
    BoolArray obs(n, 2);
    obs.setConstant(false);
    data.setZero();
    for (const auto& [ts, cell] : agg) {
        const auto i = static_cast<Eigen::Index>(ts - t0);
        data(i, 0) = cell.first;
        data(i, 1) = cell.second;
        obs(i, 0) = obs(i, 1) = true;
    }
    return Panel(region, t0, std::move(data), std::move(obs), {"load", "premise_count"},
                 {ColumnKind::load, ColumnKind::premise});
}

// Reads a weather export (header: timestamp,<var>,...) keeping exactly the
// requested variables. Empty fields become masked cells; missing hours are
// gap-filled as masked rows.
inline Panel ingest_weather_csv(const std::string& path, const std::string& region,
                                const std::vector<std::string>& variables) {
    CsvReader csv(path);
    const int c_ts = csv.require("timestamp");
    std::vector<int> var_idx;
    for (const auto& v : variables) {
        const int idx = csv.find(v);
        if (idx < 0)
            throw DataError(path + ": missing requested variable '" + v + "'");
        var_idx.push_back(idx);
    }

    std::map<std::int64_t, std::vector<std::pair<double, bool>>> by_ts;
    std::vector<std::string> row;
    while (csv.next(row)) {
        if (row.size() != csv.header().size())
            throw DataError(path + ":" + std::to_string(csv.line_number()) +
                            ": expected " + std::to_string(csv.header().size()) +
                            " fields, got " + std::to_string(row.size()));
        std::int64_t ts;
        try {
            ts = parse_iso_hour(row[static_cast<std::size_t>(c_ts)]);
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(csv.line_number()) + ": " + e.what());
        }
        if (by_ts.count(ts))
            throw DataError(path + ":" + std::to_string(csv.line_number()) +
                            ": duplicate timestamp " + format_iso_hour(ts));
        std::vector<std::pair<double, bool>> vals;
        vals.reserve(variables.size());
        for (std::size_t v = 0; v < variables.size(); ++v) {
            const std::string& f = row[static_cast<std::size_t>(var_idx[v])];
            if (f.empty())
                vals.emplace_back(0.0, false);
            else
                vals.emplace_back(
                    parse_double_field(f, path, csv.line_number(), variables[v]), true);
        }
        by_ts[ts] = std::move(vals);
    }
    if (by_ts.empty())
        throw DataError(path + ": no data rows");

    const std::int64_t t0 = by_ts.begin()->first;
    const std::int64_t t1 = by_ts.rbegin()->first;
    const std::size_t n = static_cast<std::size_t>(t1 - t0 + 1);
    const std::size_t m = variables.size();
    Eigen::MatrixXd data(n, m);
    BoolArray obs(n, m);
    obs.setConstant(false);
    data.setZero();
    for (const auto& [ts, vals] : by_ts) {
        const auto i = static_cast<Eigen::Index>(ts - t0);
        for (std::size_t v = 0; v < m; ++v) {
            data(i, static_cast<Eigen::Index>(v)) = vals[v].first;
            obs(i, static_cast<Eigen::Index>(v)) = vals[v].second;
        }
    }
    return Panel(region, t0, std::move(data), std::move(obs), variables,
                 std::vector<ColumnKind>(m, ColumnKind::weather));
}

// Intersects the two time ranges and concatenates columns; each cell keeps
// the mask of its source panel.
inline Panel join_align(const Panel& a, const Panel& b) {
    if (a.region() != b.region())
        throw DataError("cannot join panels for regions '" + a.region() + "' and '" +
                        b.region() + "'");
    const std::int64_t lo = std::max(a.start_hour(), b.start_hour());
    const std::int64_t hi = std::min(a.timestamp(a.rows() - 1), b.timestamp(b.rows() - 1));
    if (lo > hi)
        throw DataError("panels have no overlapping hours");
    const std::size_t n = static_cast<std::size_t>(hi - lo + 1);
    const std::size_t a0 = static_cast<std::size_t>(lo - a.start_hour());
    const std::size_t b0 = static_cast<std::size_t>(lo - b.start_hour());

    Panel as = a.slice_rows(a0, a0 + n);
    const Panel bs = b.slice_rows(b0, b0 + n);
    return as.with_columns(bs.names(), bs.kinds(), bs.data(), bs.observed());
}

struct FeatureBlock {
    std::vector<std::string> names;
    std::vector<ColumnKind> kinds;
    Eigen::MatrixXd data;
};

inline std::set<std::int64_t> read_holiday_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open holiday file: " + path);
    std::set<std::int64_t> days;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        days.insert(parse_iso_date(line));
    }
    return days;
}

// Cyclic sine/cosine encodings of hour-of-day, day-of-week, month and
// day-of-year (period 365.25 to smooth over leap years), plus a holiday
// indicator. Pure functions of the timestamp.
inline FeatureBlock calendar_features(std::int64_t start_hour, std::size_t n,
                                      const std::set<std::int64_t>& holidays) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    FeatureBlock blk;
    blk.names = {"hour_sin", "hour_cos", "dow_sin", "dow_cos", "month_sin",
                 "month_cos", "doy_sin",  "doy_cos", "holiday"};
    blk.kinds.assign(blk.names.size(), ColumnKind::calendar);
    blk.data.resize(static_cast<Eigen::Index>(n), 9);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t ts = start_hour + static_cast<std::int64_t>(i);
        const std::int64_t days = day_of_hour(ts);
        const CivilDate c = civil_from_days(days);
        const double ha = two_pi * hour_of_day(ts) / 24.0;
        const double da = two_pi * day_of_week(days) / 7.0;
        const double ma = two_pi * (c.month - 1) / 12.0;
        const double ya = two_pi * day_of_year(c) / 365.25;
        const auto r = static_cast<Eigen::Index>(i);
        blk.data(r, 0) = std::sin(ha);
        blk.data(r, 1) = std::cos(ha);
        blk.data(r, 2) = std::sin(da);
        blk.data(r, 3) = std::cos(da);
        blk.data(r, 4) = std::sin(ma);
        blk.data(r, 5) = std::cos(ma);
        blk.data(r, 6) = std::sin(ya);
        blk.data(r, 7) = std::cos(ya);
        blk.data(r, 8) = holidays.count(days) ? 1.0 : 0.0;
    }
    return blk;
}

inline Panel append_calendar(const Panel& p, const std::set<std::int64_t>& holidays) {
    const FeatureBlock blk = calendar_features(p.start_hour(), p.rows(), holidays);
    BoolArray obs(blk.data.rows(), blk.data.cols());
    obs.setConstant(true);
    return p.with_columns(blk.names, blk.kinds, blk.data, obs);
}

// Per-column z-score parameters fitted from observed cells of a training
// range. Degenerate columns (constant or fully masked) get std pinned to 1
// and are flagged.
struct ScalerParams {
    std::vector<std::string> names;
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<bool> degenerate;

    int find(const std::string& name) const {
        for (std::size_t j = 0; j < names.size(); ++j)
            if (names[j] == name) return static_cast<int>(j);
        return -1;
    }

    nlohmann::json to_json() const {
        nlohmann::json cols = nlohmann::json::array();
        for (std::size_t j = 0; j < names.size(); ++j)
            cols.push_back({{"name", names[j]},
                            {"mean", mean(static_cast<Eigen::Index>(j))},
                            {"std", std(static_cast<Eigen::Index>(j))},
                            {"degenerate", static_cast<bool>(degenerate[j])}});
        return {{"columns", cols}};
    }
};

inline ScalerParams fit_scaler(const Panel& p, std::size_t row_lo, std::size_t row_hi) {
    if (row_lo >= row_hi || row_hi > p.rows())
        throw DataError("fit_scaler: empty or out-of-range row window");
    const std::size_t m = p.cols();
    ScalerParams sp;
    sp.names = p.names();
    sp.mean.resize(static_cast<Eigen::Index>(m));
    sp.std.resize(static_cast<Eigen::Index>(m));
    sp.degenerate.assign(m, false);
    for (std::size_t j = 0; j < m; ++j) {
        double sum = 0.0;
        std::size_t n = 0;
        double vmin = std::numeric_limits<double>::infinity();
        double vmax = -std::numeric_limits<double>::infinity();
        for (std::size_t i = row_lo; i < row_hi; ++i) {
            if (!p.is_observed(i, j)) continue;
            const double v = p.value(i, j);
            sum += v;
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
            ++n;
        }
        const auto jj = static_cast<Eigen::Index>(j);
        if (n == 0) {
            sp.mean(jj) = 0.0;
            sp.std(jj) = 1.0;
            sp.degenerate[j] = true;
            continue;
        }
        const double mu = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = row_lo; i < row_hi; ++i) {
            if (!p.is_observed(i, j)) continue;
            const double d = p.value(i, j) - mu;
            ss += d * d;
        }
        sp.mean(jj) = mu;
        if (vmin == vmax) {
            sp.std(jj) = 1.0;
            sp.degenerate[j] = true;
        } else {
            sp.std(jj) = std::sqrt(ss / static_cast<double>(n));
        }
    }
    return sp;
}

inline Panel apply_scaler(const Panel& p, const ScalerParams& sp) {
    Eigen::MatrixXd d = p.data();
    for (std::size_t j = 0; j < p.cols(); ++j) {
        const int k = sp.find(p.names()[j]);
        if (k < 0)
            throw DataError("scaler has no parameters for column '" + p.names()[j] + "'");
        const auto jj = static_cast<Eigen::Index>(j);
        const double mu = sp.mean(k), sd = sp.std(k);
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            if (p.observed()(i, jj)) d(i, jj) = (d(i, jj) - mu) / sd;
    }
    return Panel(p.region(), p.start_hour(), std::move(d), p.observed(), p.names(), p.kinds());
}

inline Panel invert_scaler(const Panel& p, const ScalerParams& sp) {
    Eigen::MatrixXd d = p.data();
    for (std::size_t j = 0; j < p.cols(); ++j) {
        const int k = sp.find(p.names()[j]);
        if (k < 0)
            throw DataError("scaler has no parameters for column '" + p.names()[j] + "'");
        const auto jj = static_cast<Eigen::Index>(j);
        const double mu = sp.mean(k), sd = sp.std(k);
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            if (p.observed()(i, jj)) d(i, jj) = d(i, jj) * sd + mu;
    }
    return Panel(p.region(), p.start_hour(), std::move(d), p.observed(), p.names(), p.kinds());
}

// Canonical on-disk form: <prefix>.panel.csv (timestamp + one column per
// series, empty field = masked) and <prefix>.meta.json (region, column
// kinds).
inline void write_panel(const Panel& p, const std::string& prefix) {
    std::ofstream out(prefix + ".panel.csv");
    if (!out)
        throw DataError("cannot write " + prefix + ".panel.csv");
    std::vector<std::string> row;
    row.push_back("timestamp");
    for (const auto& n : p.names()) row.push_back(n);
    write_csv_row(out, row);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        row.clear();
        row.push_back(format_iso_hour(p.timestamp(i)));
        for (std::size_t j = 0; j < p.cols(); ++j)
            row.push_back(p.is_observed(i, j) ? format_double(p.value(i, j)) : "");
        write_csv_row(out, row);
    }
    nlohmann::json meta;
    meta["region"] = p.region();
    meta["start"] = format_iso_hour(p.start_hour());
    meta["rows"] = p.rows();
    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t j = 0; j < p.cols(); ++j)
        cols.push_back({{"name", p.names()[j]}, {"kind", to_string(p.kind(j))}});
    meta["columns"] = cols;
    std::ofstream mout(prefix + ".meta.json");
    if (!mout)
        throw DataError("cannot write " + prefix + ".meta.json");
    mout << meta.dump(2) << '\n';
}

inline Panel read_panel(const std::string& prefix) {
    std::ifstream min(prefix + ".meta.json");
    if (!min)
        throw DataError("cannot open " + prefix + ".meta.json");
    nlohmann::json meta = nlohmann::json::parse(min);
    const std::string region = meta.at("region").get<std::string>();
    std::vector<std::string> names;
    std::vector<ColumnKind> kinds;
    for (const auto& c : meta.at("columns")) {
        names.push_back(c.at("name").get<std::string>());
        kinds.push_back(column_kind_from_string(c.at("kind").get<std::string>()));
    }

    CsvReader csv(prefix + ".panel.csv");
    if (csv.header().size() != names.size() + 1 || csv.header()[0] != "timestamp")
        throw DataError(prefix + ".panel.csv: header does not match metadata");
    std::vector<std::int64_t> ts;
    std::vector<std::vector<std::pair<double, bool>>> rows;
    std::vector<std::string> row;
    while (csv.next(row)) {
        if (row.size() != names.size() + 1)
            throw DataError(prefix + ".panel.csv:" + std::to_string(csv.line_number()) +
                            ": wrong field count");
        ts.push_back(parse_iso_hour(row[0]));
        std::vector<std::pair<double, bool>> vals;
        for (std::size_t j = 0; j < names.size(); ++j) {
            const std::string& f = row[j + 1];
            if (f.empty())
                vals.emplace_back(0.0, false);
            else
                vals.emplace_back(parse_double_field(f, prefix + ".panel.csv",
                                                     csv.line_number(), names[j]),
                                  true);
        }
        rows.push_back(std::move(vals));
    }
    if (rows.empty())
        throw DataError(prefix + ".panel.csv: no data rows");
    Eigen::MatrixXd data(rows.size(), names.size());
    BoolArray obs(rows.size(), names.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < names.size(); ++j) {
            data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j].first;
            obs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows[i][j].second;
        }
    return Panel::from_timestamps(region, ts, std::move(data), std::move(obs),
                                  std::move(names), std::move(kinds));
}

} // namespace stlf
