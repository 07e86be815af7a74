#include "corrdyn/marketdata.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace corrdyn::marketdata {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

[[noreturn]] void row_error(std::size_t line_no, const std::string& what) {
    throw std::runtime_error("trades.csv line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void MarketSnapshot::validate() const {
    double sum = 0;
    for (const auto& [ticker, w] : weights) {
        if (w <= 0.0 || w >= 1.0)
            throw std::invalid_argument("MarketSnapshot: weight outside (0,1) for " + ticker);
        sum += w;
    }
    if (std::fabs(sum - 1.0) >= 1e-12)
        throw std::invalid_argument("MarketSnapshot: weights must sum to 1");
    for (std::size_t i = 1; i < rate_curve.size(); ++i)
        if (rate_curve[i].first <= rate_curve[i - 1].first)
            throw std::invalid_argument("MarketSnapshot: rate tenors must be strictly increasing");
    for (const auto& [ticker, spot] : spot_by_ticker)
        if (spot <= 0.0) throw std::invalid_argument("MarketSnapshot: non-positive spot for " + ticker);
}

std::vector<OptionTrade> parse_trades(std::istream& in) {
    std::vector<OptionTrade> trades;
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != "trade_date,expiry_date,underlying,strike,price,right,style")
                throw std::runtime_error("trades.csv line 1: unexpected header '" + line + "'");
            saw_header = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 7) row_error(line_no, "expected 7 fields");
        OptionTrade t;
        try {
            t.trade_date = Date::parse(fields[0]);
            t.expiry_date = Date::parse(fields[1]);
            t.underlying = fields[2];
            t.strike = std::stod(fields[3]);
            t.price = std::stod(fields[4]);
        } catch (const std::exception& e) {
            row_error(line_no, e.what());
        }
        if (fields[5] == "P")
            t.right = vol::Right::put;
        else if (fields[5] == "C")
            t.right = vol::Right::call;
        else
            row_error(line_no, "right must be P or C");
        if (fields[6] == "E")
            t.style = vol::Style::european;
        else if (fields[6] == "A")
            t.style = vol::Style::american;
        else
            row_error(line_no, "style must be E or A");
        if (t.strike <= 0.0) row_error(line_no, "strike must be positive");
        if (t.price <= 0.0) row_error(line_no, "price must be positive");
        if (!(t.expiry_date > t.trade_date)) row_error(line_no, "expiry must be after trade date");
        trades.push_back(std::move(t));
    }
    return trades;
}

void write_trades(std::ostream& out, const std::vector<OptionTrade>& trades) {
    out << "trade_date,expiry_date,underlying,strike,price,right,style\n";
    char buf[64];
    for (const auto& t : trades) {
        out << t.trade_date.to_string() << ',' << t.expiry_date.to_string() << ','
            << t.underlying << ',';
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", t.strike, t.price);
        out << buf << ',' << (t.right == vol::Right::put ? 'P' : 'C') << ','
            << (t.style == vol::Style::european ? 'E' : 'A') << '\n';
    }
}

namespace {

using CsvRowFn = void (*)(const std::vector<std::string>&, std::size_t, void*);

void for_each_row(std::istream& in, const char* name, const std::string& header,
                  std::size_t n_fields, void* ctx, CsvRowFn fn) {
    std::string line;
    std::size_t line_no = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != header)
                throw std::runtime_error(std::string(name) + " line 1: unexpected header '" +
                                         line + "'");
            saw_header = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != n_fields)
            throw std::runtime_error(std::string(name) + " line " + std::to_string(line_no) +
                                     ": expected " + std::to_string(n_fields) + " fields");
        try {
            fn(fields, line_no, ctx);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string(name) + " line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    }
    if (!saw_header) throw std::runtime_error(std::string(name) + ": missing header");
}

}  // namespace

std::map<std::int64_t, MarketSnapshot> assemble_snapshots(std::istream& snapshots,
                                                          std::istream& rates,
                                                          std::istream& dividends) {
    std::map<std::int64_t, MarketSnapshot> out;

    for_each_row(snapshots, "snapshots.csv", "date,ticker,spot,weight", 4, &out,
                 [](const std::vector<std::string>& f, std::size_t, void* ctx) {
                     auto& snaps = *static_cast<std::map<std::int64_t, MarketSnapshot>*>(ctx);
                     const Date date = Date::parse(f[0]);
                     MarketSnapshot& snap = snaps[date.serial()];
                     snap.date = date;
                     snap.spot_by_ticker[f[1]] = std::stod(f[2]);
                     const double w = std::stod(f[3]);
                     if (w != 0.0) snap.weights[f[1]] = w;
                 });

    for_each_row(rates, "rates.csv", "date,tenor_years,rate", 3, &out,
                 [](const std::vector<std::string>& f, std::size_t, void* ctx) {
                     auto& snaps = *static_cast<std::map<std::int64_t, MarketSnapshot>*>(ctx);
                     const Date date = Date::parse(f[0]);
                     const auto it = snaps.find(date.serial());
                     if (it == snaps.end()) throw std::runtime_error("no snapshot for this date");
                     it->second.rate_curve.emplace_back(std::stod(f[1]), std::stod(f[2]));
                 });

    std::map<std::string, std::vector<std::pair<Date, double>>> div_calendar;
    for_each_row(dividends, "dividends.csv", "ticker,ex_date,amount", 3, &div_calendar,
                 [](const std::vector<std::string>& f, std::size_t, void* ctx) {
                     auto& cal = *static_cast<
                         std::map<std::string, std::vector<std::pair<Date, double>>>*>(ctx);
                     cal[f[0]].emplace_back(Date::parse(f[1]), std::stod(f[2]));
                 });

    for (auto& [serial, snap] : out) {
        snap.dividends = div_calendar;
        snap.validate();
    }
    return out;
}

void write_snapshot_files(std::ostream& snapshots_out, std::ostream& rates_out,
                          std::ostream& dividends_out,
                          const std::map<std::int64_t, MarketSnapshot>& snaps) {
    char buf[96];
    snapshots_out << "date,ticker,spot,weight\n";
    rates_out << "date,tenor_years,rate\n";
    dividends_out << "ticker,ex_date,amount\n";
    std::map<std::string, std::vector<std::pair<Date, double>>> div_calendar;
    for (const auto& [serial, snap] : snaps) {
        const std::string date = snap.date.to_string();
        for (const auto& [ticker, spot] : snap.spot_by_ticker) {
            const auto w_it = snap.weights.find(ticker);
            const double w = w_it == snap.weights.end() ? 0.0 : w_it->second;
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g", spot, w);
            snapshots_out << date << ',' << ticker << ',' << buf << '\n';
        }
        for (const auto& [tenor, rate] : snap.rate_curve) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g", tenor, rate);
            rates_out << date << ',' << buf << '\n';
        }
        for (const auto& [ticker, divs] : snap.dividends)
            if (!div_calendar.count(ticker)) div_calendar[ticker] = divs;
    }
    for (const auto& [ticker, divs] : div_calendar) {
        for (const auto& [ex_date, amount] : divs) {
            std::snprintf(buf, sizeof(buf), "%.17g", amount);
            dividends_out << ticker << ',' << ex_date.to_string() << ',' << buf << '\n';
        }
    }
}

double interpolate_rate(const RateCurve& curve, double tau) {
    if (curve.empty()) throw std::invalid_argument("interpolate_rate: empty curve");
    if (tau <= curve.front().first) return curve.front().second;
    if (tau >= curve.back().first) return curve.back().second;
    auto it = std::lower_bound(curve.begin(), curve.end(), tau,
                               [](const auto& p, double t) { return p.first < t; });
    if (it->first == tau) return it->second;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (tau - lo.first) / (hi.first - lo.first);
    return lo.second + w * (hi.second - lo.second);
}

std::vector<FilteredQuote> filter_and_prepare(const std::vector<OptionTrade>& trades,
                                              const std::map<std::int64_t, MarketSnapshot>& snaps) {
    constexpr double tau_min = 10.0 / 252.0, tau_max = 1.0;
    constexpr double kappa_min = 0.8, kappa_max = 1.2;
    std::vector<FilteredQuote> out;
    for (const auto& t : trades) {
        const auto it = snaps.find(t.trade_date.serial());
        if (it == snaps.end())
            throw std::runtime_error("filter_and_prepare: no snapshot for " +
                                     t.trade_date.to_string());
        const MarketSnapshot& snap = it->second;
        const auto spot_it = snap.spot_by_ticker.find(t.underlying);
        if (spot_it == snap.spot_by_ticker.end())
            throw std::runtime_error("filter_and_prepare: no spot for " + t.underlying + " on " +
                                     t.trade_date.to_string());

        FilteredQuote q;
        q.trade = t;
        q.tau = year_fraction(t.trade_date, t.expiry_date);
        if (q.tau < tau_min || q.tau > tau_max) continue;
        q.spot = spot_it->second;
        q.rate = interpolate_rate(snap.rate_curve, q.tau);
        q.kappa = t.strike / (q.spot * std::exp(q.rate * q.tau));
        if (q.kappa < kappa_min || q.kappa > kappa_max) continue;
        const bool otm = t.right == vol::Right::put ? q.kappa < 1.0 : q.kappa >= 1.0;
        if (!otm) continue;
        const auto div_it = snap.dividends.find(t.underlying);
        if (div_it != snap.dividends.end()) {
            for (const auto& [ex_date, amount] : div_it->second) {
                const double dt = year_fraction(t.trade_date, ex_date);
                if (dt > 0.0 && dt < q.tau) q.dividends.emplace_back(dt, amount);
            }
        }
        out.push_back(std::move(q));
    }
    return out;
}

namespace {

double ecdf_value(const std::vector<double>& sorted, double x) {
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), x);
    return static_cast<double>(hi - sorted.begin()) / static_cast<double>(sorted.size());
}

double ecdf_quantile(const std::vector<double>& sorted, double y) {
    if (sorted.empty()) throw std::invalid_argument("EcdfMap: empty knots");
    const double n = static_cast<double>(sorted.size());
    auto idx = static_cast<std::size_t>(std::ceil(y * n - 1e-12));
    if (idx == 0) idx = 1;
    if (idx > sorted.size()) idx = sorted.size();
    return sorted[idx - 1];
}

}  // namespace

EcdfMap::EcdfMap(std::vector<double> kappa_knots, std::vector<double> tau_knots)
    : kappa_knots_(std::move(kappa_knots)), tau_knots_(std::move(tau_knots)) {
    std::sort(kappa_knots_.begin(), kappa_knots_.end());
    std::sort(tau_knots_.begin(), tau_knots_.end());
}

double EcdfMap::forward_kappa(double x) const { return ecdf_value(kappa_knots_, x); }
double EcdfMap::forward_tau(double x) const { return ecdf_value(tau_knots_, x); }
double EcdfMap::inverse_kappa(double y) const { return ecdf_quantile(kappa_knots_, y); }
double EcdfMap::inverse_tau(double y) const { return ecdf_quantile(tau_knots_, y); }

std::pair<SurfacePanel, EcdfMap> ecdf_transform(const SurfacePanel& panel) {
    if (panel.days.empty()) throw std::invalid_argument("ecdf_transform: empty panel");
    std::vector<double> kappas, taus;
    for (const auto& [date, points] : panel.days) {
        for (const auto& p : points) {
            kappas.push_back(p.kappa);
            taus.push_back(p.tau);
        }
    }
    EcdfMap map(std::move(kappas), std::move(taus));
    SurfacePanel out;
    out.days.reserve(panel.days.size());
    for (const auto& [date, points] : panel.days) {
        std::vector<SurfacePoint> transformed;
        transformed.reserve(points.size());
        for (const auto& p : points)
            transformed.push_back({map.forward_kappa(p.kappa), map.forward_tau(p.tau), p.value});
        out.days.emplace_back(date, std::move(transformed));
    }
    return {std::move(out), std::move(map)};
}

}  // namespace corrdyn::marketdata
