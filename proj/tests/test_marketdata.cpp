#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "corrdyn/marketdata.hpp"

using namespace corrdyn;
using namespace corrdyn::marketdata;

TEST_CASE("trades CSV round trip") {
    std::vector<OptionTrade> trades(2);
    trades[0].trade_date = Date(2009, 8, 3);
    trades[0].expiry_date = Date(2009, 11, 20);
    trades[0].underlying = "IDX";
    trades[0].strike = 101.2345678901234567;
    trades[0].price = 3.8985511831850594;
    trades[0].right = vol::Right::put;
    trades[0].style = vol::Style::european;
    trades[1].trade_date = Date(2009, 8, 4);
    trades[1].expiry_date = Date(2010, 2, 19);
    trades[1].underlying = "AST0";
    trades[1].strike = 55.5;
    trades[1].price = 1.25;
    trades[1].right = vol::Right::call;
    trades[1].style = vol::Style::american;

    std::ostringstream out;
    write_trades(out, trades);
    std::istringstream in(out.str());
    const auto back = parse_trades(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].trade_date == trades[0].trade_date);
    CHECK(back[0].expiry_date == trades[0].expiry_date);
    CHECK(back[0].underlying == "IDX");
    CHECK(back[0].strike == trades[0].strike);  // %.17g survives the round trip
    CHECK(back[0].price == trades[0].price);
    CHECK(back[0].right == vol::Right::put);
    CHECK(back[0].style == vol::Style::european);
    CHECK(back[1].right == vol::Right::call);
    CHECK(back[1].style == vol::Style::american);
}

TEST_CASE("trades CSV rejects malformed input") {
    std::istringstream bad_header("nope,nope\n");
    CHECK_THROWS(parse_trades(bad_header));
    std::istringstream bad_right(
        "trade_date,expiry_date,underlying,strike,price,right,style\n"
        "2009-08-03,2009-11-20,IDX,100,3.5,X,E\n");
    CHECK_THROWS(parse_trades(bad_right));
    std::istringstream bad_field_count(
        "trade_date,expiry_date,underlying,strike,price,right,style\n"
        "2009-08-03,2009-11-20,IDX,100\n");
    CHECK_THROWS(parse_trades(bad_field_count));
}

TEST_CASE("snapshot assembly from the three auxiliary CSVs") {
    std::istringstream snaps_csv(
        "date,ticker,spot,weight\n"
        "2009-08-03,IDX,100,0\n"
        "2009-08-03,AST0,50,0.6\n"
        "2009-08-03,AST1,75,0.4\n"
        "2009-08-04,IDX,101,0\n"
        "2009-08-04,AST0,50.5,0.55\n"
        "2009-08-04,AST1,74,0.45\n");
    std::istringstream rates_csv(
        "date,tenor_years,rate\n"
        "2009-08-03,0.25,0.01\n"
        "2009-08-03,1,0.02\n"
        "2009-08-04,0.25,0.011\n"
        "2009-08-04,1,0.021\n");
    std::istringstream divs_csv(
        "ticker,ex_date,amount\n"
        "AST0,2009-09-15,0.75\n");
    const auto snaps = assemble_snapshots(snaps_csv, rates_csv, divs_csv);
    REQUIRE(snaps.size() == 2);
    const MarketSnapshot& first = snaps.at(Date(2009, 8, 3).serial());
    CHECK(first.spot_by_ticker.at("IDX") == 100.0);
    CHECK(first.spot_by_ticker.at("AST0") == 50.0);
    // zero weight marks a non-constituent
    CHECK(first.weights.count("IDX") == 0);
    CHECK(first.weights.at("AST0") == doctest::Approx(0.6));
    CHECK(first.weights.at("AST1") == doctest::Approx(0.4));
    REQUIRE(first.rate_curve.size() == 2);
    CHECK(first.rate_curve[0].second == doctest::Approx(0.01));
    // the dividend calendar is global: attached to every snapshot
    const MarketSnapshot& second = snaps.at(Date(2009, 8, 4).serial());
    REQUIRE(second.dividends.count("AST0") == 1);
    CHECK(second.dividends.at("AST0")[0].first == Date(2009, 9, 15));
    CHECK(second.dividends.at("AST0")[0].second == doctest::Approx(0.75));
    CHECK_NOTHROW(first.validate());
    CHECK_NOTHROW(second.validate());
}

TEST_CASE("snapshot files round trip") {
    std::istringstream snaps_csv(
        "date,ticker,spot,weight\n"
        "2009-08-03,IDX,100,0\n"
        "2009-08-03,AST0,50,0.6\n"
        "2009-08-03,AST1,70,0.4\n");
    std::istringstream rates_csv(
        "date,tenor_years,rate\n"
        "2009-08-03,0.25,0.0123456789012345\n");
    std::istringstream divs_csv("ticker,ex_date,amount\nAST0,2009-09-15,0.75\n");
    const auto snaps = assemble_snapshots(snaps_csv, rates_csv, divs_csv);
    std::ostringstream s_out, r_out, d_out;
    write_snapshot_files(s_out, r_out, d_out, snaps);
    std::istringstream s_in(s_out.str()), r_in(r_out.str()), d_in(d_out.str());
    const auto back = assemble_snapshots(s_in, r_in, d_in);
    REQUIRE(back.size() == 1);
    const auto& snap = back.begin()->second;
    CHECK(snap.spot_by_ticker.at("AST0") == 50.0);
    CHECK(snap.rate_curve[0].second == 0.0123456789012345);
    CHECK(snap.dividends.at("AST0")[0].second == 0.75);
}

TEST_CASE("snapshot validation") {
    MarketSnapshot snap;
    snap.date = Date(2009, 8, 3);
    snap.spot_by_ticker = {{"A", 10.0}, {"B", 20.0}};
    snap.weights = {{"A", 0.5}, {"B", 0.5}};
    snap.rate_curve = {{0.25, 0.01}, {1.0, 0.02}};
    CHECK_NOTHROW(snap.validate());
    snap.weights["A"] = 0.7;  // weights no longer sum to one
    CHECK_THROWS(snap.validate());
    snap.weights["A"] = 0.5;
    snap.rate_curve = {{1.0, 0.02}, {0.25, 0.01}};  // tenors not increasing
    CHECK_THROWS(snap.validate());
}

TEST_CASE("rate interpolation is linear and clamped") {
    const RateCurve curve = {{0.25, 0.01}, {0.75, 0.03}};
    CHECK(interpolate_rate(curve, 0.25) == doctest::Approx(0.01));
    CHECK(interpolate_rate(curve, 0.5) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(interpolate_rate(curve, 0.75) == doctest::Approx(0.03));
    CHECK(interpolate_rate(curve, 0.1) == doctest::Approx(0.01));  // clamped below
    CHECK(interpolate_rate(curve, 2.0) == doctest::Approx(0.03));  // clamped above
}

TEST_CASE("liquidity filter keeps OTM quotes inside the kappa and tau bands") {
    const Date d(2009, 8, 3);
    MarketSnapshot snap;
    snap.date = d;
    snap.spot_by_ticker = {{"IDX", 100.0}};
    snap.rate_curve = {{0.25, 0.02}, {1.0, 0.02}};
    std::map<std::int64_t, MarketSnapshot> snaps{{d.serial(), snap}};

    auto make_trade = [&](double strike, vol::Right right, int bus_days) {
        OptionTrade t;
        t.trade_date = d;
        t.expiry_date = d.add_business_days(bus_days);
        t.underlying = "IDX";
        t.strike = strike;
        t.price = 1.0;
        t.right = right;
        return t;
    };
    std::vector<OptionTrade> trades;
    trades.push_back(make_trade(95, vol::Right::put, 63));    // OTM put, kept
    trades.push_back(make_trade(95, vol::Right::call, 63));   // ITM call, dropped
    trades.push_back(make_trade(110, vol::Right::call, 63));  // OTM call, kept
    trades.push_back(make_trade(130, vol::Right::call, 63));  // kappa > 1.2, dropped
    trades.push_back(make_trade(95, vol::Right::put, 5));     // tau too short, dropped
    trades.push_back(make_trade(95, vol::Right::put, 300));   // tau > 1, dropped

    const auto kept = filter_and_prepare(trades, snaps);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].trade.strike == 95);
    const double tau = 0.25;
    CHECK(kept[0].tau == doctest::Approx(tau).epsilon(1e-12));
    CHECK(kept[0].rate == doctest::Approx(0.02));
    CHECK(kept[0].kappa == doctest::Approx(95.0 / (100.0 * std::exp(0.02 * tau))).epsilon(1e-12));
    CHECK(kept[1].trade.strike == 110);
}

TEST_CASE("liquidity filter attaches only dividends inside the trade window") {
    const Date d(2009, 8, 3);
    MarketSnapshot snap;
    snap.date = d;
    snap.spot_by_ticker = {{"AST", 100.0}};
    snap.rate_curve = {{0.25, 0.0}};
    snap.dividends["AST"] = {{Date(2009, 9, 15), 0.5},   // inside (0, tau)
                             {Date(2010, 6, 1), 0.7}};   // past expiry
    std::map<std::int64_t, MarketSnapshot> snaps{{d.serial(), snap}};
    OptionTrade t;
    t.trade_date = d;
    t.expiry_date = d.add_business_days(63);
    t.underlying = "AST";
    t.strike = 95;
    t.price = 1.0;
    t.right = vol::Right::put;
    const auto kept = filter_and_prepare({t}, snaps);
    REQUIRE(kept.size() == 1);
    REQUIRE(kept[0].dividends.size() == 1);
    CHECK(kept[0].dividends[0].second == doctest::Approx(0.5));
}

TEST_CASE("ecdf map forward and inverse") {
    const EcdfMap map({0.9, 1.0, 1.0, 1.1}, {0.1, 0.25, 0.5, 1.0});
    // forward value is the fraction of pooled knots <= x
    CHECK(map.forward_kappa(0.9) == doctest::Approx(0.25));
    CHECK(map.forward_kappa(1.0) == doctest::Approx(0.75));
    CHECK(map.forward_kappa(1.1) == doctest::Approx(1.0));
    CHECK(map.forward_kappa(0.5) == doctest::Approx(0.0));
    CHECK(map.forward_tau(0.25) == doctest::Approx(0.5));
    // inverse returns the matching empirical quantile
    CHECK(map.inverse_kappa(map.forward_kappa(0.9)) == doctest::Approx(0.9));
    CHECK(map.inverse_kappa(map.forward_kappa(1.1)) == doctest::Approx(1.1));
    CHECK(map.inverse_tau(map.forward_tau(0.5)) == doctest::Approx(0.5));
}

TEST_CASE("ecdf transform maps the panel onto (0, 1]") {
    SurfacePanel panel;
    panel.days.push_back({Date(2009, 8, 3), {{0.9, 0.25, 0.4}, {1.0, 0.25, 0.45}}});
    panel.days.push_back({Date(2009, 8, 4), {{1.1, 0.5, 0.5}}});
    const auto [transformed, map] = ecdf_transform(panel);
    REQUIRE(transformed.days.size() == 2);
    for (const auto& [date, points] : transformed.days) {
        for (const auto& p : points) {
            CHECK(p.kappa > 0.0);
            CHECK(p.kappa <= 1.0);
            CHECK(p.tau > 0.0);
            CHECK(p.tau <= 1.0);
        }
    }
    // values ride along unchanged
    CHECK(transformed.days[0].second[0].value == doctest::Approx(0.4));
    // the largest pooled coordinate maps to exactly one
    CHECK(transformed.days[1].second[0].kappa == doctest::Approx(1.0));
    CHECK(transformed.days[1].second[0].tau == doctest::Approx(1.0));
}
