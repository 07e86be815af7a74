#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "corrdyn/pipeline.hpp"
#include "corrdyn/synth.hpp"

namespace {

using corrdyn::pipeline::FittedModel;
using corrdyn::pipeline::RunConfig;

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
    cmd->add_option("--config", opts->config_path, "Path to the JSON run configuration")
        ->required();
    cmd->add_option("--seed", opts->seed, "Override the configured seed")
        ->each([opts](const std::string&) { opts->seed_set = true; });
    cmd->add_option("--threads", opts->threads, "Worker thread count (default: all cores)");
}

RunConfig load_config(const CommonOpts& opts) {
    RunConfig cfg = RunConfig::from_json_file(opts.config_path);
    if (opts.seed_set) {
        cfg.seed = opts.seed;
        cfg.synth.seed = opts.seed;
    }
#ifdef _OPENMP
    if (opts.threads > 0) omp_set_num_threads(opts.threads);
#endif
    return cfg;
}

std::vector<corrdyn::marketdata::OptionTrade> read_trades(const RunConfig& cfg) {
    std::ifstream in(cfg.trades);
    if (!in) throw std::runtime_error("cannot open " + cfg.trades.string());
    return corrdyn::marketdata::parse_trades(in);
}

std::map<std::int64_t, corrdyn::marketdata::MarketSnapshot> read_snapshots(const RunConfig& cfg) {
    std::ifstream fs(cfg.snapshots), fr(cfg.rates), fd(cfg.dividends);
    if (!fs) throw std::runtime_error("cannot open " + cfg.snapshots.string());
    if (!fr) throw std::runtime_error("cannot open " + cfg.rates.string());
    if (!fd) throw std::runtime_error("cannot open " + cfg.dividends.string());
    return corrdyn::marketdata::assemble_snapshots(fs, fr, fd);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string tenor_tag(double tenor) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", tenor);
    return buf;
}

int cmd_generate(const CommonOpts& opts) {
    const RunConfig cfg = load_config(opts);
    const auto market = corrdyn::synth::generate_market(cfg.synth);
    corrdyn::synth::write_market(cfg.output_dir, market);
    std::cout << "generated " << market.trades.size() << " trades over "
              << market.truth.dates.size() << " days into " << cfg.output_dir.string() << '\n';
    return 0;
}

int cmd_fit(const CommonOpts& opts) {
    const RunConfig cfg = load_config(opts);
    std::vector<corrdyn::marketdata::OptionTrade> trades;
    std::map<std::int64_t, corrdyn::marketdata::MarketSnapshot> snaps;
    try {
        trades = read_trades(cfg);
        snaps = read_snapshots(cfg);
    } catch (const std::exception& e) {
        std::cerr << "fit failed at stage marketdata: " << e.what() << '\n';
        return 1;
    }
    FittedModel fm;
    try {
        fm = corrdyn::pipeline::fit_pipeline(cfg, trades, snaps);
    } catch (const std::exception& e) {
        std::cerr << "fit failed at stage estimation: " << e.what() << '\n';
        return 1;
    }
    std::filesystem::create_directories(cfg.output_dir);
    corrdyn::pipeline::save_model(cfg.output_dir / "model.json", fm);
    write_text(cfg.output_dir / "explained_variance.txt",
               corrdyn::pipeline::explained_variance_table(fm));
    write_text(cfg.output_dir / "adf.txt", corrdyn::pipeline::adf_table(fm));
    write_text(cfg.output_dir / "lag_order.txt", corrdyn::pipeline::lag_order_table(fm));
    write_text(cfg.output_dir / "var_coeffs.txt", corrdyn::pipeline::var_table(fm));
    std::cout << "model written to " << (cfg.output_dir / "model.json").string() << '\n';
    return 0;
}

int cmd_forecast(const CommonOpts& opts, const std::string& model_path) {
    const RunConfig cfg = load_config(opts);
    const std::filesystem::path mp =
        model_path.empty() ? cfg.output_dir / "model.json" : std::filesystem::path(model_path);
    const FittedModel fm = corrdyn::pipeline::load_model(mp);
    const int horizon = std::max(1, static_cast<int>(std::llround(252.0 * cfg.dt)));
    std::ostringstream os;
    os << "date,horizon_days,forecast_rho\n";
    char buf[64];
    for (std::size_t t = 0; t < fm.all_dates.size(); ++t) {
        double rho;
        try {
            rho = corrdyn::pipeline::forecast_rho(fm, t, horizon);
        } catch (const std::exception&) {
            continue;
        }
        std::snprintf(buf, sizeof(buf), "%.17g", rho);
        os << fm.all_dates[t].to_string() << ',' << horizon << ',' << buf << '\n';
    }
    std::filesystem::create_directories(cfg.output_dir);
    write_text(cfg.output_dir / "forecast.csv", os.str());
    std::cout << "forecasts written to " << (cfg.output_dir / "forecast.csv").string() << '\n';
    return 0;
}

int cmd_backtest(const CommonOpts& opts, const std::string& model_path, bool oracle) {
    const RunConfig cfg = load_config(opts);
    const std::filesystem::path mp =
        model_path.empty() ? cfg.output_dir / "model.json" : std::filesystem::path(model_path);
    const FittedModel fm = corrdyn::pipeline::load_model(mp);
    const auto trades = read_trades(cfg);
    const auto snaps = read_snapshots(cfg);

    std::vector<std::pair<double, corrdyn::strategy::BacktestLedger>> ledgers;
    std::filesystem::create_directories(cfg.output_dir);
    for (double tenor : cfg.tenors) {
        auto ledger =
            corrdyn::pipeline::backtest_tenor(cfg, fm, trades, snaps, tenor, oracle);
        if (ledger.rows.empty()) {
            std::cerr << "warning: no data for tenor " << tenor_tag(tenor) << ", omitted\n";
            continue;
        }
        write_text(cfg.output_dir / ("ledger_" + tenor_tag(tenor) + ".csv"),
                   corrdyn::strategy::ledger_csv(ledger));
        ledgers.emplace_back(tenor, std::move(ledger));
    }
    write_text(cfg.output_dir / "summary.txt", corrdyn::pipeline::strategy_table(ledgers));
    write_text(cfg.output_dir / "hedge_error.txt", corrdyn::pipeline::hedge_error_table(ledgers));
    std::cout << "backtest wrote " << ledgers.size() << " ledgers to "
              << cfg.output_dir.string() << '\n';
    return 0;
}

int cmd_report(const std::vector<std::string>& ledger_paths) {
    std::vector<std::pair<double, corrdyn::strategy::BacktestLedger>> ledgers;
    for (const auto& path : ledger_paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        auto ledger = corrdyn::strategy::parse_ledger_csv(ss.str());
        ledgers.emplace_back(ledger.tenor, std::move(ledger));
    }
    std::cout << corrdyn::pipeline::strategy_table(ledgers) << '\n'
              << corrdyn::pipeline::hedge_error_table(ledgers);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Basket-correlation surface estimation, forecasting, and dispersion backtests"};
    app.require_subcommand(1);

    CommonOpts gen_opts, fit_opts, fc_opts, bt_opts;
    std::string fc_model, bt_model;
    bool oracle = false;
    std::vector<std::string> ledger_paths;

    add_common(app.add_subcommand("generate", "Write a synthetic market"), &gen_opts);
    add_common(app.add_subcommand("fit", "Estimate the factor model and dynamics"), &fit_opts);
    auto* fc = app.add_subcommand("forecast", "Forecast the correlation level");
    add_common(fc, &fc_opts);
    fc->add_option("--model", fc_model, "Model JSON (default: <output_dir>/model.json)");
    auto* bt = app.add_subcommand("backtest", "Run the dispersion backtest");
    add_common(bt, &bt_opts);
    bt->add_option("--model", bt_model, "Model JSON (default: <output_dir>/model.json)");
    bt->add_flag("--oracle-forecast", oracle, "Use realized correlation as the forecast");
    auto* rp = app.add_subcommand("report", "Summarize ledger CSVs");
    rp->add_option("ledgers", ledger_paths, "Ledger CSV paths")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("generate")) return cmd_generate(gen_opts);
        if (app.got_subcommand("fit")) return cmd_fit(fit_opts);
        if (app.got_subcommand("forecast")) return cmd_forecast(fc_opts, fc_model);
        if (app.got_subcommand("backtest")) return cmd_backtest(bt_opts, bt_model, oracle);
        if (app.got_subcommand("report")) return cmd_report(ledger_paths);
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
