#include "commands.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "crplus/conditional.hpp"
#include "crplus/engine.hpp"
#include "crplus/error.hpp"
#include "crplus/io.hpp"
#include "crplus/model.hpp"
#include "crplus/simulate.hpp"
#include "json.hpp"

namespace crplus::cli {

namespace fs = std::filesystem;

namespace {

/// Doublings tried after the moment heuristic when --max-loss is "auto".
constexpr int kAutoDoublings = 6;

struct RunConfig {
    std::string portfolio_path;
    std::string max_loss = "auto";
    double tail_tolerance = kDefaultTailTolerance;
    std::vector<double> thetas{0.9, 0.99, 0.999};
    std::string out_dir = ".";
    bool renormalize = false;
    std::vector<std::string> obligors;
    bool writeoff = false;
    std::uint64_t draws = 1'000'000;
    std::uint64_t seed = 42;
};

std::string format_double(double v) {
    char buf[40];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string join(const std::vector<std::string>& parts, const char* sep = ",") {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read portfolio file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

void validate_config(const RunConfig& cfg) {
    for (double t : cfg.thetas)
        if (!(t > 0.0 && t < 1.0)) throw InputError("--theta values must lie in (0, 1), got " + format_double(t));
    if (!(cfg.tail_tolerance > 0.0 && cfg.tail_tolerance < 1.0))
        throw InputError("--tail-tol must lie in (0, 1)");
}

struct Context {
    RunConfig cfg;
    Portfolio portfolio;
    Provenance provenance;
    fs::path out;
};

Context load(const RunConfig& cfg, const std::string& command) {
    validate_config(cfg);
    const std::string text = read_file(cfg.portfolio_path);
    Context ctx{cfg, parse_portfolio(text, {cfg.renormalize}), {}, fs::path(cfg.out_dir)};
    ctx.provenance.command = command;
    ctx.provenance.input_path = cfg.portfolio_path;
    ctx.provenance.input_sha256 = sha256_hex(text);
    fs::create_directories(ctx.out);
    return ctx;
}

std::size_t parse_limit(const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != value.size() || value.empty() || value[0] == '-')
        throw InputError("--max-loss must be a non-negative integer or 'auto', got '" + value + "'");
    return static_cast<std::size_t>(v);
}

/// Runs `body(limit)`; under "auto" the heuristic limit is doubled on truncation failures.
template <class Result>
std::pair<Result, std::size_t> with_limit(Context& ctx, const std::function<Result(std::size_t)>& body) {
    if (ctx.cfg.max_loss != "auto") {
        const std::size_t limit = parse_limit(ctx.cfg.max_loss);
        return {body(limit), limit};
    }
    std::size_t limit = suggest_truncation(ctx.portfolio);
    for (int attempt = 0;; ++attempt) {
        try {
            return {body(limit), limit};
        } catch (const TruncationError&) {
            if (attempt == kAutoDoublings) throw;
            limit *= 2;
        }
    }
}

void echo_common(Context& ctx, std::size_t limit) {
    auto& c = ctx.provenance.config;
    c.emplace_back("max_loss", ctx.cfg.max_loss);
    c.emplace_back("truncation_limit", std::to_string(limit));
    c.emplace_back("tail_tol", format_double(ctx.cfg.tail_tolerance));
    std::vector<std::string> thetas;
    for (double t : ctx.cfg.thetas) thetas.push_back(format_double(t));
    c.emplace_back("theta", join(thetas));
    c.emplace_back("renormalize_weights", ctx.cfg.renormalize ? "true" : "false");
}

void check_scenario(const Context& ctx) {
    if (ctx.cfg.obligors.empty() || ctx.cfg.obligors.size() > 2)
        throw InputError("--obligor must be given once or twice");
    for (const auto& id : ctx.cfg.obligors) ctx.portfolio.obligor_index(id);
    if (ctx.cfg.obligors.size() == 2 && ctx.cfg.obligors[0] == ctx.cfg.obligors[1])
        throw InputError("--obligor ids must be distinct (got '" + ctx.cfg.obligors[0] + "' twice)");
}

int cmd_dist(const RunConfig& cfg, std::ostream& out) {
    Context ctx = load(cfg, "dist");
    auto [engine, limit] = with_limit<std::shared_ptr<LossEngine>>(ctx, [&](std::size_t l) {
        return std::make_shared<LossEngine>(assemble(ctx.portfolio, l), ctx.cfg.tail_tolerance);
    });
    echo_common(ctx, limit);
    const RiskReport risk = risk_report(engine->base(), ctx.cfg.thetas, ctx.cfg.tail_tolerance);
    write_file(ctx.out / "pmf.csv", to_csv(engine->base()));
    write_file(ctx.out / "report.json", risk_report_json(risk, "pmf.csv", ctx.provenance));
    out << "dist: L=" << limit << " mean=" << risk.mean << " tail_mass=" << risk.tail_mass << " -> "
        << (ctx.out / "report.json").string() << "\n";
    return kExitOk;
}

struct Scenario {
    std::shared_ptr<LossEngine> engine;
    ScenarioReport report;
};

Scenario run_scenario(Context& ctx, std::size_t limit) {
    auto engine = std::make_shared<LossEngine>(assemble(ctx.portfolio, limit), ctx.cfg.tail_tolerance);
    ScenarioOptions options{ctx.cfg.writeoff, ctx.cfg.thetas};
    return {engine, loss_given_defaults(*engine, ctx.portfolio, ctx.cfg.obligors, options)};
}

int cmd_cond(const RunConfig& cfg, std::ostream& out) {
    Context ctx = load(cfg, "cond");
    check_scenario(ctx);
    auto [scenario, limit] = with_limit<Scenario>(ctx, [&](std::size_t l) { return run_scenario(ctx, l); });
    echo_common(ctx, limit);
    ctx.provenance.config.emplace_back("obligor", join(ctx.cfg.obligors));
    ctx.provenance.config.emplace_back("writeoff", ctx.cfg.writeoff ? "true" : "false");

    const RiskReport base = risk_report(scenario.engine->base(), ctx.cfg.thetas, ctx.cfg.tail_tolerance);
    write_file(ctx.out / "conditional_pmf.csv", to_csv(scenario.report.conditional_pmf));
    write_file(ctx.out / "scenario.json",
               scenario_report_json(scenario.report, "conditional_pmf.csv", ctx.provenance));
    write_file(ctx.out / "unconditional_pmf.csv", to_csv(scenario.engine->base()));
    write_file(ctx.out / "unconditional_report.json",
               risk_report_json(base, "unconditional_pmf.csv", ctx.provenance));
    out << "cond " << join(ctx.cfg.obligors) << (ctx.cfg.writeoff ? " (write-off)" : "") << ": L=" << limit
        << " mean " << base.mean << " -> " << scenario.report.risk.mean << "\n";
    return kExitOk;
}

int cmd_mc(const RunConfig& cfg, std::ostream& out) {
    Context ctx = load(cfg, "mc");
    ctx.provenance.config.emplace_back("draws", std::to_string(cfg.draws));
    ctx.provenance.config.emplace_back("seed", std::to_string(cfg.seed));
    const SimResult result = simulate(ctx.portfolio, {cfg.draws, cfg.seed, true});
    write_file(ctx.out / "mc_losses.csv", sim_result_csv(result));
    write_file(ctx.out / "mc_summary.json", sim_result_json(result, ctx.portfolio, "mc_losses.csv", ctx.provenance));
    out << "mc: draws=" << cfg.draws << " seed=" << cfg.seed << " -> " << (ctx.out / "mc_summary.json").string()
        << "\n";
    return kExitOk;
}

nlohmann::ordered_json risk_or_null(const Pmf& pmf, const RunConfig& cfg) {
    try {
        const RiskReport r = risk_report(pmf, cfg.thetas, cfg.tail_tolerance);
        nlohmann::ordered_json levels = nlohmann::ordered_json::array();
        for (const auto& l : r.levels)
            levels.push_back({{"theta", l.theta}, {"quantile", l.quantile}, {"expected_shortfall", l.expected_shortfall}});
        return {{"mean", r.mean}, {"variance", r.variance}, {"tail_mass", r.tail_mass}, {"levels", levels}};
    } catch (const NumericalError& e) {
        return {{"error", e.what()}};
    }
}

int cmd_compare(const RunConfig& cfg, std::ostream& out) {
    Context ctx = load(cfg, "compare");
    check_scenario(ctx);
    auto [scenario, limit] = with_limit<Scenario>(ctx, [&](std::size_t l) { return run_scenario(ctx, l); });
    echo_common(ctx, limit);
    ctx.provenance.config.emplace_back("obligor", join(ctx.cfg.obligors));
    ctx.provenance.config.emplace_back("writeoff", ctx.cfg.writeoff ? "true" : "false");
    ctx.provenance.config.emplace_back("draws", std::to_string(cfg.draws));
    ctx.provenance.config.emplace_back("seed", std::to_string(cfg.seed));

    // Monte Carlo estimates are taken on the same (possibly write-off) portfolio as the analytics.
    const Portfolio mc_portfolio =
        cfg.writeoff ? with_zero_severity(ctx.portfolio, cfg.obligors) : ctx.portfolio;
    const ConditionalEstimate mc = estimate_conditional(mc_portfolio, cfg.obligors, {cfg.draws, cfg.seed, false});
    const Pmf stressed = stressed_input_distribution(ctx.portfolio, cfg.obligors, cfg.writeoff, limit,
                                                     cfg.tail_tolerance);
    const Pmf& analytic = scenario.report.conditional_pmf;

    // Single-default scenarios are scored against the estimator's standard error under the model;
    // two-default ones against the per-bucket sample SE.
    std::vector<double> model_se;
    if (cfg.obligors.size() == 1) {
        if (cfg.writeoff) {
            const LossEngine zeroed(assemble(mc_portfolio, limit), cfg.tail_tolerance);
            model_se = weighted_estimator_standard_errors(zeroed, mc_portfolio, cfg.obligors[0], cfg.draws);
        } else {
            model_se = weighted_estimator_standard_errors(*scenario.engine, ctx.portfolio, cfg.obligors[0], cfg.draws);
        }
    }

    std::vector<double> mc_probs(limit + 1, 0.0);
    for (const auto& [x, b] : mc.weighted)
        if (x <= limit) mc_probs[x] = b.estimate;
    const Pmf mc_pmf(mc_probs, std::max(0.0, 1.0 - std::accumulate(mc_probs.begin(), mc_probs.end(), 0.0)));

    std::string csv = "x,analytic,mc_weighted,mc_se,mc_model_se,mc_z,stressed_input,stressed_minus_analytic\n";
    std::size_t eligible = 0, within = 0;
    double max_mc_dev = 0.0, max_stressed_dev = 0.0;
    const double expected_scale = static_cast<double>(cfg.draws) * mc.normalizer;
    char buf[256];
    for (std::size_t x = 0; x <= limit; ++x) {
        const auto it = mc.weighted.find(x);
        const double m = it == mc.weighted.end() ? 0.0 : it->second.estimate;
        const double se = it == mc.weighted.end() ? 0.0 : it->second.standard_error;
        const double score_se = model_se.empty() ? se : model_se[x];
        const double z = score_se > 0.0 ? (m - analytic[x]) / score_se : 0.0;
        if (expected_scale * analytic[x] >= 25.0) {
            ++eligible;
            if (std::abs(m - analytic[x]) <= 3.0 * score_se) ++within;
        }
        max_mc_dev = std::max(max_mc_dev, std::abs(m - analytic[x]));
        max_stressed_dev = std::max(max_stressed_dev, std::abs(stressed[x] - analytic[x]));
        const int len = std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.6f,%.17g,%.17g\n", x, analytic[x],
                                      m, se, model_se.empty() ? 0.0 : model_se[x], z, stressed[x], stressed[x] - analytic[x]);
        csv.append(buf, static_cast<std::size_t>(len));
    }

    nlohmann::ordered_json doc;
    doc["metadata"] = nlohmann::ordered_json::parse(
        scenario_report_json(scenario.report, "", ctx.provenance))["metadata"];
    doc["scenario"] = cfg.obligors;
    doc["writeoff"] = cfg.writeoff;
    doc["methods"] = {{"analytic", risk_or_null(analytic, cfg)},
                      {"mc_weighted", risk_or_null(mc_pmf, cfg)},
                      {"stressed_input", risk_or_null(stressed, cfg)}};
    nlohmann::ordered_json pds = nlohmann::ordered_json::object();
    for (const auto& o : ctx.portfolio.obligors) {
        if (std::find(cfg.obligors.begin(), cfg.obligors.end(), o.id) != cfg.obligors.end()) continue;
        pds[o.id] = {{"pd", o.pd}, {"stressed_pd", stressed_pd(ctx.portfolio, o.id, cfg.obligors)}};
    }
    doc["stressed_pds"] = pds;
    doc["deviations"] = {{"max_abs_mc_minus_analytic", max_mc_dev},
                         {"max_abs_stressed_minus_analytic", max_stressed_dev},
                         {"buckets_with_expected_count_ge_25", eligible},
                         {"buckets_within_3se", within},
                         {"se_basis", model_se.empty() ? "sample" : "model"}};
    doc["csv"] = "compare.csv";
    write_file(ctx.out / "compare.csv", csv);
    write_file(ctx.out / "compare.json", doc.dump(2) + "\n");
    out << "compare " << join(cfg.obligors) << ": " << within << "/" << eligible
        << " buckets within 3 SE of the analytic pmf -> " << (ctx.out / "compare.json").string() << "\n";
    return kExitOk;
}

void add_common(CLI::App* cmd, RunConfig& cfg, bool analytic) {
    cmd->add_option("--portfolio", cfg.portfolio_path, "Portfolio JSON file")->required();
    cmd->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    cmd->add_flag("--renormalize-weights", cfg.renormalize, "Rescale factor loadings to sum to one");
    if (!analytic) return;
    cmd->add_option("--max-loss", cfg.max_loss, "Truncation limit L, or 'auto'")->capture_default_str();
    cmd->add_option("--tail-tol", cfg.tail_tolerance, "Maximum tail mass beyond L")->capture_default_str();
    cmd->add_option("--theta", cfg.thetas, "Confidence levels, comma separated")->delimiter(',')->capture_default_str();
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"CreditRisk+ loss distributions, default-conditional scenarios and Monte Carlo validation",
                 "crplus"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto* dist = app.add_subcommand("dist", "Unconditional portfolio loss distribution");
    add_common(dist, cfg, true);

    auto* cond = app.add_subcommand("cond", "Loss distribution conditional on one or two defaults");
    add_common(cond, cfg, true);
    cond->add_option("--obligor", cfg.obligors, "Defaulted obligor id (repeat for two)")->required();
    cond->add_flag("--writeoff", cfg.writeoff, "Exclude the defaulted obligors' own losses");

    auto* mc = app.add_subcommand("mc", "Monte Carlo simulation of the portfolio loss");
    add_common(mc, cfg, false);
    mc->add_option("--draws", cfg.draws)->capture_default_str();
    mc->add_option("--seed", cfg.seed)->capture_default_str();

    auto* compare = app.add_subcommand("compare", "Analytic vs Monte Carlo vs stressed-input conditional losses");
    add_common(compare, cfg, true);
    compare->add_option("--obligor", cfg.obligors, "Defaulted obligor id (repeat for two)")->required();
    compare->add_flag("--writeoff", cfg.writeoff, "Exclude the defaulted obligors' own losses");
    compare->add_option("--draws", cfg.draws)->capture_default_str();
    compare->add_option("--seed", cfg.seed)->capture_default_str();

    std::vector<std::string> argv_storage{"crplus"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "crplus: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (dist->parsed()) return cmd_dist(cfg, out);
        if (cond->parsed()) return cmd_cond(cfg, out);
        if (mc->parsed()) return cmd_mc(cfg, out);
        if (compare->parsed()) return cmd_compare(cfg, out);
    } catch (const InputError& e) {
        err << "crplus: input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const TruncationError& e) {
        err << "crplus: truncation error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        err << "crplus: numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "crplus: " << e.what() << "\n";
        return 1;
    }
    return kExitInput;
}

}  // namespace crplus::cli
