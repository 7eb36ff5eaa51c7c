#include "pdemap/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pdemap/experiments.hpp"
#include "pdemap/mc_oracle.hpp"
#include "pdemap/probes.hpp"
#include "pdemap/rng.hpp"

namespace pdemap::cli {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(std::string key, std::size_t line, const std::string& message)
    : InvalidArgument(line > 0 ? fmt::format("{} (key '{}', line {})", message, key, line)
                               : fmt::format("{} (key '{}')", message, key)),
      key_(std::move(key)),
      line_(line) {}

const std::vector<KeyDoc>& config_keys() {
    static const std::vector<KeyDoc> keys = {
        {"seed", "integer", "0", "top-level seed; every random stream is derived from it"},
        {"output", "string", "\"out\"", "output directory (the --output flag takes precedence)"},
        {"workers", "integer", "0", "replication pool size, 0 = available parallelism"},
        {"model.kind", "string", "\"darcy\"", "darcy | schrodinger"},
        {"model.dim", "integer", "1", "domain dimension, 1 or 2"},
        {"model.n", "integer", "127", "interior grid nodes per axis"},
        {"model.f_min", "real", "0.5 (darcy) / 0.05 (schrodinger)", "link lower bound"},
        {"model.shift", "real", "1.0", "link softplus shift"},
        {"model.source", "real", "10 (darcy) / 1 (schrodinger)", "Darcy source amplitude or Schrodinger boundary value"},
        {"model.solver", "string", "\"direct\"", "direct | pcg"},
        {"truth.alpha", "real", "2.0", "smoothness of the truth and of the penalty"},
        {"truth.modes", "integer", "32", "spectral modes of the sampled truth"},
        {"truth.radius", "real", "1.5", "H^alpha norm of the truth"},
        {"simulate.N", "integer", "512", "number of design points"},
        {"simulate.sigma", "real", "required", "noise standard deviation"},
        {"estimate.data", "string", "none", "dataset CSV; when absent the simulate block generates one"},
        {"estimate.sigma", "real", "required with estimate.data", "noise level of the CSV dataset"},
        {"estimator.alpha", "real", "truth.alpha", "penalty smoothness"},
        {"estimator.r", "real", "rate_schedule(N)", "regularization scale"},
        {"estimator.modes", "integer", "ceil(N^(1/(2 alpha + d)))", "sieve dimension K"},
        {"estimator.max_iters", "integer", "500", "L-BFGS iteration cap per restart"},
        {"estimator.grad_tol", "real", "1e-8", "gradient-norm stopping tolerance"},
        {"estimator.restarts", "integer", "3", "number of starting points"},
        {"estimator.memory", "integer", "10", "L-BFGS memory"},
        {"estimator.init_radius", "real", "0.5", "H^alpha norm of random starting points"},
        {"campaign.N_ladder", "integer array", "[128,...,8192]", "sample sizes, strictly increasing"},
        {"campaign.reps_per_N", "integer", "20", "replications per sample size"},
        {"campaign.sigma", "real", "0.05", "noise standard deviation"},
        {"campaign.r_multiplier", "real", "1.0", "factor applied to rate_schedule"},
        {"campaign.concentration_N", "integer", "1024", "sample size for the concentration run"},
        {"campaign.concentration_reps", "integer", "100", "replications for the concentration run"},
        {"campaign.M_ladder", "real array", "[1,2,4,8]", "thresholds M in d_r^2 >= M r_N^2"},
        {"props.alpha", "real", "truth.alpha or 2", "ball smoothness for sampled parameters"},
        {"props.radius", "real", "1.5", "H^alpha ball radius"},
        {"props.modes", "integer", "16", "modes of sampled parameters"},
        {"props.pairs", "integer", "200", "pairs per probe"},
        {"props.c1_ceiling", "real", "1e3", "ceiling on the C1 ratio"},
        {"props.c2_ceiling", "real", "1/f_min (darcy) / 1 (schrodinger)", "ceiling on sup|u| / sup|g|"},
        {"props.c3_ceiling", "real", "1e3", "ceiling on the C3 ratio"},
        {"props.c7_tolerance", "real", "0.15", "allowed shortfall of the C7 slope below tau"},
        {"oracle.points", "array of points", "[[0.1],[0.3],[0.5],[0.7],[0.9]]", "evaluation points"},
        {"oracle.n_paths", "integer", "100000", "Monte Carlo paths per point"},
        {"oracle.dt", "real", "1e-5", "Euler-Maruyama step"},
        {"oracle.max_steps", "integer", "ceil(20/dt)", "per-path step cap"},
        {"oracle.bias_budget", "real", "0.01 (schrodinger) / 0.02 (darcy)", "allowed |MC - FD| beyond 3 SE"},
    };
    return keys;
}

namespace {

const std::set<std::string> kBlocks = {"model", "truth", "simulate", "estimate", "estimator", "campaign", "props", "oracle"};

const std::map<std::string, std::vector<std::string>> kRequiredBlocks = {
    {"simulate", {"model", "truth", "simulate"}},
    {"estimate", {"model", "estimator"}},
    {"rates", {"model", "truth", "campaign"}},
    {"concentration", {"model", "truth", "campaign"}},
    {"stability", {"model", "truth", "campaign"}},
    {"props", {"model"}},
    {"oracle-check", {"model", "truth", "oracle"}},
};

const std::map<std::string, std::string> kDescriptions = {
    {"simulate", "sample a truth and a noisy dataset"},
    {"estimate", "compute the MAP estimate for a dataset"},
    {"rates", "run a rate campaign over an N ladder"},
    {"concentration", "exceedance frequencies of d_r^2 at one N"},
    {"stability", "estimation error against r_N^tau"},
    {"props", "empirical probes of the forward-map conditions"},
    {"oracle-check", "compare the grid solver with Feynman-Kac Monte Carlo"},
};

class ExitError : public Error {
public:
    ExitError(int code, const std::string& what) : Error(what), code_(code) {}
    int code() const noexcept { return code_; }

private:
    int code_;
};

// JSON config with dotted-path access; keeps the raw text to report line numbers.
class Config {
public:
    Config(std::string text, json root) : text_(std::move(text)), root_(std::move(root)) {}

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config", 0, fmt::format("cannot open config file '{}'", path));
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        try {
            return Config(text, json::parse(text));
        } catch (const json::parse_error& e) {
            const std::size_t line = line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1);
            throw ConfigError(last_key_before(text, e.byte), line, fmt::format("malformed JSON: {}", e.what()));
        }
    }

    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(assignment, 0, "override must have the form key=value");
        }
        const std::string key = assignment.substr(0, eq);
        const std::string raw = assignment.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::parse_error&) {
            value = raw;
        }
        json* node = &root_;
        std::stringstream parts(key);
        std::string part;
        std::vector<std::string> segs;
        while (std::getline(parts, part, '.')) segs.push_back(part);
        for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
            if (!node->contains(segs[i])) (*node)[segs[i]] = json::object();
            node = &(*node)[segs[i]];
            if (!node->is_object()) throw ConfigError(key, 0, "override path crosses a non-object value");
        }
        (*node)[segs.back()] = value;
        overridden_.insert(key);
    }

    // Rejects keys that are not documented.
    void check_keys() const {
        if (!root_.is_object()) throw ConfigError("config", 1, "config must be a JSON object");
        std::set<std::string> known;
        for (const auto& k : config_keys()) known.insert(k.path);
        for (const auto& [name, value] : root_.items()) {
            if (kBlocks.count(name)) {
                if (!value.is_object()) throw ConfigError(name, line_of(name), "block must be a JSON object");
                for (const auto& [leaf, v] : value.items()) {
                    (void)v;
                    const std::string path = name + "." + leaf;
                    if (!known.count(path)) throw ConfigError(path, line_of(path), "unknown config key");
                }
            } else if (!known.count(name)) {
                throw ConfigError(name, line_of(name), "unknown config key");
            }
        }
    }

    bool has(const std::string& path) const { return find(path) != nullptr; }

    template <typename T>
    T get(const std::string& path, std::optional<T> fallback = std::nullopt) const {
        const json* node = find(path);
        if (!node || node->is_null()) {
            if (fallback) return *fallback;
            const auto dot = path.find('.');
            const std::string block = dot == std::string::npos ? path : path.substr(0, dot);
            throw ConfigError(path, line_of(block), "missing required key");
        }
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!node->is_number()) throw json::type_error::create(302, "expected a number", nullptr);
            } else if constexpr (std::is_integral_v<T>) {
                if (!node->is_number_integer()) throw json::type_error::create(302, "expected an integer", nullptr);
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!node->is_string()) throw json::type_error::create(302, "expected a string", nullptr);
            }
            return node->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path, line_of(path), fmt::format("wrong type: {}", e.what()));
        }
    }

    void require_block(const std::string& block, const std::string& subcommand) const {
        if (!root_.contains(block)) {
            throw ConfigError(block, 0, fmt::format("subcommand '{}' requires the '{}' block", subcommand, block));
        }
    }

    std::size_t line_of(const std::string& path) const {
        if (overridden_.count(path)) return 0;
        std::size_t pos = 0;
        std::stringstream parts(path);
        std::string seg;
        while (std::getline(parts, seg, '.')) {
            const auto at = text_.find('"' + seg + '"', pos);
            if (at == std::string::npos) return 0;
            pos = at + 1;
        }
        return line_of_offset(text_, pos);
    }

    const json& root() const { return root_; }

private:
    const json* find(const std::string& path) const {
        const json* node = &root_;
        std::stringstream parts(path);
        std::string seg;
        while (std::getline(parts, seg, '.')) {
            if (!node->is_object() || !node->contains(seg)) return nullptr;
            node = &(*node)[seg];
        }
        return node;
    }

    static std::size_t line_of_offset(const std::string& text, std::size_t offset) {
        offset = std::min(offset, text.size());
        return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
    }

    static std::string last_key_before(const std::string& text, std::size_t offset) {
        const std::string head = text.substr(0, std::min(offset, text.size()));
        const auto colon = head.rfind("\":");
        if (colon == std::string::npos) return "config";
        const auto open = head.rfind('"', colon - 1);
        return open == std::string::npos ? "config" : head.substr(open + 1, colon - open - 1);
    }

    std::string text_;
    json root_;
    std::set<std::string> overridden_;
};

struct Context {
    Config cfg;
    fs::path out;
    std::string subcommand;
    std::uint64_t seed;
    std::ostream& log;
    json summary = json::object();
    std::vector<std::string> artifacts;

    std::ofstream open(const std::string& name) {
        std::ofstream f(out / name, std::ios::binary);
        if (!f) throw ExitError(4, fmt::format("cannot write artifact '{}'", (out / name).string()));
        artifacts.push_back(name);
        return f;
    }

    void write_json(const std::string& name, const json& j) {
        auto f = open(name);
        f << j.dump(2) << '\n';
    }
};

std::uint64_t substream(std::uint64_t seed, const char* name) { return mix64(seed ^ stream_id(name)); }

ForwardProblem build_model(const Config& c) {
    const PdeKind kind = [&] {
        const auto name = c.get<std::string>("model.kind", "darcy");
        try {
            return pde_kind_from_string(name);
        } catch (const InvalidArgument&) {
            throw ConfigError("model.kind", c.line_of("model.kind"), fmt::format("unknown PDE kind '{}'", name));
        }
    }();
    const int dim = c.get<int>("model.dim", 1);
    const int n = c.get<int>("model.n", 127);
    const bool darcy = kind == PdeKind::Darcy;
    const double f_min = c.get<double>("model.f_min", darcy ? 0.5 : 0.05);
    const double shift = c.get<double>("model.shift", 1.0);
    const double source = c.get<double>("model.source", darcy ? 10.0 : 1.0);
    const auto solver = c.get<std::string>("model.solver", "direct");
    SolverOptions opts;
    if (solver == "pcg") opts.backend = LinearBackend::Pcg;
    else if (solver != "direct") throw ConfigError("model.solver", c.line_of("model.solver"), "expected direct or pcg");

    auto wrap = [&](const char* key, auto fn) {
        try {
            return fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const InvalidArgument& e) {
            throw ConfigError(key, c.line_of(key), e.what());
        }
    };
    const Grid grid = wrap("model.n", [&] { return build_grid(dim, n); });
    const LinkFunction link = wrap("model.f_min", [&] { return LinkFunction(f_min, shift); });
    if (darcy) {
        const ForwardProblem base = default_darcy(grid, link, source);
        return ForwardProblem(base.darcy(), link, opts);
    }
    const ForwardProblem base = default_schrodinger(grid, link, source);
    return ForwardProblem(base.schrodinger(), link, opts);
}

GroundTruth build_truth(const Config& c, const ForwardProblem& fp, std::uint64_t seed) {
    const double alpha = c.get<double>("truth.alpha", 2.0);
    const int modes = c.get<int>("truth.modes", 32);
    const double radius = c.get<double>("truth.radius", 1.5);
    try {
        return synthesize_truth(fp, alpha, std::min(modes, fp.grid().n()), substream(seed, "truth"), radius);
    } catch (const InvalidArgument& e) {
        throw ConfigError("truth.alpha", c.line_of("truth.alpha"), e.what());
    }
}

MapConfig build_estimator(const Config& c, const ForwardProblem& fp, std::size_t N, std::uint64_t seed) {
    MapConfig m;
    m.alpha = c.get<double>("estimator.alpha", c.get<double>("truth.alpha", 2.0));
    const double kappa = rate_exponents(fp.kind(), m.alpha, fp.grid().dim()).kappa;
    m.r = c.get<double>("estimator.r", rate_schedule(static_cast<double>(N), m.alpha, kappa, fp.grid().dim()));
    m.modes = c.get<int>("estimator.modes", default_modes(N, m.alpha, fp.grid().dim(), fp.grid().n()));
    m.max_iters = c.get<int>("estimator.max_iters", 500);
    m.grad_tol = c.get<double>("estimator.grad_tol", 1e-8);
    m.restarts = c.get<int>("estimator.restarts", 3);
    m.memory = c.get<int>("estimator.memory", 10);
    m.init_radius = c.get<double>("estimator.init_radius", 0.5);
    m.seed = substream(seed, "estimator");
    try {
        m.validate(fp.grid());
    } catch (const InvalidArgument& e) {
        throw ConfigError("estimator", c.line_of("estimator"), e.what());
    }
    return m;
}

RateCampaign build_campaign(const Config& c, const ForwardProblem& fp, std::uint64_t seed) {
    RateCampaign rc;
    rc.kind = fp.kind();
    rc.dim = fp.grid().dim();
    rc.grid_n = fp.grid().n();
    rc.model = fp;
    rc.alpha = c.get<double>("truth.alpha", 2.0);
    rc.truth_modes = std::min(c.get<int>("truth.modes", 32), fp.grid().n());
    rc.truth_radius = c.get<double>("truth.radius", 1.5);
    rc.N_ladder = c.get<std::vector<int>>("campaign.N_ladder", rc.N_ladder);
    rc.reps_per_N = c.get<int>("campaign.reps_per_N", 20);
    rc.sigma = c.get<double>("campaign.sigma", 0.05);
    rc.r_multiplier = c.get<double>("campaign.r_multiplier", 1.0);
    if (c.has("estimator.modes")) rc.modes = c.get<int>("estimator.modes");
    rc.max_iters = c.get<int>("estimator.max_iters", 500);
    rc.grad_tol = c.get<double>("estimator.grad_tol", 1e-8);
    rc.restarts = c.get<int>("estimator.restarts", 3);
    rc.threads = c.get<int>("workers", 0);
    rc.seed = seed;
    return rc;
}

void run_simulate(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    const GroundTruth truth = build_truth(ctx.cfg, fp, ctx.seed);
    const int N = ctx.cfg.get<int>("simulate.N", 512);
    const double sigma = ctx.cfg.get<double>("simulate.sigma");
    if (N < 1) throw ConfigError("simulate.N", ctx.cfg.line_of("simulate.N"), "N must be positive");
    if (sigma < 0.0) throw ConfigError("simulate.sigma", ctx.cfg.line_of("simulate.sigma"), "sigma must be non-negative");
    const Dataset ds = generate_dataset(fp, truth, static_cast<std::size_t>(N), sigma, substream(ctx.seed, "dataset"));
    {
        auto f = ctx.open("data.csv");
        write_csv(f, ds);
    }
    {
        auto f = ctx.open("truth_f.csv");
        write_csv(f, truth.f);
    }
    {
        auto f = ctx.open("truth_u.csv");
        write_csv(f, forward(fp, truth.theta));
    }
    ctx.write_json("truth.json", to_json(truth.theta));
    ctx.write_json("metadata.json", dataset_metadata(ds, fp.kind()));
    ctx.summary["dataset"] = dataset_metadata(ds, fp.kind());
    ctx.summary["truth_norm"] = sobolev_norm(truth.theta, {truth.alpha});
}

void run_estimate(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    std::optional<GroundTruth> truth;
    Dataset ds;
    if (ctx.cfg.has("estimate.data")) {
        const auto path = ctx.cfg.get<std::string>("estimate.data");
        const double sigma = ctx.cfg.get<double>("estimate.sigma");
        std::ifstream in(path);
        if (!in) throw ConfigError("estimate.data", ctx.cfg.line_of("estimate.data"), fmt::format("cannot open '{}'", path));
        ds = read_dataset_csv(in, fp.grid().dim(), sigma);
    } else {
        ctx.cfg.require_block("simulate", ctx.subcommand);
        truth = build_truth(ctx.cfg, fp, ctx.seed);
        const int N = ctx.cfg.get<int>("simulate.N", 512);
        const double sigma = ctx.cfg.get<double>("simulate.sigma");
        ds = generate_dataset(fp, *truth, static_cast<std::size_t>(N), sigma, substream(ctx.seed, "dataset"));
    }
    const MapConfig mc = build_estimator(ctx.cfg, fp, ds.size(), ctx.seed);
    const MapFit fit = map_estimate(fp, ds, mc);
    json j = to_json(fit);
    j["r"] = mc.r;
    j["modes"] = mc.modes;
    j["alpha"] = mc.alpha;
    if (truth) {
        j["prediction_error"] = prediction_error(fp, fit.theta_hat, truth->theta);
        j["estimation_error"] = estimation_error(fit.f_hat, truth->f);
    }
    ctx.write_json("fit.json", j);
    {
        auto f = ctx.open("f_hat.csv");
        write_csv(f, fit.f_hat);
    }
    ctx.summary["converged"] = fit.converged;
    ctx.summary["status"] = fit.status;
    ctx.summary["objective"] = fit.objective;
    ctx.summary["grad_norm_final"] = fit.grad_norm_final;
    if (truth) {
        ctx.summary["prediction_error"] = j["prediction_error"];
        ctx.summary["estimation_error"] = j["estimation_error"];
    }
}

void run_rates(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    const RateReport report = run_rate_campaign(build_campaign(ctx.cfg, fp, ctx.seed));
    {
        auto f = ctx.open("rates.csv");
        write_csv(f, report.rows);
    }
    {
        auto f = ctx.open("rates.svg");
        write_svg(f, report);
    }
    const json j = to_json(report);
    ctx.write_json("rates.json", j);
    ctx.summary["rates"] = j;
}

void run_concentration_cmd(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    RateCampaign rc = build_campaign(ctx.cfg, fp, ctx.seed);
    rc.N_ladder = {ctx.cfg.get<int>("campaign.concentration_N", 1024)};
    rc.reps_per_N = ctx.cfg.get<int>("campaign.concentration_reps", 100);
    const auto M = ctx.cfg.get<std::vector<double>>("campaign.M_ladder", std::vector<double>{1, 2, 4, 8});
    const ConcentrationReport report = run_concentration(rc, M);
    {
        auto f = ctx.open("concentration.csv");
        write_csv(f, report);
    }
    const json j = to_json(report);
    ctx.write_json("concentration.json", j);
    ctx.summary["concentration"] = j;
}

void run_stability_cmd(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    const StabilityReport report = run_stability_check(build_campaign(ctx.cfg, fp, ctx.seed));
    {
        auto f = ctx.open("stability.csv");
        f << "N,rep,estimation_l2,bound,ratio,theta_norm_halpha\n";
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            const auto& r = report.rows[i];
            f << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.N, r.rep, r.estimation, report.bound[i],
                             report.ratio[i], r.theta_norm);
        }
    }
    const json j = to_json(report);
    ctx.write_json("stability.json", j);
    ctx.summary["stability"] = j;
}

void run_props(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    ProbeSettings s;
    s.alpha = ctx.cfg.get<double>("props.alpha", ctx.cfg.get<double>("truth.alpha", 2.0));
    s.radius = ctx.cfg.get<double>("props.radius", 1.5);
    s.modes = ctx.cfg.get<int>("props.modes", 16);
    s.pairs = ctx.cfg.get<int>("props.pairs", 200);
    s.seed = substream(ctx.seed, "props");
    const bool darcy = fp.kind() == PdeKind::Darcy;
    const double c1_ceiling = ctx.cfg.get<double>("props.c1_ceiling", 1e3);
    const double c2_ceiling = ctx.cfg.get<double>("props.c2_ceiling", darcy ? 1.0 / fp.link().f_min() : 1.0);
    const double c3_ceiling = ctx.cfg.get<double>("props.c3_ceiling", 1e3);
    const double c7_tol = ctx.cfg.get<double>("props.c7_tolerance", 0.15);
    const double tau = rate_exponents(fp.kind(), s.alpha, fp.grid().dim()).tau;

    const RatioProbe c1 = probe_l2_regularity(fp, s);
    const double c2 = probe_uniform_bound(fp, s);
    const RatioProbe c3 = probe_sup_regularity(fp, s);
    const StabilityProbe c7 = probe_inverse_continuity(fp, s, tau);
    const double interp = probe_interpolation(fp.grid(), s);

    auto ratio_entry = [](const RatioProbe& p, double ceiling) {
        json j = to_json(p);
        j["ceiling"] = ceiling;
        j["pass"] = p.finite() && p.no_blowup() && p.max_ratio <= ceiling;
        return j;
    };
    json j = {{"C1", ratio_entry(c1, c1_ceiling)},
              {"C2", {{"constant", c2}, {"ceiling", c2_ceiling}, {"pass", c2 <= c2_ceiling}}},
              {"C3", ratio_entry(c3, c3_ceiling)},
              {"C7", {{"slope", c7.slope}, {"tau", tau}, {"tolerance", c7_tol}, {"pass", c7.slope >= tau - c7_tol}}},
              {"interpolation", {{"constant", interp}, {"ceiling", 1.0 + 1e-9}, {"pass", interp <= 1.0 + 1e-9}}}};
    bool all = true;
    for (const auto& [name, entry] : j.items()) {
        (void)name;
        all = all && entry.at("pass").get<bool>();
    }
    j["all_pass"] = all;
    ctx.write_json("props.json", j);
    {
        auto f = ctx.open("props_c1.csv");
        f << "dual_distance,ratio\n";
        for (std::size_t i = 0; i < c1.ratios.size(); ++i) f << fmt::format("{:.17g},{:.17g}\n", c1.distances[i], c1.ratios[i]);
    }
    ctx.summary["props"] = j;
}

void run_oracle(Context& ctx) {
    const ForwardProblem fp = build_model(ctx.cfg);
    const GroundTruth truth = build_truth(ctx.cfg, fp, ctx.seed);
    const int dim = fp.grid().dim();
    const bool darcy = fp.kind() == PdeKind::Darcy;
    std::vector<std::vector<double>> pts = ctx.cfg.get<std::vector<std::vector<double>>>(
        "oracle.points", dim == 1 ? std::vector<std::vector<double>>{{0.1}, {0.3}, {0.5}, {0.7}, {0.9}}
                                  : std::vector<std::vector<double>>{{0.3, 0.3}, {0.5, 0.5}, {0.7, 0.4}});
    McConfig mc;
    mc.n_paths = ctx.cfg.get<int>("oracle.n_paths", 100000);
    mc.dt = ctx.cfg.get<double>("oracle.dt", 1e-5);
    mc.max_steps = ctx.cfg.get<long>("oracle.max_steps", static_cast<long>(std::ceil(20.0 / mc.dt)));
    mc.seed = substream(ctx.seed, "oracle");
    const double budget = ctx.cfg.get<double>("oracle.bias_budget", darcy ? 0.02 : 0.01);

    const GridFunction u = fp.solve(truth.f);
    auto f = ctx.open("oracle.csv");
    f << "x,y,fd,mc_mean,mc_std_error,n_censored,abs_diff,within\n";
    json rows = json::array();
    bool all = true;
    for (const auto& p : pts) {
        if (static_cast<int>(p.size()) != dim) {
            throw ConfigError("oracle.points", ctx.cfg.line_of("oracle.points"), fmt::format("points need {} coordinates", dim));
        }
        const Point x{p[0], dim == 2 ? p[1] : 0.0};
        const McEstimate e = darcy ? fk_darcy(truth.f, fp.darcy().g, x, mc)
                                   : fk_schrodinger(truth.f, fp.schrodinger().g_boundary, x, mc);
        const double fd = point_eval(u, x);
        const double diff = std::abs(e.mean - fd);
        const bool ok = diff <= 3.0 * e.std_error + budget;
        all = all && ok;
        f << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{:.17g},{}\n", x[0], x[1], fd, e.mean, e.std_error,
                         e.n_censored, diff, int(ok));
        rows.push_back({{"x", p}, {"fd", fd}, {"mc", e.mean}, {"se", e.std_error}, {"within", ok}});
    }
    f.close();
    ctx.summary["oracle"] = {{"points", rows}, {"all_within", all}, {"bias_budget", budget}};
    ctx.write_json("oracle.json", ctx.summary["oracle"]);
}

std::string keys_help(const std::string& subcommand) {
    std::set<std::string> blocks(kRequiredBlocks.at(subcommand).begin(), kRequiredBlocks.at(subcommand).end());
    if (subcommand == "estimate") blocks.insert({"estimate", "truth", "simulate"});
    if (subcommand == "props") blocks.insert({"props", "truth"});
    if (subcommand == "rates" || subcommand == "concentration" || subcommand == "stability") blocks.insert("estimator");
    std::string s = "\nConfig keys (JSON document; --set overrides dotted paths):\n";
    for (const auto& k : config_keys()) {
        const std::string path = k.path;
        const auto dot = path.find('.');
        if (dot != std::string::npos && !blocks.count(path.substr(0, dot))) continue;
        s += fmt::format("  {:<28} {:<16} default {}: {}\n", path, k.type, k.fallback, k.doc);
    }
    s += "\nRequired blocks: ";
    for (const auto& b : kRequiredBlocks.at(subcommand)) s += b + " ";
    s += "\n";
    return s;
}

json error_report(const std::string& kind, const std::string& message, const std::string& key = "", std::size_t line = 0,
                  const std::string& diagnostics = "") {
    json e = {{"kind", kind}, {"message", message}};
    if (!key.empty()) e["key"] = key;
    if (line > 0) e["line"] = line;
    if (!diagnostics.empty()) e["diagnostics"] = diagnostics;
    return e;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"pdemap: MAP estimation for elliptic PDE coefficient inverse problems"};
    app.require_subcommand(1);
    std::string config_path, output_flag;
    std::vector<std::string> overrides;
    for (const auto& [name, desc] : kDescriptions) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("-c,--config", config_path, "JSON config file")->required();
        sub->add_option("-s,--set", overrides, "override a dotted config key, e.g. --set model.n=63");
        sub->add_option("-o,--output", output_flag, "output directory");
        sub->footer(keys_help(name));
    }

    std::vector<const char*> argv{"pdemap"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    const std::string subcommand = app.get_subcommands().front()->get_name();

    fs::path outdir = output_flag.empty() ? fs::path("out") : fs::path(output_flag);
    json summary = {{"subcommand", subcommand}};
    auto finish = [&](int code, const json& error) {
        summary["status"] = code == 0 ? "ok" : "error";
        if (!error.is_null()) {
            summary["error"] = error;
            err << error.dump() << '\n';
        }
        std::error_code ec;
        fs::create_directories(outdir, ec);
        std::ofstream f(outdir / "summary.json", std::ios::binary);
        if (f) f << summary.dump(2) << '\n';
        return code;
    };

    try {
        Config cfg = Config::load(config_path);
        for (const auto& o : overrides) cfg.apply_override(o);
        cfg.check_keys();
        if (output_flag.empty()) outdir = cfg.get<std::string>("output", "out");
        for (const auto& block : kRequiredBlocks.at(subcommand)) cfg.require_block(block, subcommand);
        const auto seed = cfg.get<std::uint64_t>("seed", 0);
        fs::create_directories(outdir);

        Context ctx{std::move(cfg), outdir, subcommand, seed, out, json::object(), {}};
        const auto start = std::chrono::steady_clock::now();
        if (subcommand == "simulate") run_simulate(ctx);
        else if (subcommand == "estimate") run_estimate(ctx);
        else if (subcommand == "rates") run_rates(ctx);
        else if (subcommand == "concentration") run_concentration_cmd(ctx);
        else if (subcommand == "stability") run_stability_cmd(ctx);
        else if (subcommand == "props") run_props(ctx);
        else run_oracle(ctx);
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        summary["seed"] = seed;
        summary["results"] = ctx.summary;
        summary["artifacts"] = ctx.artifacts;
        out << fmt::format("{}: wrote {} artifacts to {} in {:.1f}s\n", subcommand, ctx.artifacts.size() + 1,
                           outdir.string(), elapsed);
        return finish(0, nullptr);
    } catch (const ConfigError& e) {
        return finish(2, error_report("config", e.what(), e.key(), e.line()));
    } catch (const NumericalError& e) {
        return finish(3, error_report("numerical", e.what(), "", 0, e.diagnostics()));
    } catch (const ExitError& e) {
        return finish(e.code(), error_report("io", e.what()));
    } catch (const InvalidArgument& e) {
        return finish(2, error_report("invalid_argument", e.what()));
    } catch (const std::exception& e) {
        return finish(4, error_report("internal", e.what()));
    }
}

}  // namespace pdemap::cli
