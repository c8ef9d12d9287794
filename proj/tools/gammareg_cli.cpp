// gammareg: command-line front end for the tabular discount-regularization toolkit.

#include "gammareg/gammareg.hpp"

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef GAMMAREG_VERSION
#define GAMMAREG_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gammareg;

namespace {

// JSON config files for CLI11. Nested objects and dotted keys both name
// subcommand sections; underscores in keys are accepted for dashes.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j;
        for (const CLI::Option* opt : app->get_options({})) {
            if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
            if (opt->count() > 0) j[opt->get_lnames()[0]] = opt->results();
            else if (default_also && !opt->get_default_str().empty()) j[opt->get_lnames()[0]] = opt->get_default_str();
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input);
        } catch (const json::parse_error& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        const json flat = flatten_config(j);
        for (auto& [key, value] : flat.items()) {
            CLI::ConfigItem item;
            std::string name = key;
            for (std::size_t dot; (dot = name.find('.')) != std::string::npos;) {
                item.parents.push_back(name.substr(0, dot));
                name.erase(0, dot + 1);
            }
            for (char& ch : name)
                if (ch == '_') ch = '-';
            item.name = name;
            auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
            if (value.is_array())
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            else
                item.inputs.push_back(scalar(value));
            items.push_back(std::move(item));
        }
        return items;
    }
};

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_atomic(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << bytes;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

struct Globals {
    std::uint64_t seed = 0;
    std::string out = ".";
    double tol = 1e-10;
    unsigned threads = 1;
};

// Output files of one run, recorded for the manifest.
class Run {
public:
    Run(const Globals& g, std::string command) : g_(g), command_(std::move(command)), started_(utc_now()) {}

    fs::path emit(const std::string& name, const std::string& bytes) {
        const fs::path path = fs::path(g_.out) / name;
        write_atomic(path, bytes);
        outputs_.push_back({{"file", name}, {"sha256", sha256_hex(bytes)}, {"bytes", bytes.size()}});
        return path;
    }

    void manifest(const json& config) {
        json m;
        m["tool"] = "gammareg";
        m["version"] = GAMMAREG_VERSION;
        m["command"] = command_;
        m["config"] = config;
        m["base_seed"] = g_.seed;
        m["started_at"] = started_;
        m["finished_at"] = utc_now();
        m["digest"] = "sha256";
        m["outputs"] = outputs_;
        write_atomic(fs::path(g_.out) / "manifest.json", m.dump(2) + "\n");
    }

private:
    const Globals& g_;
    std::string command_;
    std::string started_;
    json outputs_ = json::array();
};

template <class Writer>
std::string render(Writer&& w) {
    std::ostringstream os;
    w(os);
    return os.str();
}

json to_json_vector(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json_table(const Matrix& m) {
    json rows = json::array();
    for (Index r = 0; r < m.rows(); ++r) rows.push_back(to_json_vector(m.row(r).transpose()));
    return rows;
}

SolveOptions solve_options(const Globals& g) {
    SolveOptions o;
    o.tol = g.tol;
    return o;
}

// Random MDP from --states/--actions or a file from --mdp.
struct MdpSource {
    std::string path;
    Index states = 10;
    Index actions = 3;
    double r_max = 1.0;

    void add(CLI::App* sub, Index default_states, Index default_actions) {
        states = default_states;
        actions = default_actions;
        sub->add_option("--mdp", path, "MDP JSON file (otherwise a random MDP is drawn from --seed)")
            ->check(CLI::ExistingFile);
        sub->add_option("--states", states, "States of the random MDP")->capture_default_str();
        sub->add_option("--actions", actions, "Actions of the random MDP")->capture_default_str();
        sub->add_option("--r-max", r_max, "Reward bound of the random MDP")->capture_default_str();
    }

    TabularMdp load(std::uint64_t seed) const {
        if (!path.empty()) return load_mdp(path);
        return random_tabular_mdp(states, actions, r_max, seed);
    }

    json describe() const {
        if (!path.empty()) return {{"mdp", path}};
        return {{"states", states}, {"actions", actions}, {"r_max", r_max}};
    }
};

Policy pick_policy(const std::string& which, const TabularMdp& mdp, double gamma, const SolveOptions& opts) {
    if (which == "optimal") return value_iteration(mdp, gamma, opts).policy;
    if (which == "uniform") return Policy::uniform(mdp.n_states, mdp.n_actions);
    throw ValidationError("policy must be 'optimal' or 'uniform'");
}

struct SweepArgs {
    ExperimentKind kind;
    Index states = 100;
    Index actions = 10;
    std::size_t instances = 100;
    double gamma_e = 0.95;
    double gamma_min = 0.80;
    double gamma_step = 0.01;
    std::vector<double> mask_props{0.5};
    std::vector<double> noise_ratios{0.04, 0.06, 0.08, 0.12};
    std::vector<std::size_t> sizes{100, 1000, 10000};
    std::string extrapolation;
    double beta_c = 1.0;
    double xi = 0.1;
    double lambda_reg = 1.0;
    bool full = false;

    explicit SweepArgs(ExperimentKind k) : kind(k) {
        if (k == ExperimentKind::plain_coverage) mask_props = {0.5, 0.7, 0.9};
        if (k == ExperimentKind::pevi_datasize) {
            states = 25;
            actions = 4;
            mask_props = {0.0};
        }
    }

    void add(CLI::App* sub) {
        sub->add_option("--states", states, "States per instance")->capture_default_str();
        sub->add_option("--actions", actions, "Actions per instance")->capture_default_str();
        sub->add_option("--instances", instances, "Seeded instances")->capture_default_str();
        sub->add_option("--gamma-e", gamma_e, "Evaluation discount")->capture_default_str();
        sub->add_option("--gamma-min", gamma_min, "Smallest guidance discount on the grid")->capture_default_str();
        sub->add_option("--gamma-step", gamma_step, "Grid step up to gamma_e")->capture_default_str();
        sub->add_option("--mask-props", mask_props, "Masked proportions")->delimiter(',')->capture_default_str();
        if (kind == ExperimentKind::bcq_noise)
            sub->add_option("--noise-ratios", noise_ratios, "Support noise ratios")->delimiter(',')->capture_default_str();
        if (kind == ExperimentKind::pevi_datasize) {
            sub->add_option("--sizes", sizes, "Dataset sizes")->delimiter(',')->capture_default_str();
            sub->add_option("--beta-c", beta_c, "Constant in the theoretical beta")->capture_default_str();
            sub->add_option("--xi", xi, "Failure probability")->capture_default_str();
            sub->add_option("--lambda", lambda_reg, "Ridge regularizer")->capture_default_str();
        } else {
            sub->add_option("--extrapolation", extrapolation, "Unseen-pair handling: model | frozen")
                ->check(CLI::IsMember({"model", "frozen"}));
            sub->add_flag("--full", full, "Full 900-state protocol");
        }
    }

    SweepConfig config(const Globals& g) const {
        SweepConfig c;
        c.kind = kind;
        c.n_states = full ? 900 : states;
        c.n_actions = actions;
        c.n_instances = instances;
        c.gamma_e = gamma_e;
        c.gamma_grid = make_grid(gamma_min, gamma_e, gamma_step);
        c.masked_proportions = mask_props;
        c.noise_ratios = noise_ratios;
        c.dataset_sizes = sizes;
        c.base_seed = g.seed;
        c.solve.tol = g.tol;
        c.threads = g.threads;
        if (!extrapolation.empty()) c.extrapolation = parse_extrapolation(extrapolation);
        c.beta_c = beta_c;
        c.xi = xi;
        c.lambda_reg = lambda_reg;
        if (kind != ExperimentKind::bcq_noise) c.noise_ratios.clear();
        if (kind != ExperimentKind::pevi_datasize) c.dataset_sizes.clear();
        return c;
    }
};

void print_json(const json& j) { std::cout << j.dump() << std::endl; }

void error_line(const char* kind, const std::string& message) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

int run(int argc, char** argv) {
    CLI::App app{"Discount-factor regularization toolkit for tabular offline RL", "gammareg"};
    app.set_version_flag("--version", GAMMAREG_VERSION);
    app.require_subcommand(1);
    app.fallthrough();
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON config overriding flag defaults");

    Globals g;
    app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--tol", g.tol, "Solver tolerance")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 4096u));

    // gen-mdp
    auto* gen = app.add_subcommand("gen-mdp", "Draw a random MDP and write it as JSON");
    Index gen_states = 10, gen_actions = 3;
    double gen_rmax = 1.0;
    std::string gen_file = "mdp.json";
    gen->add_option("--states", gen_states)->capture_default_str();
    gen->add_option("--actions", gen_actions)->capture_default_str();
    gen->add_option("--r-max", gen_rmax)->capture_default_str();
    gen->add_option("--file", gen_file, "Output file name inside --out")->capture_default_str();
    gen->callback([&] {
        Run r(g, "gen-mdp");
        const auto mdp = random_tabular_mdp(gen_states, gen_actions, gen_rmax, g.seed);
        const auto path = r.emit(gen_file, mdp_to_json(mdp));
        r.manifest({{"states", gen_states}, {"actions", gen_actions}, {"r_max", gen_rmax}});
        print_json({{"mdp", path.string()}});
    });

    // solve
    auto* solve = app.add_subcommand("solve", "Value iteration report: V*, Q*, greedy policy");
    MdpSource solve_src;
    double solve_gamma = 0.9;
    std::string solve_file = "solve.json";
    solve_src.add(solve, 10, 3);
    solve->add_option("--gamma", solve_gamma)->capture_default_str();
    solve->add_option("--file", solve_file)->capture_default_str();
    solve->callback([&] {
        Run r(g, "solve");
        const auto mdp = solve_src.load(g.seed);
        const auto res = value_iteration(mdp, solve_gamma, solve_options(g));
        std::vector<Index> actions;
        for (Index s = 0; s < mdp.n_states; ++s) actions.push_back(res.policy.action(s));
        json report{{"gamma", solve_gamma},
                    {"iterations", res.residuals.size()},
                    {"v", to_json_vector(res.v.values)},
                    {"q", to_json_table(res.q.values)},
                    {"policy", actions},
                    {"expected_value", expected_value(mdp, res.v)}};
        r.emit(solve_file, report.dump(2) + "\n");
        json cfg = solve_src.describe();
        cfg["gamma"] = solve_gamma;
        r.manifest(cfg);
        print_json({{"v", report["v"]}, {"expected_value", report["expected_value"]}});
    });

    // dataset
    auto* ds = app.add_subcommand("dataset", "Sample transitions from a masked-softmax behavior policy");
    MdpSource ds_src;
    std::size_t ds_n = 1000;
    double ds_mask = 0.0, ds_gamma_e = 0.95;
    std::string ds_file = "dataset.csv";
    ds_src.add(ds, 10, 3);
    ds->add_option("--n", ds_n, "Transitions")->capture_default_str();
    ds->add_option("--mask-prop", ds_mask, "Masked proportion of the behavior support")->capture_default_str();
    ds->add_option("--gamma-e", ds_gamma_e, "Discount of the Q* driving the softmax")->capture_default_str();
    ds->add_option("--file", ds_file)->capture_default_str();
    ds->callback([&] {
        Run r(g, "dataset");
        const auto mdp = ds_src.load(substream(g.seed, 1));
        const auto star = value_iteration(mdp, ds_gamma_e, solve_options(g));
        const auto mask = random_mask(mdp.n_states, mdp.n_actions, ds_mask, substream(g.seed, 2));
        const auto data = sample_dataset(mdp, behavior_policy(star.q.values, mask), ds_n, substream(g.seed, 3));
        const auto path = r.emit(ds_file, render([&](std::ostream& os) { write_dataset_csv(os, data); }));
        json cfg = ds_src.describe();
        cfg.update({{"n", ds_n}, {"mask_prop", ds_mask}, {"gamma_e", ds_gamma_e}});
        r.manifest(cfg);
        print_json({{"dataset", path.string()}, {"transitions", data.size()}});
    });

    // sweeps
    SweepArgs bcq_args(ExperimentKind::bcq_noise), cov_args(ExperimentKind::plain_coverage),
        pevi_args(ExperimentKind::pevi_datasize);
    auto add_sweep = [&](const char* name, const char* help, SweepArgs& args) {
        auto* sub = app.add_subcommand(name, help);
        args.add(sub);
        sub->callback([&, name] {
            Run r(g, name);
            const SweepConfig cfg = args.config(g);
            const SweepResult res = run_sweep(cfg);
            r.emit("results.csv", render([&](std::ostream& os) { write_results_csv(os, res.records); }));
            r.emit("gamma_star.csv", render([&](std::ostream& os) { write_gamma_star_csv(os, res.gamma_stars); }));
            r.emit("instances.csv", render([&](std::ostream& os) { write_instances_csv(os, res); }));
            r.manifest(to_json(cfg));
            json stars = json::array();
            for (const auto& s : res.gamma_stars)
                stars.push_back({{"key", s.key}, {"gamma_star", s.gamma_star}, {"metric_at_star", s.metric_at_star}});
            print_json({{"experiment", to_string(cfg.kind)}, {"gamma_star", stars}});
        });
    };
    add_sweep("bcq-sweep", "Support-constrained learner vs. support noise", bcq_args);
    add_sweep("coverage-sweep", "Unconstrained learner vs. masked proportion", cov_args);
    add_sweep("pevi-sweep", "Pessimistic value iteration vs. dataset size", pevi_args);

    // check-lemma3
    auto* l3 = app.add_subcommand("check-lemma3", "Robust fixed point vs. shifted lower-discount optimum");
    MdpSource l3_src;
    double l3_gamma = 0.9, l3_eps = 0.1;
    l3_src.add(l3, 10, 3);
    l3->add_option("--gamma", l3_gamma)->capture_default_str();
    l3->add_option("--epsilon", l3_eps)->capture_default_str();
    l3->callback([&] {
        const auto mdp = l3_src.load(g.seed);
        const auto c = check_lemma3(mdp, l3_gamma, l3_eps, solve_options(g));
        print_json({{"delta", c.delta}, {"max_abs_gap", c.max_abs_gap}});
    });

    // verify-lemma1
    auto* l1 = app.add_subcommand("verify-lemma1", "Check the value sandwich between two discounts");
    MdpSource l1_src;
    double l1_gamma = 0.9, l1_gamma_e = 0.95;
    std::string l1_policy = "optimal";
    l1_src.add(l1, 10, 3);
    l1->add_option("--gamma", l1_gamma)->capture_default_str();
    l1->add_option("--gamma-e", l1_gamma_e)->capture_default_str();
    l1->add_option("--policy", l1_policy, "optimal (at gamma_e) | uniform")
        ->check(CLI::IsMember({"optimal", "uniform"}))
        ->capture_default_str();
    l1->callback([&] {
        const auto mdp = l1_src.load(g.seed);
        const auto pi = pick_policy(l1_policy, mdp, l1_gamma_e, solve_options(g));
        const auto c = verify_lemma1(mdp, pi, l1_gamma, l1_gamma_e, solve_options(g));
        print_json({{"lower_ok", c.lower_ok},
                    {"upper_ok", c.upper_ok},
                    {"slack", c.slack},
                    {"gap_bound", lemma1_gap(l1_gamma, l1_gamma_e, mdp.r_max)}});
    });

    // bounds
    auto* bd = app.add_subcommand("bounds", "Bound report over a guidance-discount grid");
    BoundInputs bi;
    double bd_gamma_min = 0.80, bd_gamma_step = 0.01;
    std::string bd_file = "bounds.csv";
    bd->add_option("--d", bi.d, "Feature dimension")->capture_default_str();
    bd->add_option("--n", bi.n, "Dataset size")->capture_default_str();
    bd->add_option("--coverage", bi.coverage, "Coverage coefficient")->capture_default_str();
    bd->add_option("--gamma-e", bi.gamma_e)->capture_default_str();
    bd->add_option("--xi", bi.xi)->capture_default_str();
    bd->add_option("--c", bi.c, "Absolute constant")->capture_default_str();
    bd->add_option("--r-max", bi.r_max)->capture_default_str();
    bd->add_option("--gamma-min", bd_gamma_min)->capture_default_str();
    bd->add_option("--gamma-step", bd_gamma_step)->capture_default_str();
    bd->add_option("--file", bd_file)->capture_default_str();
    bd->callback([&] {
        Run r(g, "bounds");
        const auto grid = make_grid(bd_gamma_min, bi.gamma_e, bd_gamma_step);
        const auto rows = bound_report(bi, grid);
        const auto best = optimal_guidance_gamma(bi, grid);
        r.emit(bd_file, render([&](std::ostream& os) { write_bound_report_csv(os, rows); }));
        r.manifest({{"d", bi.d},
                    {"n", bi.n},
                    {"coverage", bi.coverage},
                    {"gamma_e", bi.gamma_e},
                    {"xi", bi.xi},
                    {"c", bi.c},
                    {"r_max", bi.r_max},
                    {"grid", grid}});
        print_json({{"gamma_star", best.gamma_star}, {"bound", best.bound}});
    });

    // coverage
    auto* cv = app.add_subcommand("coverage", "Coverage coefficient of a dataset for a policy");
    std::string cv_mdp, cv_data, cv_policy = "optimal", cv_kind = "per-state";
    double cv_gamma = 0.9;
    cv->add_option("--mdp", cv_mdp, "MDP JSON file")->required()->check(CLI::ExistingFile);
    cv->add_option("--dataset", cv_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    cv->add_option("--gamma", cv_gamma)->capture_default_str();
    cv->add_option("--policy", cv_policy, "optimal | uniform")
        ->check(CLI::IsMember({"optimal", "uniform"}))
        ->capture_default_str();
    cv->add_option("--kind", cv_kind, "per-state (max over start states) | initial (from mu0)")
        ->check(CLI::IsMember({"per-state", "initial"}))
        ->capture_default_str();
    cv->callback([&] {
        const auto mdp = load_mdp(cv_mdp);
        const auto data = load_dataset(cv_data);
        const auto report = validate_dataset(data, mdp.n_states, mdp.n_actions, mdp.r_max);
        if (!report.empty()) throw ValidationError("dataset: " + report.front().message);
        detail::require(!data.empty(), "dataset is empty");
        const auto pi = pick_policy(cv_policy, mdp, cv_gamma, solve_options(g));
        const auto freq = pair_frequencies(data, mdp.n_states, mdp.n_actions);
        const auto features = FeatureMap::make_one_hot(mdp.n_states, mdp.n_actions);
        const double c = cv_kind == "initial" ? initial_coverage(mdp, pi, cv_gamma, freq, features)
                                              : per_state_coverage(mdp, pi, cv_gamma, freq, features);
        print_json({{"coverage", std::isinf(c) ? json("inf") : json(c)}, {"kind", cv_kind}});
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        error_line("usage", e.what());
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        error_line("validation", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        error_line("validation", e.what());
        return 2;
    } catch (const std::exception& e) {
        error_line("runtime", e.what());
        return 1;
    }
}
