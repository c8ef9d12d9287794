#pragma once

// File formats: MDP documents (JSON), transition datasets and result tables (CSV).
// Every double is written with 17 significant digits so files round-trip exactly.

#include "gammareg/analysis.hpp"
#include "gammareg/experiments.hpp"
#include "gammareg/generators.hpp"
#include "gammareg/mdp.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace gammareg {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// MDP documents

inline void write_mdp_json(std::ostream& os, const TabularMdp& mdp) {
    const Index S = mdp.n_states, A = mdp.n_actions;
    os << "{\n  \"n_states\": " << S << ",\n  \"n_actions\": " << A << ",\n  \"r_max\": " << format_double(mdp.r_max)
       << ",\n  \"reward\": [";
    for (Index s = 0; s < S; ++s) {
        os << (s ? ",\n    [" : "\n    [");
        for (Index a = 0; a < A; ++a) os << (a ? ", " : "") << format_double(mdp.reward(s, a));
        os << "]";
    }
    os << "\n  ],\n  \"transition\": [";
    for (Index s = 0; s < S; ++s) {
        os << (s ? ",\n    [" : "\n    [");
        for (Index a = 0; a < A; ++a) {
            os << (a ? ",\n      [" : "\n      [");
            for (Index t = 0; t < S; ++t) os << (t ? ", " : "") << format_double(mdp.p(s, a, t));
            os << "]";
        }
        os << "\n    ]";
    }
    os << "\n  ],\n  \"init_dist\": [";
    for (Index s = 0; s < S; ++s) os << (s ? ", " : "") << format_double(mdp.init_dist(s));
    os << "]\n}\n";
}

inline std::string mdp_to_json(const TabularMdp& mdp) {
    std::ostringstream os;
    write_mdp_json(os, mdp);
    return os.str();
}

/// Parses and validates an MDP document; throws ValidationError on schema or model violations.
inline TabularMdp mdp_from_json(const nlohmann::json& j) {
    try {
        const auto S = j.at("n_states").get<Index>();
        const auto A = j.at("n_actions").get<Index>();
        detail::require(S >= 1 && A >= 1, "n_states and n_actions must be >= 1");
        TabularMdp m = TabularMdp::zeros(S, A, j.at("r_max").get<double>());
        const auto& reward = j.at("reward");
        const auto& transition = j.at("transition");
        const auto& init = j.at("init_dist");
        detail::require(reward.size() == static_cast<std::size_t>(S) && transition.size() == static_cast<std::size_t>(S) &&
                            init.size() == static_cast<std::size_t>(S),
                        "reward, transition and init_dist must have n_states rows");
        for (Index s = 0; s < S; ++s) {
            const auto& rr = reward[static_cast<std::size_t>(s)];
            const auto& tr = transition[static_cast<std::size_t>(s)];
            detail::require(rr.size() == static_cast<std::size_t>(A) && tr.size() == static_cast<std::size_t>(A),
                            "reward and transition rows must have n_actions entries");
            for (Index a = 0; a < A; ++a) {
                m.reward(s, a) = rr[static_cast<std::size_t>(a)].get<double>();
                const auto& row = tr[static_cast<std::size_t>(a)];
                detail::require(row.size() == static_cast<std::size_t>(S), "transition rows must have n_states entries");
                for (Index t = 0; t < S; ++t) m.transition(m.pair(s, a), t) = row[static_cast<std::size_t>(t)].get<double>();
            }
            m.init_dist(s) = init[static_cast<std::size_t>(s)].get<double>();
        }
        require_valid(m);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed MDP document: ") + e.what());
    }
}

inline TabularMdp read_mdp_json(std::istream& is) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(std::string("MDP document is not valid JSON: ") + e.what());
    }
    return mdp_from_json(j);
}

inline TabularMdp load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read_mdp_json(in);
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <class T>
T parse_cell(const std::string& cell, std::size_t line_no) {
    std::istringstream ss(cell);
    T v{};
    ss >> v;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw ValidationError("bad CSV value '" + cell + "' on line " + std::to_string(line_no));
    return v;
}

template <>
inline double parse_cell<double>(const std::string& cell, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size())
        throw ValidationError("bad CSV value '" + cell + "' on line " + std::to_string(line_no));
    return v;
}

} // namespace detail

inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
    os << "s,a,r,s_next\n";
    for (const auto& t : data.transitions) os << t.s << ',' << t.a << ',' << format_double(t.r) << ',' << t.s_next << '\n';
}

inline Dataset read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ValidationError("dataset CSV is empty");
    detail::strip_cr(line);
    if (line != "s,a,r,s_next") throw ValidationError("dataset CSV header must be s,a,r,s_next");
    Dataset data;
    for (std::size_t no = 2; std::getline(is, line); ++no) {
        detail::strip_cr(line);
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 4) throw ValidationError("dataset CSV line " + std::to_string(no) + " needs 4 fields");
        data.transitions.push_back({detail::parse_cell<Index>(cells[0], no), detail::parse_cell<Index>(cells[1], no),
                                    detail::parse_cell<double>(cells[2], no),
                                    detail::parse_cell<Index>(cells[3], no)});
    }
    return data;
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    return read_dataset_csv(in);
}

inline void write_bound_report_csv(std::ostream& os, const std::vector<BoundRow>& rows) {
    os << "gamma,lemma2_term,lemma1_term,theorem1_total\n";
    for (const auto& r : rows)
        os << format_double(r.gamma) << ',' << format_double(r.lemma2_term) << ',' << format_double(r.lemma1_term)
           << ',' << format_double(r.theorem1_total) << '\n';
}

inline void write_results_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
    os << "experiment,n_states,n_actions,mask_prop,noise_ratio,N,gamma,metric,mean,std,n_instances\n";
    for (const auto& r : records)
        os << r.experiment << ',' << r.n_states << ',' << r.n_actions << ',' << format_double(r.mask_prop) << ','
           << format_double(r.noise_ratio) << ',' << r.n << ',' << format_double(r.gamma) << ',' << r.metric << ','
           << format_double(r.mean) << ',' << format_double(r.std) << ',' << r.n_instances << '\n';
}

inline void write_gamma_star_csv(std::ostream& os, const std::vector<GammaStar>& rows) {
    os << "experiment,key,gamma_star,metric_at_star\n";
    for (const auto& g : rows)
        os << g.experiment << ',' << g.key << ',' << format_double(g.gamma_star) << ','
           << format_double(g.metric_at_star) << '\n';
}

/// Per-instance metric values, one row per (group, instance, gamma).
inline void write_instances_csv(std::ostream& os, const SweepResult& result) {
    os << "experiment,key,instance,gamma,value\n";
    const std::string experiment = to_string(result.config.kind);
    for (const auto& g : result.groups)
        for (std::size_t i = 0; i < g.values.size(); ++i)
            for (std::size_t j = 0; j < g.values[i].size(); ++j)
                os << experiment << ',' << g.key << ',' << i << ',' << format_double(result.config.gamma_grid[j]) << ','
                   << format_double(g.values[i][j]) << '\n';
}

// ---------------------------------------------------------------------------
// Configs

inline nlohmann::json to_json(const SweepConfig& c) {
    nlohmann::json j;
    j["kind"] = to_string(c.kind);
    j["n_states"] = c.n_states;
    j["n_actions"] = c.n_actions;
    j["gamma_e"] = c.gamma_e;
    j["gamma_grid"] = c.gamma_grid;
    j["masked_proportions"] = c.masked_proportions;
    j["noise_ratios"] = c.noise_ratios;
    j["dataset_sizes"] = c.dataset_sizes;
    j["n_instances"] = c.n_instances;
    j["base_seed"] = c.base_seed;
    j["r_max"] = c.r_max;
    j["tol"] = c.solve.tol;
    j["extrapolation"] = to_string(c.resolved_extrapolation());
    if (c.kind == ExperimentKind::pevi_datasize) {
        j["beta_c"] = c.beta_c;
        j["xi"] = c.xi;
        j["lambda_reg"] = c.lambda_reg;
    }
    j["threads"] = c.threads;
    return j;
}

/// Flattens nested objects to dotted keys: {"a": {"b": 1}} -> {"a.b": 1}.
inline nlohmann::json flatten_config(const nlohmann::json& j) {
    nlohmann::json out = nlohmann::json::object();
    if (!j.is_object()) throw ValidationError("config document must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_object()) {
            const nlohmann::json inner = flatten_config(it.value());
            for (auto& [k, v] : inner.items()) out[it.key() + "." + k] = v;
        } else {
            out[it.key()] = it.value();
        }
    }
    return out;
}

} // namespace gammareg
