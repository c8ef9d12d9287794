#include "support.hpp"

#include <sstream>

using namespace gammareg;
using namespace gtest_support;

TEST(Format, SeventeenDigits) {
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(format_double(2.0), "2");
    EXPECT_EQ(std::strtod(format_double(1.0 / 3.0).c_str(), nullptr), 1.0 / 3.0);
}

TEST(MdpJson, BitExactRoundTrip) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto m = random_tabular_mdp(7, 3, 2.5, seed);
        std::istringstream in(mdp_to_json(m));
        const auto back = read_mdp_json(in);
        EXPECT_EQ(back.n_states, 7);
        EXPECT_EQ(back.n_actions, 3);
        EXPECT_EQ(back.r_max, 2.5);
        EXPECT_TRUE(back.transition == m.transition);
        EXPECT_TRUE(back.reward == m.reward);
        EXPECT_TRUE(back.init_dist == m.init_dist);
        EXPECT_EQ(mdp_to_json(back), mdp_to_json(m));
    }
}

TEST(MdpJson, RejectsInvalidModels) {
    auto m = single_state(0.5, 2);
    m.transition(1, 0) = 0.9;
    std::istringstream bad_row(mdp_to_json(m));
    EXPECT_THROW(read_mdp_json(bad_row), ValidationError);

    std::istringstream not_json("{ \"n_states\": ");
    EXPECT_THROW(read_mdp_json(not_json), ValidationError);

    std::istringstream missing(R"({"n_states": 1, "n_actions": 1})");
    EXPECT_THROW(read_mdp_json(missing), ValidationError);

    std::istringstream ragged(
        R"({"n_states": 1, "n_actions": 2, "r_max": 1, "reward": [[0.5]], "transition": [[[1],[1]]], "init_dist": [1]})");
    EXPECT_THROW(read_mdp_json(ragged), ValidationError);
}

TEST(DatasetCsv, RoundTrip) {
    const auto m = random_tabular_mdp(4, 2, 1.0, 1);
    const auto data = sample_dataset(m, Policy::uniform(4, 2), 300, 2);
    std::stringstream ss;
    write_dataset_csv(ss, data);
    EXPECT_EQ(ss.str().substr(0, 13), "s,a,r,s_next\n");
    const auto back = read_dataset_csv(ss);
    EXPECT_TRUE(back.transitions == data.transitions);
}

TEST(DatasetCsv, RejectsBadInput) {
    std::istringstream header("x,y\n0,0,1,0\n");
    EXPECT_THROW(read_dataset_csv(header), ValidationError);
    std::istringstream fields("s,a,r,s_next\n0,0,1\n");
    EXPECT_THROW(read_dataset_csv(fields), ValidationError);
    std::istringstream value("s,a,r,s_next\n0,zero,1,0\n");
    EXPECT_THROW(read_dataset_csv(value), ValidationError);
}

TEST(Csv, Headers) {
    std::ostringstream a, b, c;
    write_results_csv(a, {});
    write_gamma_star_csv(b, {});
    write_bound_report_csv(c, {});
    EXPECT_EQ(a.str(), "experiment,n_states,n_actions,mask_prop,noise_ratio,N,gamma,metric,mean,std,n_instances\n");
    EXPECT_EQ(b.str(), "experiment,key,gamma_star,metric_at_star\n");
    EXPECT_EQ(c.str(), "gamma,lemma2_term,lemma1_term,theorem1_total\n");
}

TEST(Csv, BoundRowsUseFullPrecision) {
    BoundInputs in;
    in.d = 3;
    in.n = 77;
    std::ostringstream os;
    write_bound_report_csv(os, bound_report(in, {0.9}));
    const auto row = bound_report(in, {0.9}).front();
    EXPECT_EQ(os.str(), "gamma,lemma2_term,lemma1_term,theorem1_total\n0.90000000000000002," +
                            format_double(row.lemma2_term) + "," + format_double(row.lemma1_term) + "," +
                            format_double(row.theorem1_total) + "\n");
}

TEST(Config, FlattenNested) {
    const auto flat = flatten_config(nlohmann::json::parse(R"({"seed": 3, "bcq-sweep": {"instances": 4, "x": {"y": 1}}})"));
    EXPECT_EQ(flat.at("seed"), 3);
    EXPECT_EQ(flat.at("bcq-sweep.instances"), 4);
    EXPECT_EQ(flat.at("bcq-sweep.x.y"), 1);
    EXPECT_THROW(flatten_config(nlohmann::json::array()), ValidationError);
}

TEST(Config, SweepToJson) {
    SweepConfig c;
    const auto j = to_json(c);
    EXPECT_EQ(j.at("kind"), "bcq_noise");
    EXPECT_EQ(j.at("extrapolation"), "frozen");
    EXPECT_EQ(j.at("gamma_grid").size(), 16u);
}
