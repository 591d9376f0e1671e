// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/metrics.hpp"
#include "memoe/rng.hpp"
#include "world.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace memoe {
namespace {

// The desk base memorizes every fact, so a record whose target is the base
// object is a known hit and a counterfactual target a known miss.
class DeskMetricsTest : public ::testing::Test {
protected:
    const testing::World& w = testing::desk_world();
    ModelState base = ModelState::base_only(*w.encoder);

    std::vector<EditRecord> with_hits(std::size_t n, std::initializer_list<std::size_t> hits) const {
        std::vector<EditRecord> out(w.records.begin(), w.records.begin() + static_cast<std::ptrdiff_t>(n));
        for (std::size_t i : hits) out[i].target_new = w.corpus.base_object(out[i]);
        return out;
    }
};

TEST_F(DeskMetricsTest, ReliabilityFixtures) {
    EXPECT_EQ(reliability(base, with_hits(4, {0, 1, 2, 3})), 1.0);
    EXPECT_EQ(reliability(base, with_hits(4, {})), 0.0);
    const auto three = with_hits(4, {0, 2, 3});
    EXPECT_EQ(reliability_hits(base, three), (std::vector<bool>{true, false, true, true}));
    EXPECT_EQ(reliability(base, three), 0.75);
    EXPECT_EQ(reliability(base, w.records), 0.0);
    EXPECT_THROW(reliability(base, std::vector<EditRecord>{}), std::invalid_argument);
}

TEST_F(DeskMetricsTest, GeneralityFixtures) {
    EXPECT_EQ(generality(base, with_hits(4, {})), 0.0);
    const auto two = with_hits(5, {1, 4});
    EXPECT_EQ(generality_hits(base, two), (std::vector<bool>{false, true, false, false, true}));
    EXPECT_DOUBLE_EQ(generality(base, two), 0.4);
    auto same = with_hits(6, {0, 3, 5});
    for (auto& r : same) r.rephrase_prompt = r.prompt;
    EXPECT_EQ(generality(base, same), reliability(base, same));
}

TEST_F(DeskMetricsTest, LocalityFixtures) {
    std::vector<EditRecord> five(w.records.begin(), w.records.begin() + 5);
    EXPECT_EQ(locality(base, five), 1.0);
    EXPECT_EQ(locality(base, base, five), 1.0);
    five[2].locality_ground_truth = {kUnkId};
    EXPECT_EQ(locality_hits(base, five), (std::vector<bool>{true, true, false, true, true}));
    EXPECT_DOUBLE_EQ(locality(base, five), 0.8);
}

TEST_F(DeskMetricsTest, LambdaZeroAdapterKeepsLocality) {
    MemoeConfig c;
    AdapterState a = init_adapter(c, w.base->config());
    Rng rng = substream(31, "experts");
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Tensor& e : a.experts)
        for (double& v : e.storage()) v = nd(rng);
    c.lambda = 0.0;
    const ModelState off = ModelState::with_adapter(*w.encoder, a, c);
    EXPECT_EQ(locality(off, w.records), 1.0);
    EXPECT_EQ(locality(base, off, w.records), 1.0);
    c.lambda = 1.0;
    const ModelState on = ModelState::with_adapter(*w.encoder, a, c);
    EXPECT_LT(locality(base, on, w.records), 1.0);
}

TEST_F(DeskMetricsTest, EvaluationLeavesStateUntouched) {
    const MemoeConfig c;
    AdapterState a = init_adapter(c, w.base->config());
    a.experts[1].storage()[7] = 0.5;
    const auto base_fp = w.base->fingerprint();
    const auto adapter_fp = a.fingerprint();
    const ModelState s = ModelState::with_adapter(*w.encoder, a, c);
    reliability(s, w.records);
    generality(s, w.records);
    locality(s, w.records);
    routing_traces(s, w.records);
    EXPECT_EQ(w.base->recompute_fingerprint(), base_fp);
    EXPECT_EQ(a.fingerprint(), adapter_fp);
}

TEST_F(DeskMetricsTest, RoutingTracesCoverEveryToken) {
    const MemoeConfig c;
    const AdapterState a = init_adapter(c, w.base->config());
    const ModelState s = ModelState::with_adapter(*w.encoder, a, c);
    const auto traces = routing_traces(s, w.records);
    ASSERT_EQ(traces.size(), 2 * w.records.size());
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& r = w.records[i / 2];
        const auto& prompt = i % 2 == 0 ? r.prompt : r.rephrase_prompt;
        EXPECT_EQ(traces[i].token_experts.size(), w.encoder->encode_prompt(prompt).size());
        for (std::size_t e : traces[i].token_experts) EXPECT_LT(e, c.num_experts);
        tokens += traces[i].token_experts.size();
    }
    const auto h = utilization_histogram(traces, c.num_experts);
    EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::size_t{0}), tokens);
}

TEST(AverageTest, TableArithmetic) {
    EXPECT_NEAR(average(100.0, 90.30, 100.0), 96.77, 0.005);
    EXPECT_NEAR(average(99.84, 80.91, 100.0), 93.58, 0.005);
    EXPECT_NEAR(average(74.69, 58.18, 98.93), 77.27, 0.005);
    for (double x : {0.0, 0.37, 1.0, 42.5, 100.0}) EXPECT_DOUBLE_EQ(average(x, x, x), x);
}

TEST(AverageTest, RejectsMixedScalesAndOutOfRange) {
    EXPECT_THROW(average(100.0, 0.5, 100.0), std::invalid_argument);
    EXPECT_THROW(average(-0.1, 0.5, 0.5), std::invalid_argument);
    EXPECT_THROW(average(101.0, 50.0, 50.0), std::invalid_argument);
    EXPECT_THROW(average(NAN, 0.5, 0.5), std::invalid_argument);
}

TEST(MajorityTest, ModeWithTiesToLowest) {
    EXPECT_EQ(majority_expert(std::vector<std::size_t>{2, 2, 1}), 2u);
    EXPECT_EQ(majority_expert(std::vector<std::size_t>{3, 1, 3, 1}), 1u);
    EXPECT_THROW(majority_expert(std::vector<std::size_t>{}), std::invalid_argument);
    EXPECT_EQ(RoutingTrace::make("r", "g", TraceRole::Train, {0, 3, 3}).majority, 3u);
    EXPECT_THROW(RoutingTrace::make("r", "g", TraceRole::Train, {}), std::invalid_argument);
}

RoutingTrace single(const std::string& id, const std::string& group, std::size_t expert,
                    TraceRole role = TraceRole::Train) {
    return RoutingTrace::make(id, group, role, {expert});
}

TEST(ConsistencyTest, ThreeGroupNineInputFixture) {
    const std::vector<RoutingTrace> traces{
        single("a1", "A", 0), single("a2", "A", 0), single("a3", "A", 0),
        single("b1", "B", 1), single("b2", "B", 1), single("b3", "B", 2),
        single("c1", "C", 2), single("c2", "C", 0), single("c3", "C", 1),
    };
    const auto d = consistency_detail(traces, Grouping::Similar);
    ASSERT_EQ(d.per_group.size(), 3u);
    EXPECT_EQ(d.per_group[0].second, 1.0);
    EXPECT_EQ(d.per_group[1].second, 2.0 / 3.0);
    EXPECT_EQ(d.per_group[2].second, 1.0 / 3.0);
    EXPECT_EQ(d.overall, (1.0 + 2.0 / 3.0 + 1.0 / 3.0) / 3.0);
    EXPECT_NEAR(d.overall, 2.0 / 3.0, 1e-15);
}

TEST(ConsistencyTest, GroupMeanIsUnweighted) {
    const std::vector<RoutingTrace> traces{
        single("a1", "A", 1), single("a2", "A", 1),
        single("b1", "B", 3), single("b2", "B", 3), single("b3", "B", 0), single("b4", "B", 0),
        single("b5", "B", 3), single("b6", "B", 0),
    };
    EXPECT_EQ(consistency(traces, Grouping::Similar), 0.75);
    const std::vector<RoutingTrace> perfect{single("a", "A", 1), single("b", "B", 2), single("c", "B", 2)};
    EXPECT_EQ(consistency(perfect, Grouping::Similar), 1.0);
}

TEST(ConsistencyTest, GeneralizationInputsScoredAgainstTrainingExperts) {
    const std::vector<RoutingTrace> traces{
        single("r1", "A", 0), single("r1", "A", 0, TraceRole::Generalization),
        single("r2", "A", 0), single("r2", "A", 1, TraceRole::Generalization),
        single("r3", "B", 2), single("r3", "B", 3, TraceRole::Generalization),
        single("r4", "B", 3), single("r4", "B", 3, TraceRole::Generalization),
    };
    // Similar: A's reference is 0, so 1/2; B's training votes tie at {2, 3} and resolve to 2, so 0/2.
    EXPECT_EQ(consistency(traces, Grouping::Similar), 0.25);
    // Same: r1 and r4 keep their training expert.
    const auto d = consistency_detail(traces, Grouping::Same);
    ASSERT_EQ(d.per_group.size(), 2u);
    EXPECT_EQ(d.per_group[0].second, 0.5);
    EXPECT_EQ(d.per_group[1].second, 0.5);
}

TEST(ConsistencyTest, GroupWithNothingToScoreIsSkipped) {
    const std::vector<RoutingTrace> traces{
        single("r1", "A", 0), single("r1", "A", 0, TraceRole::Generalization),
        single("r2", "B", 1),
    };
    const auto d = consistency_detail(traces, Grouping::Similar);
    EXPECT_EQ(d.per_group.size(), 1u);
    EXPECT_EQ(d.skipped_groups, std::vector<std::string>{"B"});
    EXPECT_EQ(d.overall, 1.0);
}

bool unique_mode(const std::vector<std::size_t>& v) {
    std::map<std::size_t, std::size_t> c;
    for (std::size_t x : v) ++c[x];
    std::size_t best = 0, ties = 0;
    for (const auto& [k, n] : c) {
        if (n > best) {
            best = n;
            ties = 1;
        } else if (n == best) {
            ++ties;
        }
    }
    return ties == 1;
}

// Relabeling invariance needs every mode to be unique: ties resolve to the
// lowest index, which a permutation moves. Each trace gets a strict
// majority, and draws with tied group votes are skipped.
TEST(ConsistencyTest, InvariantUnderExpertRelabeling) {
    Rng rng = substream(32, "relabel");
    std::uniform_int_distribution<std::size_t> expert(0, 3), len(1, 7);
    int checked = 0;
    for (int trial = 0; trial < 2000 && checked < 300; ++trial) {
        std::vector<RoutingTrace> traces;
        std::map<std::string, std::vector<std::size_t>> train_votes;
        bool ok = true;
        for (int g = 0; g < 3; ++g) {
            for (int r = 0; r < 3; ++r) {
                const std::string id = std::to_string(g) + "-" + std::to_string(r);
                for (TraceRole role : {TraceRole::Train, TraceRole::Generalization}) {
                    const std::size_t n = len(rng), planted = expert(rng);
                    std::vector<std::size_t> toks(n / 2 + 1, planted);
                    while (toks.size() < n) toks.push_back(expert(rng));
                    std::shuffle(toks.begin(), toks.end(), rng);
                    traces.push_back(RoutingTrace::make(id, "g" + std::to_string(g), role, toks));
                    if (role == TraceRole::Train) train_votes["g" + std::to_string(g)].push_back(traces.back().majority);
                }
            }
        }
        for (const auto& [g, v] : train_votes) ok &= unique_mode(v);
        if (!ok) continue;
        std::vector<std::size_t> perm{0, 1, 2, 3};
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<RoutingTrace> relabeled;
        for (const auto& t : traces) {
            std::vector<std::size_t> toks = t.token_experts;
            for (auto& e : toks) e = perm[e];
            relabeled.push_back(RoutingTrace::make(t.record_id, t.group_id, t.role, toks));
        }
        for (Grouping g : {Grouping::Similar, Grouping::Same})
            EXPECT_EQ(consistency(relabeled, g), consistency(traces, g));
        ++checked;
    }
    EXPECT_EQ(checked, 300);
}

TEST(UtilizationTest, Examples) {
    const std::vector<RoutingTrace> one{RoutingTrace::make("r", "g", TraceRole::Train, {2})};
    EXPECT_EQ(utilization_histogram(one, 4), (std::vector<std::size_t>{0, 0, 1, 0}));
    EXPECT_EQ(utilization_histogram({}, 4), (std::vector<std::size_t>(4, 0)));
    EXPECT_THROW(utilization_histogram(one, 2), std::invalid_argument);
}

// N = 4000 uniform picks over E = 4: each count has mean 1000 and standard
// deviation sqrt(4000 * 1/4 * 3/4) ~ 27.4.
TEST(UtilizationTest, UniformTracesStayWithinThreeSigma) {
    const double n = 4000, p = 0.25;
    const double sigma = std::sqrt(n * p * (1 - p));
    Rng rng = substream(33, "uniform-traces");
    std::uniform_int_distribution<std::size_t> expert(0, 3);
    std::vector<RoutingTrace> traces;
    for (int t = 0; t < 400; ++t) {
        std::vector<std::size_t> toks(10);
        for (auto& e : toks) e = expert(rng);
        traces.push_back(RoutingTrace::make("r" + std::to_string(t), "g", TraceRole::Train, toks));
    }
    const auto h = utilization_histogram(traces, 4);
    EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::size_t{0}), 4000u);
    for (std::size_t c : h) EXPECT_LE(std::abs(static_cast<double>(c) - n * p), 3 * sigma) << c;
}

TEST(MetricsReportTest, JsonAndCsv) {
    MetricsReport m;
    m.reliability = 1.0;
    m.generality = 0.5;
    m.locality = 0.75;
    m.average = average(1.0, 0.5, 0.75);
    m.consistency_similar = 0.25;
    m.consistency_same = 0.125;
    m.expert_histogram = {3, 0, 1, 2};
    EXPECT_NO_THROW(m.validate());
    const auto back = MetricsReport::from_json(m.to_json());
    EXPECT_EQ(back.to_json(), m.to_json());
    EXPECT_EQ(MetricsReport::csv_header(),
              "mode,seed,E,k,layer,lambda,routing,reliability,generality,locality,average,consistency_similar,"
              "consistency_same");
    MemoeConfig c;
    EXPECT_EQ(m.csv_row(RunInfo::from("batch", c)),
              "batch,42,4,1,0,1.000000,anchor,1.000000,0.500000,0.750000,0.750000,0.250000,0.125000");
    m.locality = 1.5;
    EXPECT_THROW(m.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace memoe
