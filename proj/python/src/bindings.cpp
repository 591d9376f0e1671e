// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"
#include "memoe/adapter.hpp"
#include "memoe/dataset.hpp"
#include "memoe/kmeans.hpp"
#include "memoe/metrics.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>
#include <stdexcept>
#include <tuple>

namespace py = pybind11;

namespace {

memoe::Grouping parse_grouping(const std::string& s) {
    if (s == "similar") return memoe::Grouping::Similar;
    if (s == "same") return memoe::Grouping::Same;
    throw std::invalid_argument("grouping must be 'similar' or 'same', got '" + s + "'");
}

memoe::TraceRole parse_role(const std::string& s) {
    if (s == "train") return memoe::TraceRole::Train;
    if (s == "generalization") return memoe::TraceRole::Generalization;
    throw std::invalid_argument("role must be 'train' or 'generalization', got '" + s + "'");
}

std::vector<memoe::GateDecision> one_hot(const std::vector<std::size_t>& experts, std::size_t num_experts) {
    std::vector<memoe::GateDecision> out;
    for (std::size_t e : experts) {
        if (e >= num_experts) throw std::invalid_argument("expert id out of range");
        memoe::GateDecision g;
        g.gate.assign(num_experts, 0.0);
        g.gate[e] = 1.0;
        g.probs = g.gate;
        g.selected = {e};
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mixture-of-experts bypass adapters for model editing";

    m.def("average", &memoe::average, "Mean of reliability, generality and locality (one scale: [0,1] or [0,100])",
          py::arg("reliability"), py::arg("generality"), py::arg("locality"));

    m.def(
        "gate_from_logits",
        [](const std::vector<double>& logits, std::size_t k) {
            const auto g = memoe::gate_from_logits(logits, k);
            return py::dict(py::arg("gate") = g.gate, py::arg("selected") = g.selected, py::arg("probs") = g.probs);
        },
        "Top-k of softmax(logits) without renormalization", py::arg("logits"), py::arg("k"));

    m.def(
        "load_balance_loss",
        [](const std::vector<std::size_t>& experts, std::size_t num_experts, double alpha) {
            const auto batch = one_hot(experts, num_experts);
            return memoe::load_balance_loss(batch, alpha, num_experts);
        },
        "Load-balance loss of a batch routed one-hot to the given experts", py::arg("experts"),
        py::arg("num_experts"), py::arg("alpha"));

    m.def(
        "consistency",
        [](const std::vector<std::tuple<std::string, std::string, std::string, std::vector<std::size_t>>>& traces,
           const std::string& grouping) {
            std::vector<memoe::RoutingTrace> ts;
            for (const auto& [id, group, role, experts] : traces) {
                ts.push_back(memoe::RoutingTrace::make(id, group, parse_role(role), experts));
            }
            const auto d = memoe::consistency_detail(ts, parse_grouping(grouping));
            return py::make_tuple(d.overall, d.per_group);
        },
        "Routing consistency of (record_id, group_id, role, token_experts) traces; returns (overall, per_group)",
        py::arg("traces"), py::arg("grouping") = "similar");

    m.def(
        "spherical_kmeans",
        [](const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed) {
            return memoe::spherical_kmeans(points, k, seed).labels;
        },
        "Cluster labels under cosine distance", py::arg("points"), py::arg("k"), py::arg("seed") = 42);

    m.def(
        "generate_corpus",
        [](std::size_t num_facts, std::uint64_t seed) {
            memoe::CorpusSpec spec;
            spec.num_facts = num_facts;
            spec.seed = seed;
            const py::object loads = py::module_::import("json").attr("loads");
            py::list out;
            for (const auto& r : memoe::generate(spec).records) out.append(loads(r.to_json().dump()));
            return out;
        },
        "Synthetic counterfactual edit records as dicts", py::arg("num_facts") = 50, py::arg("seed") = 42);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> argv{"memoe"};
            argv.insert(argv.end(), args.begin(), args.end());
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = memoe::cli::run(argv, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        "Runs one memoe subcommand in-process; returns (exit_code, stdout, stderr)", py::arg("args"));
}
