// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include "memoe/anchor.hpp"
#include "memoe/checkpoint.hpp"
#include "memoe/harness.hpp"
#include "memoe/transformer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace memoe::cli {

namespace fs = std::filesystem;

namespace {

// Flag names accepted under their adapter-config spelling.
const std::map<std::string, std::string>& key_aliases() {
    static const std::map<std::string, std::string> m = {
        {"num_experts", "experts"},         {"top_k", "topk"},           {"target_layer", "layer"},
        {"noise_scale", "noise"},           {"aux_weight", "aux-weight"}, {"steps_per_batch", "steps"},
        {"batch_size", "batch-size"},       {"total_edits", "total-edits"}, {"num_facts", "facts"},
    };
    return m;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
    std::vector<T> out;
    for (const auto& item : split_list(s)) {
        std::istringstream is(item);
        T v{};
        if (!(is >> v) || !is.eof()) throw std::invalid_argument(std::string(what) + ": bad list entry '" + item + "'");
        out.push_back(v);
    }
    return out;
}

void require_file(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw std::invalid_argument("missing " + p.string() + " (" + hint + ")");
}

std::vector<std::vector<TokenId>> read_pretrain(const fs::path& path, const Vocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read " + path.string());
    std::vector<std::vector<TokenId>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<TokenId> seq{kBosId};
        for (TokenId t : vocab.encode(line)) {
            if (t == kUnkId) throw std::invalid_argument("pretrain text has a word outside vocab.txt: " + line);
            seq.push_back(t);
        }
        seq.push_back(kEosId);
        out.push_back(std::move(seq));
    }
    if (out.empty()) throw std::invalid_argument(path.string() + " is empty");
    return out;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
}

// Loaded inputs shared by edit and ablate.
struct Workspace {
    std::shared_ptr<const ModelSnapshot> base;
    std::unique_ptr<EditEncoder> encoder;
    std::vector<EditRecord> records;
};

Workspace load_workspace(const fs::path& dir) {
    require_file(dir / "base.ckpt", "run train-base first");
    require_file(dir / "corpus.jsonl", "run gen-data first");
    require_file(dir / "vocab.txt", "run gen-data first");
    require_file(dir / "gazetteer.tsv", "run gen-data first");
    Workspace w;
    w.base = std::make_shared<const ModelSnapshot>(ModelSnapshot::load(dir / "base.ckpt"));
    Vocab vocab = Vocab::load(dir / "vocab.txt");
    const Vocab vocab_copy = vocab;
    w.encoder = std::make_unique<EditEncoder>(w.base, std::move(vocab), Gazetteer::load(dir / "gazetteer.tsv"));
    w.records = read_jsonl(dir / "corpus.jsonl");
    const auto fresh = attach_locality_ground_truth(w.records, *w.base, vocab_copy);
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        if (fresh[i].locality_ground_truth != w.records[i].locality_ground_truth) {
            throw std::invalid_argument("record " + w.records[i].record_id +
                                        ": stored locality ground truth does not match the base model's output "
                                        "(rerun train-base)");
        }
    }
    return w;
}

struct Common {
    std::string out;
    std::string name = "default";
    std::string config;
    std::uint64_t seed = 42;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out, "Output root (default $MEMOE_OUT or memoe-out)");
    sub->add_option("--name", c.name, "Experiment name; artifacts go to <out>/<name>/");
    sub->add_option("--config", c.config, "key=value file; command-line flags win");
    sub->add_option("--seed", c.seed, "Seed for every random stream");
}

fs::path experiment_dir(const Common& c) {
    if (c.name.empty() || c.name.find('/') != std::string::npos) {
        throw std::invalid_argument("experiment name must be a non-empty single path component");
    }
    return output_root(c.out) / c.name;
}

// Effective option values of a subcommand as a re-runnable config file.
std::string effective_config(const CLI::App* sub) {
    std::ostringstream os;
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config" || name == "out" || name == "name") continue;
        std::string value;
        if (opt->count() > 0) {
            value = opt->results().back();
        } else {
            value = opt->get_default_str();
        }
        if (value.empty()) continue;
        os << name << '=' << value << '\n';
    }
    return os.str();
}

// --- gen-data ----------------------------------------------------------------

struct GenDataArgs {
    Common common;
    std::size_t facts = 0;
    std::size_t relations = 5;
    std::size_t entities = 8;
    std::size_t rephrases = 2;
    std::string vocab_file;
};

int cmd_gen_data(const GenDataArgs& a, const CLI::App* sub, std::ostream& out) {
    CorpusSpec spec;
    spec.num_facts = a.facts;
    spec.num_relations = a.relations;
    spec.entities_per_relation = a.entities;
    spec.rephrases_per_fact = a.rephrases;
    spec.seed = a.common.seed;
    if (!a.vocab_file.empty()) {
        std::ifstream in(a.vocab_file);
        if (!in) throw std::invalid_argument("cannot read " + a.vocab_file);
        std::string w;
        while (in >> w) spec.vocab.push_back(w);
    }
    const Corpus corpus = generate(spec);
    const fs::path dir = experiment_dir(a.common);
    write_corpus(corpus, dir);
    write_text(dir / "gen-data.cfg", effective_config(sub));
    out << "wrote " << corpus.records.size() << " records, " << corpus.gazetteer.size() << " gazetteer entries, "
        << corpus.vocab.size() << " vocab words to " << dir.string() << "\n";
    return kExitOk;
}

// --- train-base ----------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::size_t steps = TrainBaseOptions{}.steps;
    double lr = TrainBaseOptions{}.lr;
    std::size_t batch_size = TrainBaseOptions{}.batch_size;
    std::size_t d_model = ModelConfig{}.d_model;
    std::size_t layers = ModelConfig{}.n_layers;
    std::size_t heads = ModelConfig{}.n_heads;
    std::size_t d_ff = ModelConfig{}.d_ff;
    std::size_t max_seq_len = ModelConfig{}.max_seq_len;
};

int cmd_train_base(const TrainArgs& a, const CLI::App* sub, std::ostream& out, std::ostream& err) {
    const fs::path dir = experiment_dir(a.common);
    require_file(dir / "vocab.txt", "run gen-data first");
    require_file(dir / "pretrain.txt", "run gen-data first");
    require_file(dir / "corpus.jsonl", "run gen-data first");
    const Vocab vocab = Vocab::load(dir / "vocab.txt");
    const auto corpus = read_pretrain(dir / "pretrain.txt", vocab);
    auto records = read_jsonl(dir / "corpus.jsonl");

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.d_model = a.d_model;
    mc.n_layers = a.layers;
    mc.n_heads = a.heads;
    mc.d_ff = a.d_ff;
    mc.max_seq_len = a.max_seq_len;
    mc.seed = a.common.seed;
    mc.validate();

    TrainBaseOptions opt;
    opt.steps = a.steps;
    opt.lr = a.lr;
    opt.batch_size = a.batch_size;
    opt.on_step = [&err](std::size_t step, double loss) {
        if (step % 50 == 0) err << "step " << step << " loss " << loss << "\n";
    };
    const TrainBaseResult res = train_base(corpus, mc, opt);
    res.snapshot.save(dir / "base.ckpt");

    constexpr std::size_t kWindow = 50;
    std::vector<double> windows;
    for (std::size_t b = 0; b < res.losses.size(); b += kWindow) {
        const std::size_t e = std::min(res.losses.size(), b + kWindow);
        double s = 0.0;
        for (std::size_t i = b; i < e; ++i) s += res.losses[i];
        windows.push_back(s / static_cast<double>(e - b));
    }
    bool monotone = true;
    for (std::size_t i = 1; i < windows.size(); ++i) monotone = monotone && windows[i] <= windows[i - 1];
    const nlohmann::json log = {{"model", mc.to_json()},
                                {"steps", a.steps},
                                {"lr", a.lr},
                                {"batch_size", a.batch_size},
                                {"losses", res.losses},
                                {"window", kWindow},
                                {"window_means", windows},
                                {"window_means_non_increasing", monotone},
                                {"final_corpus_loss", corpus_loss(corpus, res.snapshot)},
                                {"fingerprint", hex64(res.snapshot.fingerprint())}};
    write_text(dir / "train_log.json", log.dump(1) + "\n");

    records = attach_locality_ground_truth(std::move(records), res.snapshot, vocab);
    write_jsonl(records, dir / "corpus.jsonl");
    write_text(dir / "train-base.cfg", effective_config(sub));
    out << "trained " << a.steps << " steps; corpus loss " << log["final_corpus_loss"].get<double>()
        << "; checkpoint " << (dir / "base.ckpt").string() << "\n";
    return kExitOk;
}

// --- edit / ablate -----------------------------------------------------------

struct EditArgs {
    Common common;
    std::string mode = "batch";
    std::size_t batch_size = 0;  // 0: mode default
    std::size_t total_edits = 0;
    std::size_t steps = ProtocolConfig{}.steps_per_batch;
    std::string routing = to_string(MemoeConfig{}.routing);
    std::size_t experts = MemoeConfig{}.num_experts;
    std::size_t topk = MemoeConfig{}.top_k;
    std::size_t layer = MemoeConfig{}.target_layer;
    double lambda = MemoeConfig{}.lambda;
    double lr = MemoeConfig{}.lr;
    double noise = MemoeConfig{}.noise_scale;
    double aux_weight = MemoeConfig{}.aux_weight;
};

ProtocolConfig protocol_from(const std::string& mode, std::size_t batch_size, std::size_t total_edits,
                             std::size_t steps) {
    ProtocolConfig p = ProtocolConfig::defaults_for(parse_mode(mode));
    if (batch_size) p.batch_size = batch_size;
    p.total_edits = total_edits;
    p.steps_per_batch = steps;
    p.validate();
    return p;
}

MemoeConfig memoe_from(const EditArgs& a) {
    MemoeConfig c;
    c.num_experts = a.experts;
    c.top_k = a.topk;
    c.target_layer = a.layer;
    c.lambda = a.lambda;
    c.noise_scale = a.noise;
    c.aux_weight = a.aux_weight;
    c.routing = parse_routing(a.routing);
    c.lr = a.lr;
    c.seed = a.common.seed;
    c.validate();
    return c;
}

int cmd_edit(const EditArgs& a, const CLI::App* sub, std::ostream& out, std::ostream& err) {
    const ProtocolConfig protocol = protocol_from(a.mode, a.batch_size, a.total_edits, a.steps);
    const MemoeConfig config = memoe_from(a);
    const fs::path dir = experiment_dir(a.common);
    const Workspace w = load_workspace(dir);
    config.validate_for(w.base->config());

    const ProtocolResult res = run_protocol(w.records, *w.encoder, config, protocol);
    for (const auto& note : res.notes) err << "note: " << note << "\n";

    const std::string tag = to_string(protocol.mode) + "-" + std::to_string(config.seed);
    write_text(dir / run_manifest_name(protocol, config), run_manifest(res, config, protocol).dump(1) + "\n");
    res.final_adapter.save(dir / ("adapter-" + tag + ".ckpt"), config);
    config.save(dir / ("memoe-" + tag + ".cfg"));
    const RunInfo info = RunInfo::from(to_string(protocol.mode), config);
    nlohmann::json mj = res.report.to_json();
    mj["run"] = {{"mode", info.mode}, {"seed", info.seed}, {"E", info.num_experts}, {"k", info.top_k},
                 {"layer", info.layer}, {"lambda", info.lambda}, {"routing", info.routing}};
    write_text(dir / ("metrics-" + tag + ".json"), mj.dump(1) + "\n");
    write_text(dir / ("metrics-" + tag + ".csv"), MetricsReport::csv_header() + "\n" + res.report.csv_row(info) + "\n");
    write_text(dir / ("edit-" + tag + ".cfg"), effective_config(sub));

    out << MetricsReport::csv_header() << "\n" << res.report.csv_row(info) << "\n";
    return kExitOk;
}

struct AblateArgs {
    EditArgs edit;
    std::string experts_grid = "4";
    std::string layers_grid = "0";
    std::string topk_grid = "1";
    std::string routing_grid = "anchor";
    std::string lambda_grid = "1";
};

// The seven leading CSV columns identify a grid point.
std::string row_key(const std::string& row) {
    std::size_t pos = 0;
    for (int i = 0; i < 7; ++i) {
        pos = row.find(',', pos);
        if (pos == std::string::npos) return row;
        ++pos;
    }
    return row.substr(0, pos - 1);
}

int cmd_ablate(const AblateArgs& a, const CLI::App* sub, std::ostream& out, std::ostream& err) {
    const auto experts = parse_list<std::size_t>(a.experts_grid, "--experts");
    const auto layers = parse_list<std::size_t>(a.layers_grid, "--layers");
    const auto topks = parse_list<std::size_t>(a.topk_grid, "--topk");
    const auto lambdas = parse_list<double>(a.lambda_grid, "--lambda");
    std::vector<RoutingStrategy> routings;
    for (const auto& r : split_list(a.routing_grid)) routings.push_back(parse_routing(r));
    if (experts.empty() || layers.empty() || topks.empty() || routings.empty() || lambdas.empty()) {
        throw std::invalid_argument("ablate: empty grid");
    }
    const ProtocolConfig protocol = protocol_from(a.edit.mode, a.edit.batch_size, a.edit.total_edits, a.edit.steps);
    const fs::path dir = experiment_dir(a.edit.common);
    const Workspace w = load_workspace(dir);

    std::vector<MemoeConfig> grid;
    for (RoutingStrategy r : routings) {
        for (std::size_t layer : layers) {
            for (std::size_t e : experts) {
                for (std::size_t k : topks) {
                    for (double lambda : lambdas) {
                        EditArgs ea = a.edit;
                        ea.experts = e;
                        ea.topk = k;
                        ea.layer = layer;
                        ea.lambda = lambda;
                        ea.routing = to_string(r);
                        MemoeConfig c = memoe_from(ea);
                        c.validate_for(w.base->config());
                        grid.push_back(c);
                    }
                }
            }
        }
    }

    const fs::path csv = dir / "ablation.csv";
    std::set<std::string> done;
    if (fs::exists(csv)) {
        std::ifstream in(csv);
        std::string line;
        std::getline(in, line);
        if (trim(line) != MetricsReport::csv_header()) {
            throw std::invalid_argument(csv.string() + " has an unexpected header");
        }
        while (std::getline(in, line)) {
            if (!trim(line).empty()) done.insert(row_key(trim(line)));
        }
    } else {
        write_text(csv, MetricsReport::csv_header() + "\n");
    }

    const std::string mode = to_string(protocol.mode);
    std::size_t ran = 0;
    for (const MemoeConfig& c : grid) {
        const RunInfo info = RunInfo::from(mode, c);
        const std::string key = row_key(MetricsReport{}.csv_row(info));
        if (done.count(key)) {
            err << "skip " << key << " (already in " << csv.filename().string() << ")\n";
            continue;
        }
        err << "run " << key << "\n";
        const ProtocolResult res = run_protocol(w.records, *w.encoder, c, protocol);
        std::ofstream app(csv, std::ios::binary | std::ios::app);
        app << res.report.csv_row(info) << "\n";
        app.flush();
        done.insert(key);
        ++ran;
    }
    write_text(dir / "ablate.cfg", effective_config(sub));
    out << "grid points: " << grid.size() << ", newly run: " << ran << ", csv: " << csv.string() << "\n";
    return kExitOk;
}

// --- report -------------------------------------------------------------------

struct ReportRow {
    std::string name;
    std::string mode, routing;
    std::string E, k, layer, lambda;
    MetricsReport m;
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(trim(f));
    return out;
}

int cmd_report(const Common& c, std::ostream& out) {
    const fs::path dir = experiment_dir(c);
    std::vector<ReportRow> rows;
    std::vector<ReportRow> ablation;
    if (fs::exists(dir)) {
        std::vector<fs::path> manifests;
        for (const auto& e : fs::directory_iterator(dir)) {
            const std::string fn = e.path().filename().string();
            if (fn.rfind("run-", 0) == 0 && e.path().extension() == ".json") manifests.push_back(e.path());
        }
        std::sort(manifests.begin(), manifests.end());
        for (const auto& p : manifests) {
            std::ifstream in(p);
            const nlohmann::json j = nlohmann::json::parse(in);
            const MemoeConfig mc = MemoeConfig::from_json(j.at("memoe"));
            ReportRow r;
            r.name = p.filename().string();
            r.mode = j.at("mode").get<std::string>();
            r.routing = to_string(mc.routing);
            r.E = std::to_string(mc.num_experts);
            r.k = std::to_string(mc.top_k);
            r.layer = std::to_string(mc.target_layer);
            std::ostringstream lam;
            lam << mc.lambda;
            r.lambda = lam.str();
            r.m = MetricsReport::from_json(j.at("metrics"));
            rows.push_back(r);
        }
        const fs::path csv = dir / "ablation.csv";
        if (fs::exists(csv)) {
            std::ifstream in(csv);
            std::string line;
            std::getline(in, line);
            std::size_t n = 0;
            while (std::getline(in, line)) {
                const auto f = split_csv(line);
                if (f.size() != 13) continue;
                ReportRow r;
                r.name = "ablation:" + std::to_string(++n);
                r.mode = f[0];
                r.E = f[2];
                r.k = f[3];
                r.layer = f[4];
                r.lambda = f[5];
                r.routing = f[6];
                r.m.reliability = std::stod(f[7]);
                r.m.generality = std::stod(f[8]);
                r.m.locality = std::stod(f[9]);
                r.m.average = std::stod(f[10]);
                r.m.consistency_similar = std::stod(f[11]);
                r.m.consistency_same = std::stod(f[12]);
                ablation.push_back(r);
                rows.push_back(r);
            }
        }
    }
    if (rows.empty()) throw std::invalid_argument("report: no run manifests or ablation rows under " + dir.string());

    std::stable_sort(rows.begin(), rows.end(),
                     [](const ReportRow& a, const ReportRow& b) { return a.m.average > b.m.average; });
    std::ostringstream table;
    table << std::left << std::setw(30) << "run" << std::setw(18) << "mode" << std::setw(10) << "routing"
          << std::setw(4) << "E" << std::setw(4) << "k" << std::setw(6) << "layer" << std::right << std::setw(12)
          << "reliability" << std::setw(12) << "generality" << std::setw(10) << "locality" << std::setw(10)
          << "average" << std::setw(13) << "cons_similar" << std::setw(11) << "cons_same" << "\n";
    std::ostringstream csv;
    csv << "run,mode,routing,E,k,layer,lambda,reliability,generality,locality,average,consistency_similar,"
           "consistency_same\n";
    for (const auto& r : rows) {
        table << std::left << std::setw(30) << r.name << std::setw(18) << r.mode << std::setw(10) << r.routing
              << std::setw(4) << r.E << std::setw(4) << r.k << std::setw(6) << r.layer << std::right << std::fixed
              << std::setprecision(2) << std::setw(12) << 100 * r.m.reliability << std::setw(12)
              << 100 * r.m.generality << std::setw(10) << 100 * r.m.locality << std::setw(10) << 100 * r.m.average
              << std::setw(13) << 100 * r.m.consistency_similar << std::setw(11) << 100 * r.m.consistency_same
              << "\n";
        csv << r.name << ',' << r.mode << ',' << r.routing << ',' << r.E << ',' << r.k << ',' << r.layer << ','
            << r.lambda << ',' << r.m.reliability << ',' << r.m.generality << ',' << r.m.locality << ','
            << r.m.average << ',' << r.m.consistency_similar << ',' << r.m.consistency_same << '\n';
    }
    out << table.str();
    write_text(dir / "report.csv", csv.str());

    // One plot-ready series per axis the ablation actually varied.
    using Getter = std::string ReportRow::*;
    const std::vector<std::pair<std::string, Getter>> axes = {
        {"layer", &ReportRow::layer}, {"experts", &ReportRow::E},         {"topk", &ReportRow::k},
        {"routing", &ReportRow::routing}, {"lambda", &ReportRow::lambda},
    };
    for (const auto& [axis, field] : axes) {
        std::vector<std::string> order;
        std::map<std::string, std::vector<const ReportRow*>> by;
        for (const auto& r : ablation) {
            auto& v = by[r.*field];
            if (v.empty()) order.push_back(r.*field);
            v.push_back(&r);
        }
        if (order.size() < 2) continue;
        std::ostringstream s;
        s << axis << ",n,reliability,generality,locality,average\n";
        for (const auto& x : order) {
            const auto& v = by[x];
            double rel = 0, gen = 0, loc = 0, avg = 0;
            for (const ReportRow* r : v) {
                rel += r->m.reliability;
                gen += r->m.generality;
                loc += r->m.locality;
                avg += r->m.average;
            }
            const double n = static_cast<double>(v.size());
            s << x << ',' << v.size() << ',' << rel / n << ',' << gen / n << ',' << loc / n << ',' << avg / n << '\n';
        }
        write_text(dir / ("series-" + axis + ".csv"), s.str());
        out << "series: " << (dir / ("series-" + axis + ".csv")).string() << "\n";
    }
    return kExitOk;
}

void add_edit_options(CLI::App* sub, EditArgs& a, bool grid) {
    add_common(sub, a.common);
    sub->add_option("--mode", a.mode, "batch | sequential-batch | single | sequential");
    sub->add_option("--batch-size", a.batch_size, "Records per batch (0: mode default)");
    sub->add_option("--total-edits", a.total_edits, "Records to edit (0: all)");
    sub->add_option("--steps", a.steps, "Adapter training steps per batch");
    sub->add_option("--lr", a.lr, "Adapter learning rate");
    sub->add_option("--noise", a.noise, "Train-time router logit noise scale");
    sub->add_option("--aux-weight", a.aux_weight, "Load-balance loss weight");
    if (!grid) {
        sub->add_option("--routing", a.routing, "token | sentence | anchor");
        sub->add_option("--experts", a.experts, "Number of experts");
        sub->add_option("--topk", a.topk, "Experts kept per token");
        sub->add_option("--layer", a.layer, "Layer whose FFN input projection gets the adapter");
        sub->add_option("--lambda", a.lambda, "Weight of the expert path");
    }
}

}  // namespace

fs::path output_root(const std::string& out_flag) {
    if (!out_flag.empty()) return out_flag;
    if (const char* env = std::getenv("MEMOE_OUT"); env && *env) return env;
    return "memoe-out";
}

std::vector<std::string> config_file_args(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config file " + path.string());
    std::vector<std::string> args;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (auto it = key_aliases().find(key); it != key_aliases().end()) key = it->second;
        std::replace(key.begin(), key.end(), '_', '-');
        args.push_back("--" + key + "=" + value);
    }
    return args;
}

int run(const std::vector<std::string>& argv_in, std::ostream& out, std::ostream& err) {
    CLI::App app{"memoe: mixture-of-experts bypass adapters for model editing"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic fact corpus");
    add_common(gen_cmd, gen.common);
    gen_cmd->add_option("--facts", gen.facts, "Number of edit records")->required();
    gen_cmd->add_option("--relations", gen.relations, "Relation families (groups)");
    gen_cmd->add_option("--entities", gen.entities, "Objects per relation");
    gen_cmd->add_option("--rephrases", gen.rephrases, "Extra phrasings per fact");
    gen_cmd->add_option("--vocab-file", gen.vocab_file, "Whitespace-separated entity names to draw from");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train-base", "Train the frozen base model");
    add_common(train_cmd, train.common);
    train_cmd->add_option("--steps", train.steps, "Optimizer steps");
    train_cmd->add_option("--lr", train.lr, "Adam learning rate");
    train_cmd->add_option("--batch-size", train.batch_size, "Sequences per step (0: full corpus)");
    train_cmd->add_option("--d-model", train.d_model, "Model width");
    train_cmd->add_option("--layers", train.layers, "Transformer blocks");
    train_cmd->add_option("--heads", train.heads, "Attention heads");
    train_cmd->add_option("--d-ff", train.d_ff, "FFN hidden width");
    train_cmd->add_option("--max-seq-len", train.max_seq_len, "Longest sequence");

    EditArgs edit;
    auto* edit_cmd = app.add_subcommand("edit", "Run an editing protocol and evaluate it");
    add_edit_options(edit_cmd, edit, false);

    AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "Grid of edit runs written to ablation.csv");
    add_edit_options(ablate_cmd, ablate.edit, true);
    ablate_cmd->add_option("--experts", ablate.experts_grid, "Comma-separated expert counts");
    ablate_cmd->add_option("--layers", ablate.layers_grid, "Comma-separated target layers");
    ablate_cmd->add_option("--topk", ablate.topk_grid, "Comma-separated top-k values");
    ablate_cmd->add_option("--routing", ablate.routing_grid, "Comma-separated routing strategies");
    ablate_cmd->add_option("--lambda", ablate.lambda_grid, "Comma-separated expert-path weights");

    Common report;
    auto* report_cmd = app.add_subcommand("report", "Summarize runs and write plot series");
    add_common(report_cmd, report);

    try {
        // Config-file values go in front of the command-line flags so the
        // flags take precedence.
        std::vector<std::string> args = argv_in;
        for (std::size_t i = 2; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size()) {
                path = args[i + 1];
            } else if (args[i].rfind("--config=", 0) == 0) {
                path = args[i].substr(9);
            } else {
                continue;
            }
            const auto extra = config_file_args(path);
            args.insert(args.begin() + 2, extra.begin(), extra.end());
            break;
        }
        std::vector<const char*> cargv;
        for (const auto& s : args) cargv.push_back(s.c_str());
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        for (auto* sub : app.get_subcommands()) err << sub->help();
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen, gen_cmd, out);
        if (*train_cmd) return cmd_train_base(train, train_cmd, out, err);
        if (*edit_cmd) return cmd_edit(edit, edit_cmd, out, err);
        if (*ablate_cmd) return cmd_ablate(ablate, ablate_cmd, out, err);
        if (*report_cmd) return cmd_report(report, out);
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed input: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    err << "error: no subcommand\n";
    return kExitUsage;
}

}  // namespace memoe::cli
