// spmem: build, query, benchmark and ablate spatial memory stores.
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "spmem/bench.hpp"
#include "spmem/cycle_training.hpp"
#include "spmem/memory_store.hpp"
#include "spmem/persistence.hpp"
#include "spmem/sim.hpp"
#include "spmem/trajectory.hpp"

namespace {

using namespace spmem;
using nlohmann::json;

constexpr int kUsage = 1;
constexpr int kData = 2;

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw Error(ErrorCode::ParseError, what + ": bad number '" + tok + "'");
        }
    }
    return out;
}

EngineConfig config_or_default(const std::string& path) {
    return path.empty() ? EngineConfig{} : load_config_file(path);
}

void write_text_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    body(out);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

json result_json(const RetrievalResult& r) {
    json j;
    j["source"] = std::string(source_name(r.source));
    if (r.best_stm_similarity) j["best_stm_similarity"] = *r.best_stm_similarity;
    j["items"] = json::array();
    for (const auto& it : r.items) {
        json item;
        item["similarity"] = it.similarity;
        item["position"] = {it.position.x, it.position.y, it.position.z};
        if (!it.object_id.empty()) item["object_id"] = it.object_id;
        if (it.token) {
            item["token"] = {{"source", it.token->source == TokenSource::Leaf ? "leaf" : "node"}, {"key", it.token->key}};
        }
        item["embedding"] = it.embedding;
        item["descriptor"] = it.descriptor;
        j["items"].push_back(std::move(item));
    }
    j["aggregate"] = r.aggregate;
    return j;
}

void print_result(std::ostream& out, const RetrievalResult& r) {
    out << "source " << source_name(r.source);
    if (r.best_stm_similarity) out << "  best_stm_similarity " << *r.best_stm_similarity;
    out << "  items " << r.items.size() << '\n';
    for (std::size_t i = 0; i < r.items.size(); ++i) {
        const auto& it = r.items[i];
        out << "  [" << i << "] similarity " << it.similarity << "  position (" << it.position.x << ", "
            << it.position.y << ", " << it.position.z << ")";
        if (!it.object_id.empty()) out << "  object " << it.object_id;
        if (it.token) out << "  token " << (it.token->source == TokenSource::Leaf ? "leaf:" : "node:") << it.token->key;
        out << '\n';
    }
    out << "  aggregate norm " << l2_norm(r.aggregate) << '\n';
}

// ---- subcommands ----

struct IngestArgs {
    std::string traj, out, config;
};

int run_ingest(const IngestArgs& a) {
    EngineConfig cfg = config_or_default(a.config);
    const auto records = read_trajectory_file(a.traj);
    if (a.config.empty() && !records.empty()) cfg.d = records.front().embedding.size();
    MemoryStore store(cfg);
    for (const auto& r : records) {
        require_dim("trajectory embedding", r.embedding, cfg.d);
        store.write(r.embedding, r.position, r.object_id);
    }
    const std::size_t bytes = save_store(store, a.out);
    const auto s = store.stats();
    std::cout << "writes " << s.steps << "  leaves " << s.leaves << "  nodes " << s.nodes << "  stm " << s.stm_entries
              << "  bytes " << bytes << '\n';
    return 0;
}

struct QueryArgs {
    std::string store, traj, embedding, position;
    bool json = false;
};

int run_query(const QueryArgs& a) {
    MemoryStore store = load_store(a.store, 0);
    std::vector<std::pair<Embedding, Position>> queries;
    if (!a.traj.empty()) {
        for (auto& r : read_trajectory_file(a.traj, store.config().d)) queries.emplace_back(std::move(r.embedding), r.position);
    }
    if (!a.embedding.empty()) {
        const auto p = parse_list(a.position.empty() ? "0,0,0" : a.position, "--position");
        if (p.size() != 3) throw DimError("--position", 3, p.size());
        queries.emplace_back(parse_list(a.embedding, "--embedding"), Position{p[0], p[1], p[2]});
    }
    if (queries.empty()) throw Error(ErrorCode::EmptyInput, "no queries: pass --traj or --embedding");
    json all = json::array();
    for (const auto& [v, p] : queries) {
        const RetrievalResult r = store.retrieve(v, p);
        if (a.json) {
            all.push_back(result_json(r));
        } else {
            print_result(std::cout, r);
        }
    }
    if (a.json) std::cout << all.dump(2) << '\n';
    return 0;
}

struct BenchArgs {
    BenchOptions opt;
    std::string csv;
};

int run_bench(BenchArgs a) {
    const auto rows = bench_retrieval(a.opt, &std::cerr);
    write_bench_table(std::cout, rows);
    if (!a.csv.empty()) write_text_file(a.csv, [&](std::ostream& o) { write_bench_csv(o, rows); });
    return 0;
}

struct AblateArgs {
    AblationOptions opt;
    std::string csv;
};

int run_ablate(const AblateArgs& a) {
    const auto rows = run_ablation(a.opt, all_variants());
    write_ablation_table(std::cout, rows);
    if (!a.csv.empty()) write_text_file(a.csv, [&](std::ostream& o) { write_ablation_csv(o, rows); });
    return 0;
}

struct VerifyArgs {
    std::string store;
    std::size_t queries = 1000;
    std::size_t k = 0;
    double min_recall = 0.0;
    std::uint64_t seed = 1;
};

int run_verify(const VerifyArgs& a) {
    MemoryStore store = load_store(a.store, 0);
    std::vector<const TokenChain*> tokens;
    for (MortonKey key : store.octree().creation_order()) tokens.push_back(&store.octree().find(key)->token);
    for (const auto& n : store.graph().nodes()) tokens.push_back(&n.token);
    if (tokens.empty()) throw Error(ErrorCode::EmptyStore, "store has no tokens");
    Rng rng(mix_seed(a.seed, 0x56455249ULL));
    std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<Embedding> queries;
    for (std::size_t i = 0; i < a.queries; ++i) {
        const auto half = tokens[pick(rng)]->write_half();
        Embedding v(half.begin(), half.end());
        for (auto& x : v) x += noise(rng);
        queries.push_back(store.project_query(v, Position{}));
    }
    const std::size_t k = a.k ? a.k : store.config().m_ltm;
    const double recall = store.index_recall(queries, k);
    std::cout << "tokens " << store.index().size() << "  queries " << queries.size() << "  recall@" << k << ' '
              << recall << '\n';
    if (recall < a.min_recall) {
        std::cerr << "recall " << recall << " below required " << a.min_recall << '\n';
        return kData;
    }
    return 0;
}

struct TrainArgs {
    std::string store, config, out;
    std::size_t samples = 256;
    std::size_t hidden = 0;
    TrainOptions opt;
    std::uint64_t seed = 7;
};

int run_train(const TrainArgs& a) {
    std::optional<MemoryStore> store;
    if (!a.store.empty()) {
        store.emplace(load_store(a.store, 0));
    } else {
        store.emplace(config_or_default(a.config));
    }
    const EngineConfig& cfg = store->config();
    const double scale = cfg.effective_position_scale();
    const auto samples = synthetic_cycle_samples(a.samples, cfg.d, cfg.L, scale, a.seed);
    DecoderSet dec = DecoderSet::untrained(cfg.d, a.hidden ? a.hidden : cfg.effective_hidden(), scale, a.seed);
    const TrainReport rep = train_cycle(store->rev_params(), dec, samples, a.opt);
    std::cout << "steps " << a.opt.steps << "  cycle " << rep.initial.cycle << " -> " << rep.final.cycle << "  total "
              << rep.initial.total() << " -> " << rep.final.total() << '\n';
    store->set_decoders(std::move(dec));
    const std::size_t bytes = save_store(*store, a.out);
    std::cout << "saved " << a.out << " (" << bytes << " bytes)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial long/short-term memory store tool"};
    app.require_subcommand(1);

    IngestArgs ingest;
    auto* c_ingest = app.add_subcommand("ingest", "Write a trajectory file into a new store file");
    c_ingest->add_option("--traj", ingest.traj, "Trajectory text file")->required()->check(CLI::ExistingFile);
    c_ingest->add_option("--out", ingest.out, "Store file to create")->required();
    c_ingest->add_option("--config", ingest.config, "key=value engine config (d defaults to the trajectory's)");

    QueryArgs query;
    auto* c_query = app.add_subcommand("query", "Run retrieve() against a store file");
    c_query->add_option("--store", query.store, "Store file")->required()->check(CLI::ExistingFile);
    c_query->add_option("--traj", query.traj, "Trajectory file whose records are used as queries");
    c_query->add_option("--embedding", query.embedding, "Comma-separated query embedding");
    c_query->add_option("--position", query.position, "Comma-separated x,y,z (default 0,0,0)");
    c_query->add_flag("--json", query.json, "Print results as JSON");

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "Retrieval latency tables");
    c_bench->add_option("--trials", bench.opt.trials, "Operations timed per row")->capture_default_str();
    c_bench->add_option("--dim", bench.opt.d, "Embedding dimension")->capture_default_str();
    c_bench->add_option("--cache-sizes", bench.opt.cache_sizes, "STM capacities")->delimiter(',')->capture_default_str();
    c_bench->add_option("--index-sizes", bench.opt.index_sizes, "LTM token counts")->delimiter(',')->capture_default_str();
    c_bench->add_option("--breakdown-cache", bench.opt.breakdown_cache, "STM capacity of the breakdown row")
        ->capture_default_str();
    c_bench->add_option("--breakdown-index", bench.opt.breakdown_index, "LTM size of the breakdown row")
        ->capture_default_str();
    c_bench->add_option("--seed", bench.opt.seed, "Random seed")->capture_default_str();
    c_bench->add_option("--csv", bench.csv, "Also write rows as CSV");

    AblateArgs ablate;
    auto* c_ablate = app.add_subcommand("ablate", "Component ablations on the synthetic world");
    c_ablate->add_option("--worlds", ablate.opt.worlds, "Worlds")->capture_default_str();
    c_ablate->add_option("--episodes-per-world", ablate.opt.episodes_per_world, "Episodes per world")
        ->capture_default_str();
    c_ablate->add_option("--blocks", ablate.opt.blocks, "Blocks per world")->capture_default_str();
    c_ablate->add_option("--landmarks-per-block", ablate.opt.landmarks_per_block, "Landmarks per block")
        ->capture_default_str();
    c_ablate->add_option("--dim", ablate.opt.world.d, "Embedding dimension")->capture_default_str();
    c_ablate->add_option("--jitter", ablate.opt.world.jitter, "Observation noise std")->capture_default_str();
    c_ablate->add_option("--seed", ablate.opt.seed, "Random seed")->capture_default_str();
    c_ablate->add_option("--csv", ablate.csv, "Also write rows as CSV");

    VerifyArgs verify;
    auto* c_verify = app.add_subcommand("verify-index", "HNSW recall against exact linear scan");
    c_verify->add_option("--store", verify.store, "Store file")->required()->check(CLI::ExistingFile);
    c_verify->add_option("--queries", verify.queries, "Number of sampled queries")->capture_default_str();
    c_verify->add_option("--k", verify.k, "Neighbors per query (default m_ltm)");
    c_verify->add_option("--min-recall", verify.min_recall, "Exit 2 when recall is lower")->capture_default_str();
    c_verify->add_option("--seed", verify.seed, "Query sampling seed")->capture_default_str();

    TrainArgs train;
    auto* c_train = app.add_subcommand("train-cycle", "Train decoder heads with the cycle loss and save the store");
    c_train->add_option("--store", train.store, "Store whose block parameters are used")->check(CLI::ExistingFile);
    c_train->add_option("--config", train.config, "Engine config when no store is given");
    c_train->add_option("--out", train.out, "Store file to write")->required();
    c_train->add_option("--samples", train.samples, "Synthetic samples")->capture_default_str();
    c_train->add_option("--steps", train.opt.steps, "Gradient steps")->capture_default_str();
    c_train->add_option("--lr", train.opt.lr, "Learning rate")->capture_default_str();
    c_train->add_option("--hidden", train.hidden, "Decoder hidden width (default d)");
    c_train->add_option("--seed", train.seed, "Sample and init seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kUsage;
    }

    try {
        if (*c_ingest) return run_ingest(ingest);
        if (*c_query) return run_query(query);
        if (*c_bench) return run_bench(bench);
        if (*c_ablate) return run_ablate(ablate);
        if (*c_verify) return run_verify(verify);
        if (*c_train) return run_train(train);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kData;
    }
    return kUsage;
}
