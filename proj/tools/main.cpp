// Command-line front end: generation, benchmarking, sweeps, ablations,
// and cache snapshots, all driven by JSONL corpora.
//
// Exit codes: 0 success, 1 usage error, 2 verification failure, 3 I/O error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <lookahead/lookahead.hpp>

namespace la = lookahead;
using nlohmann::json;

namespace {

struct ToolOptions {
    // corpus and model
    std::string corpus;
    std::string warmup_path;
    std::string snapshot_path;
    std::string tokenizer = "ids";
    std::string model = "hash";
    int hash_window = 3;
    int vocab = 0;  // 0 derives it from the tokenizer or corpus
    std::uint64_t model_seed = 0x5eed;
    std::uint64_t hash_eos_every = 0;
    int ngram_order = 3;

    // generation config
    la::GenConfig cfg;
    int eos = -1;  // -1 means no eos token
    std::string mode = "greedy";
    std::string draft_mode = "hierarchical";
    bool no_insert_prompt = false;
    bool no_insert_output = false;
    bool no_prune = false;
    bool no_eliminate = false;

    // command specifics
    std::string run = "both";
    bool check = false;
    int batch = 1;
    std::string out;
    std::vector<int> decoding_lengths;
    std::vector<int> branch_lengths;
    std::vector<std::string> draft_modes;
    std::vector<int> capacity_mults;
    std::string save_path;
    std::string load_path;
    bool verify = false;

    la::GenConfig resolved_config() const {
        la::GenConfig out_cfg = cfg;
        out_cfg.mode = la::parse_decode_mode(mode);
        out_cfg.draft_mode = la::parse_draft_mode(draft_mode);
        out_cfg.insert_prompt = !no_insert_prompt;
        out_cfg.insert_output = !no_insert_output;
        out_cfg.prune_enabled = !no_prune;
        out_cfg.eliminate_enabled = !no_eliminate;
        if (eos >= 0) {
            out_cfg.eos_token = static_cast<la::TokenId>(eos);
        }
        out_cfg.validate();
        return out_cfg;
    }
};

void add_model_flags(CLI::App* sub, ToolOptions& opt) {
    sub->add_option("--tokenizer", opt.tokenizer, "corpus tokenization")
        ->check(CLI::IsMember({"ids", "bytes"}));
    sub->add_option("--model", opt.model, "reference model")
        ->check(CLI::IsMember({"hash", "ngram"}));
    sub->add_option("--hash-window", opt.hash_window,
                    "hash model: context window")
        ->check(CLI::PositiveNumber);
    sub->add_option("--vocab", opt.vocab,
                    "vocabulary size (0 = derive from tokenizer/corpus)");
    sub->add_option("--model-seed", opt.model_seed, "hash model seed");
    sub->add_option("--hash-eos-every", opt.hash_eos_every,
                    "hash model: predict eos when the path hash is divisible "
                    "by N (0 = never; requires --eos)");
    sub->add_option("--ngram-order", opt.ngram_order, "ngram model order")
        ->check(CLI::PositiveNumber);
}

void add_config_flags(CLI::App* sub, ToolOptions& opt) {
    sub->add_option("--decoding-length", opt.cfg.decoding_length,
                    "draft token budget per step");
    sub->add_option("--branch-length", opt.cfg.branch_length,
                    "cache branch depth and insertion window");
    sub->add_option("--min-match", opt.cfg.min_match_tokens,
                    "matched-subtree size that stops the prefix search "
                    "(0 = half the decoding length)");
    sub->add_option("--capacity-mult", opt.cfg.capacity_multiplier,
                    "cache capacity as a multiple of the decoding length");
    sub->add_option("--max-prefix-len", opt.cfg.max_prefix_len,
                    "longest retrieval prefix tried");
    sub->add_option("--max-new-tokens", opt.cfg.max_new_tokens,
                    "generation length cap");
    sub->add_option("--eos", opt.eos, "end-of-sequence token id (-1 = none)");
    sub->add_option("--mode", opt.mode, "decoding mode")
        ->check(CLI::IsMember({"greedy", "sample"}));
    sub->add_option("--draft-mode", opt.draft_mode, "draft shape")
        ->check(CLI::IsMember({"single", "parallel", "hierarchical"}));
    sub->add_flag("--no-insert-prompt", opt.no_insert_prompt,
                  "skip prompt insertion into the cache");
    sub->add_flag("--no-insert-output", opt.no_insert_output,
                  "skip on-the-fly output insertion");
    sub->add_flag("--no-prune", opt.no_prune, "disable capacity pruning");
    sub->add_flag("--no-eliminate", opt.no_eliminate,
                  "keep prompt branches after generation");
    sub->add_option("--seed", opt.cfg.seed, "run seed (sample-mode RNG)");
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw la::IoError("cannot open " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw la::IoError("read failed for " + path);
    }
    return buf.str();
}

int resolve_vocab(const ToolOptions& opt,
                  const std::vector<la::CorpusEntry>& corpus) {
    if (opt.vocab > 0) {
        return opt.vocab;
    }
    if (opt.tokenizer == "bytes") {
        return la::kByteVocab;
    }
    la::TokenId max_id = 1;
    for (const la::CorpusEntry& entry : corpus) {
        for (const la::TokenId t : entry.prompt) max_id = std::max(max_id, t);
        for (const la::TokenId t : entry.reference) max_id = std::max(max_id, t);
    }
    if (opt.eos >= 0) {
        max_id = std::max(max_id, static_cast<la::TokenId>(opt.eos));
    }
    return max_id + 1;
}

json model_json(const ToolOptions& opt, int vocab) {
    json j;
    j["kind"] = opt.model;
    j["vocab"] = vocab;
    if (opt.model == "hash") {
        j["window"] = opt.hash_window;
        j["seed"] = opt.model_seed;
        j["eos_every"] = opt.hash_eos_every;
    } else {
        j["order"] = opt.ngram_order;
    }
    return j;
}

// Builds the requested model over the corpus and hands it to `fn`.
template <typename Fn>
int with_model(const ToolOptions& opt,
               const std::vector<la::CorpusEntry>& corpus, Fn&& fn) {
    const int vocab = resolve_vocab(opt, corpus);
    if (opt.model == "hash") {
        std::optional<la::TokenId> eos;
        if (opt.hash_eos_every > 0) {
            if (opt.eos < 0) {
                throw std::invalid_argument("--hash-eos-every requires --eos");
            }
            eos = static_cast<la::TokenId>(opt.eos);
        }
        const la::HashModel model(opt.hash_window, vocab, opt.model_seed, eos,
                                  opt.hash_eos_every);
        return fn(model, vocab);
    }
    la::NgramModel model(opt.ngram_order, vocab);
    for (const la::CorpusEntry& entry : corpus) {
        la::TokenList text = entry.prompt;
        text.insert(text.end(), entry.reference.begin(), entry.reference.end());
        model.train(text);
    }
    return fn(model, vocab);
}

void emit_json(const json& j, const std::string& out_path) {
    // byte-mode text fields may hold arbitrary bytes; replace what JSON
    // cannot carry rather than failing the whole report
    const std::string text =
        j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
    if (out_path.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        la::write_text_file(out_path, text);
    }
}

void emit_table(const std::string& csv, const json& twin,
                const std::string& out_path) {
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        la::write_report(out_path, csv, twin);
    }
}

json run_json(const la::RunResult& result, bool bytes) {
    json j;
    j["tokens"] = result.tokens;
    j["steps"] = result.stats.steps;
    j["tokens_per_step"] = result.stats.tokens_per_step;
    if (bytes) {
        j["text"] = la::tokens_to_bytes(result.tokens);
    }
    return j;
}

int cmd_generate(const ToolOptions& opt) {
    const la::Tokenizer tok = la::parse_tokenizer(opt.tokenizer);
    const bool bytes = tok == la::Tokenizer::Bytes;
    const la::GenConfig cfg = opt.resolved_config();
    const bool want_base = opt.run != "lookahead";
    const bool want_look = opt.run != "baseline";
    if (opt.check && !(want_base && want_look)) {
        throw std::invalid_argument("--check requires --run both");
    }

    const std::vector<la::CorpusEntry> corpus = la::load_corpus(opt.corpus, tok);
    return with_model(opt, corpus, [&](const auto& model, int vocab) -> int {
        la::TrieCache trie =
            opt.snapshot_path.empty()
                ? la::make_trie(cfg)
                : la::TrieCache::load_snapshot(read_file(opt.snapshot_path));
        trie.set_retrieval_params(cfg.resolved_min_match(), cfg.max_prefix_len);
        if (!opt.warmup_path.empty()) {
            const auto extra = la::load_corpus(opt.warmup_path, tok);
            la::warmup(trie, extra);
        }

        std::vector<la::RunResult> look(corpus.size());
        if (want_look) {
            if (opt.batch > 1) {
                for (std::size_t i = 0; i < corpus.size();) {
                    const std::size_t n = std::min<std::size_t>(
                        static_cast<std::size_t>(opt.batch), corpus.size() - i);
                    std::vector<la::TokenList> prompts;
                    prompts.reserve(n);
                    for (std::size_t j = 0; j < n; ++j) {
                        prompts.push_back(corpus[i + j].prompt);
                    }
                    auto results = la::generate_batch(model, trie, prompts, cfg);
                    for (std::size_t j = 0; j < n; ++j) {
                        look[i + j] = std::move(results[j]);
                    }
                    i += n;
                }
            } else {
                for (std::size_t i = 0; i < corpus.size(); ++i) {
                    look[i] =
                        la::generate_lookahead(model, trie, corpus[i].prompt, cfg);
                }
            }
        }

        bool all_match = true;
        la::RunAggregate base_agg;
        la::RunAggregate look_agg;
        json records = json::array();
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            json rec;
            rec["index"] = i;
            la::RunResult base;
            if (want_base) {
                base = la::generate_baseline(model, corpus[i].prompt, cfg);
                base_agg.add(base.stats);
                rec["baseline"] = run_json(base, bytes);
            }
            if (want_look) {
                look_agg.add(look[i].stats);
                rec["lookahead"] = run_json(look[i], bytes);
            }
            if (want_base && want_look) {
                const bool match = base.tokens == look[i].tokens;
                all_match = all_match && match;
                rec["match"] = match;
            }
            records.push_back(std::move(rec));
        }

        json out;
        out["config"] = la::config_json(cfg);
        out["model"] = model_json(opt, vocab);
        out["tokenizer"] = opt.tokenizer;
        out["records"] = std::move(records);
        if (want_base) out["baseline_summary"] = la::aggregate_json(base_agg);
        if (want_look) out["lookahead_summary"] = la::aggregate_json(look_agg);
        if (want_base && want_look) out["all_match"] = all_match;
        emit_json(out, opt.out);

        if (opt.check && !all_match) {
            std::fprintf(stderr, "generate: output mismatch against baseline\n");
            return 2;
        }
        return 0;
    });
}

int cmd_bench(const ToolOptions& opt) {
    const la::Tokenizer tok = la::parse_tokenizer(opt.tokenizer);
    const la::GenConfig cfg = opt.resolved_config();
    const auto corpus = la::load_corpus(opt.corpus, tok);
    return with_model(opt, corpus, [&](const auto& model, int) -> int {
        const int ld[] = {cfg.decoding_length};
        const int lb[] = {cfg.branch_length};
        const la::DraftMode modes[] = {cfg.draft_mode};
        const auto cells = la::run_suite(model, corpus, cfg, ld, lb, modes);
        emit_table(la::suite_csv(cells), la::suite_json(cfg, cells), opt.out);
        return 0;
    });
}

int cmd_sweep(const ToolOptions& opt) {
    const la::Tokenizer tok = la::parse_tokenizer(opt.tokenizer);
    const la::GenConfig cfg = opt.resolved_config();
    const auto corpus = la::load_corpus(opt.corpus, tok);
    return with_model(opt, corpus, [&](const auto& model, int) -> int {
        if (!opt.capacity_mults.empty()) {
            const auto rows =
                la::run_capacity_sweep(model, corpus, cfg, opt.capacity_mults);
            emit_table(la::capacity_csv(rows), la::capacity_json(cfg, rows),
                       opt.out);
            return 0;
        }
        std::vector<int> ld = opt.decoding_lengths;
        if (ld.empty()) ld = {4, 8, 16};
        std::vector<int> lb = opt.branch_lengths;
        if (lb.empty()) lb = {cfg.branch_length};
        std::vector<la::DraftMode> modes;
        if (opt.draft_modes.empty()) {
            modes = {la::DraftMode::Single, la::DraftMode::Parallel,
                     la::DraftMode::Hierarchical};
        } else {
            for (const std::string& name : opt.draft_modes) {
                modes.push_back(la::parse_draft_mode(name));
            }
        }
        const auto cells = la::run_suite(model, corpus, cfg, ld, lb, modes);
        emit_table(la::suite_csv(cells), la::suite_json(cfg, cells), opt.out);
        return 0;
    });
}

int cmd_ablate(const ToolOptions& opt) {
    const la::Tokenizer tok = la::parse_tokenizer(opt.tokenizer);
    const la::GenConfig cfg = opt.resolved_config();
    const auto corpus = la::load_corpus(opt.corpus, tok);
    return with_model(opt, corpus, [&](const auto& model, int) -> int {
        const auto rows = la::run_ablation(model, corpus, cfg);
        emit_table(la::ablation_csv(rows), la::ablation_json(cfg, rows), opt.out);
        return 0;
    });
}

int cmd_snapshot(const ToolOptions& opt) {
    if (opt.save_path.empty() && opt.load_path.empty()) {
        throw std::invalid_argument("snapshot: need --save and/or --load");
    }
    if (opt.verify && opt.load_path.empty()) {
        throw std::invalid_argument("snapshot: --verify requires --load");
    }
    const la::GenConfig cfg = opt.resolved_config();

    la::TrieCache trie = la::make_trie(cfg);
    if (!opt.load_path.empty()) {
        const std::string text = read_file(opt.load_path);
        trie = la::TrieCache::load_snapshot(text);
        if (opt.verify && trie.save_snapshot() != text) {
            std::fprintf(stderr, "snapshot: round-trip differs from %s\n",
                         opt.load_path.c_str());
            return 2;
        }
    }
    if (!opt.corpus.empty()) {
        const la::Tokenizer tok = la::parse_tokenizer(opt.tokenizer);
        const auto corpus = la::load_corpus(opt.corpus, tok);
        la::warmup(trie, corpus);
    }
    if (!opt.save_path.empty()) {
        la::write_text_file(opt.save_path, trie.save_snapshot());
        return 0;
    }

    json info;
    info["node_count"] = trie.node_count();
    info["capacity"] = trie.config().capacity;
    info["branch_length"] = trie.config().branch_length;
    emit_json(info, opt.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trie-based lookahead decoding toolkit"};
    app.require_subcommand(1);

    ToolOptions gen_opt;
    CLI::App* gen = app.add_subcommand(
        "generate", "decode a corpus and compare against the baseline");
    gen->add_option("--corpus", gen_opt.corpus, "JSONL corpus")->required();
    add_model_flags(gen, gen_opt);
    add_config_flags(gen, gen_opt);
    gen->add_option("--run", gen_opt.run, "which decoders to run")
        ->check(CLI::IsMember({"baseline", "lookahead", "both"}));
    gen->add_flag("--check", gen_opt.check,
                  "exit 2 unless lookahead matches baseline");
    gen->add_option("--batch", gen_opt.batch, "batched decoding width")
        ->check(CLI::PositiveNumber);
    gen->add_option("--warmup", gen_opt.warmup_path,
                    "JSONL corpus whose references pre-fill the cache");
    gen->add_option("--snapshot", gen_opt.snapshot_path,
                    "cache snapshot to preload");
    gen->add_option("--out", gen_opt.out, "write the JSON report here");

    ToolOptions bench_opt;
    CLI::App* bench =
        app.add_subcommand("bench", "measure one configuration over a corpus");
    bench->add_option("--corpus", bench_opt.corpus, "JSONL corpus")->required();
    add_model_flags(bench, bench_opt);
    add_config_flags(bench, bench_opt);
    bench->add_option("--out", bench_opt.out, "CSV path (JSON twin alongside)");

    ToolOptions sweep_opt;
    CLI::App* sweep = app.add_subcommand(
        "sweep", "grid over decoding/branch lengths and draft modes, or over "
                 "cache capacity with --capacity-mults");
    sweep->add_option("--corpus", sweep_opt.corpus, "JSONL corpus")->required();
    add_model_flags(sweep, sweep_opt);
    add_config_flags(sweep, sweep_opt);
    sweep->add_option("--decoding-lengths", sweep_opt.decoding_lengths,
                      "decoding lengths to sweep")
        ->delimiter(',');
    sweep->add_option("--branch-lengths", sweep_opt.branch_lengths,
                      "branch lengths to sweep")
        ->delimiter(',');
    sweep->add_option("--draft-modes", sweep_opt.draft_modes,
                      "draft modes to sweep")
        ->delimiter(',');
    sweep->add_option("--capacity-mults", sweep_opt.capacity_mults,
                      "capacity multipliers (switches to the capacity table)")
        ->delimiter(',');
    sweep->add_option("--out", sweep_opt.out, "CSV path (JSON twin alongside)");

    ToolOptions ablate_opt;
    CLI::App* ablate = app.add_subcommand(
        "ablate", "full configuration vs each maintenance toggle disabled");
    ablate->add_option("--corpus", ablate_opt.corpus, "JSONL corpus")->required();
    add_model_flags(ablate, ablate_opt);
    add_config_flags(ablate, ablate_opt);
    ablate->add_option("--out", ablate_opt.out, "CSV path (JSON twin alongside)");

    ToolOptions snap_opt;
    CLI::App* snap = app.add_subcommand(
        "snapshot", "build, save, load, and verify cache snapshots");
    snap->add_option("--corpus", snap_opt.corpus,
                     "JSONL corpus whose references warm the cache");
    add_model_flags(snap, snap_opt);
    add_config_flags(snap, snap_opt);
    snap->add_option("--save", snap_opt.save_path, "write a snapshot here");
    snap->add_option("--load", snap_opt.load_path, "read a snapshot first");
    snap->add_flag("--verify", snap_opt.verify,
                   "check that the loaded snapshot reserializes byte-identically");
    snap->add_option("--out", snap_opt.out, "write the info JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_opt);
        if (bench->parsed()) return cmd_bench(bench_opt);
        if (sweep->parsed()) return cmd_sweep(sweep_opt);
        if (ablate->parsed()) return cmd_ablate(ablate_opt);
        if (snap->parsed()) return cmd_snapshot(snap_opt);
    } catch (const la::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::runtime_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
