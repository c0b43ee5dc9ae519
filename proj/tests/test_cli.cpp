#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = LOOKAHEAD_CLI_PATH;
const std::string kSample = std::string(LOOKAHEAD_DATA_DIR) + "/sample.jsonl";
const fs::path kTmp = "cli_tmp";

struct CliResult {
    int code = -1;
    std::string output;  // stdout and stderr combined
};

CliResult run_cli(const std::string& args) {
    const fs::path capture = kTmp / "capture.txt";
    const std::string cmd =
        "\"" + kCli + "\" " + args + " > \"" + capture.string() + "\" 2>&1";
    const int raw = std::system(cmd.c_str());
    CliResult res;
#ifdef _WIN32
    res.code = raw;
#else
    res.code = WEXITSTATUS(raw);
#endif
    std::ifstream in(capture);
    std::ostringstream buf;
    buf << in.rdbuf();
    res.output = buf.str();
    return res;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int line_count(const std::string& text) {
    int lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    return lines;
}

struct TmpDir {
    TmpDir() {
        fs::remove_all(kTmp);
        fs::create_directories(kTmp);
    }
};

// one shared workspace for the whole binary; files use distinct names
const TmpDir tmp_dir_guard;

}  // namespace

TEST_CASE("generate --check confirms losslessness on the sample corpus") {
    const fs::path out = kTmp / "gen.json";
    const CliResult res = run_cli(
        "generate --corpus \"" + kSample +
        "\" --tokenizer bytes --model hash --run both --check "
        "--max-new-tokens 24 --out " + out.string());
    REQUIRE(res.code == 0);

    const nlohmann::json j = nlohmann::json::parse(read_file(out));
    CHECK(j["all_match"] == true);
    REQUIRE(j["records"].is_array());
    REQUIRE(j["records"].size() > 0);
    for (const auto& rec : j["records"]) {
        CHECK(rec["match"] == true);
        CHECK(rec["lookahead"].contains("text"));
        CHECK(rec["lookahead"]["steps"].get<int>() >= 1);
    }
    CHECK(j["baseline_summary"]["tokens"] == j["lookahead_summary"]["tokens"]);
    CHECK(j["config"]["mode"] == "greedy");
}

TEST_CASE("generate honors batching without changing results") {
    const fs::path solo = kTmp / "gen_solo.json";
    const fs::path batched = kTmp / "gen_batch.json";
    const std::string common =
        "generate --corpus \"" + kSample +
        "\" --tokenizer bytes --model hash --run lookahead --max-new-tokens 16 ";
    REQUIRE(run_cli(common + "--out " + solo.string()).code == 0);
    REQUIRE(run_cli(common + "--batch 3 --out " + batched.string()).code == 0);

    const nlohmann::json a = nlohmann::json::parse(read_file(solo));
    const nlohmann::json b = nlohmann::json::parse(read_file(batched));
    REQUIRE(a["records"].size() == b["records"].size());
    for (std::size_t i = 0; i < a["records"].size(); ++i) {
        CHECK(a["records"][i]["lookahead"]["tokens"] ==
              b["records"][i]["lookahead"]["tokens"]);
    }
}

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli("").code == 1);                       // missing subcommand
    CHECK(run_cli("decode").code == 1);                 // unknown subcommand
    CHECK(run_cli("generate").code == 1);               // missing --corpus
    CHECK(run_cli("generate --corpus x --frobnicate").code == 1);
    CHECK(run_cli("generate --corpus \"" + kSample +
                  "\" --tokenizer bytes --run lookahead --check")
              .code == 1);  // --check needs both decoders
    CHECK(run_cli("snapshot").code == 1);  // needs --save and/or --load
    CHECK(run_cli("--help").code == 0);
    CHECK(run_cli("generate --help").code == 0);
}

TEST_CASE("missing and unreadable files exit with code 3") {
    CHECK(run_cli("generate --corpus " + (kTmp / "absent.jsonl").string() +
                  " --tokenizer bytes")
              .code == 3);
    CHECK(run_cli("snapshot --load " + (kTmp / "absent_snap.json").string())
              .code == 3);

    // malformed corpus rows are I/O errors, with the line number named
    const fs::path broken = kTmp / "broken.jsonl";
    std::ofstream(broken) << "{\"prompt\": \"ab\", \"reference\": \"c\"}\n"
                          << "this is not json\n";
    const CliResult res =
        run_cli("generate --corpus " + broken.string() + " --tokenizer bytes");
    CHECK(res.code == 3);
    CHECK(res.output.find("line 2") != std::string::npos);
}

TEST_CASE("snapshots round-trip byte-identically through the tool") {
    const fs::path s1 = kTmp / "snap1.json";
    const fs::path s2 = kTmp / "snap2.json";
    REQUIRE(run_cli("snapshot --corpus \"" + kSample +
                    "\" --tokenizer bytes --save " + s1.string())
                .code == 0);
    REQUIRE(run_cli("snapshot --load " + s1.string() + " --save " + s2.string())
                .code == 0);
    CHECK(read_file(s1) == read_file(s2));

    CHECK(run_cli("snapshot --load " + s1.string() + " --verify").code == 0);

    // a snapshot loaded without --save reports its shape
    const fs::path info = kTmp / "snap_info.json";
    REQUIRE(run_cli("snapshot --load " + s1.string() + " --out " + info.string())
                .code == 0);
    const nlohmann::json j = nlohmann::json::parse(read_file(info));
    CHECK(j["node_count"].get<int>() > 0);

    const fs::path bad = kTmp / "snap_bad.json";
    std::ofstream(bad) << "{\"version\": 99}";
    CHECK(run_cli("snapshot --load " + bad.string()).code == 3);
}

TEST_CASE("a preloaded snapshot changes drafting but not output") {
    const fs::path snap = kTmp / "warm_snap.json";
    REQUIRE(run_cli("snapshot --corpus \"" + kSample +
                    "\" --tokenizer bytes --save " + snap.string())
                .code == 0);
    const fs::path out = kTmp / "gen_snap.json";
    const CliResult res = run_cli(
        "generate --corpus \"" + kSample +
        "\" --tokenizer bytes --model hash --run both --check --snapshot " +
        snap.string() + " --max-new-tokens 16 --out " + out.string());
    REQUIRE(res.code == 0);
    CHECK(nlohmann::json::parse(read_file(out))["all_match"] == true);
}

TEST_CASE("bench output is byte-stable across reruns") {
    const fs::path c1 = kTmp / "bench1.csv";
    const fs::path c2 = kTmp / "bench2.csv";
    const std::string common = "bench --corpus \"" + kSample +
                               "\" --tokenizer bytes --model hash "
                               "--max-new-tokens 16 --seed 11 --out ";
    REQUIRE(run_cli(common + c1.string()).code == 0);
    REQUIRE(run_cli(common + c2.string()).code == 0);
    CHECK(read_file(c1) == read_file(c2));

    const std::string csv = read_file(c1);
    CHECK(csv.rfind("decoding_length,branch_length,draft_mode,", 0) == 0);
    CHECK(line_count(csv) == 2);  // header plus the single configured cell

    // the JSON twin lands next to the CSV and parses
    const nlohmann::json twin =
        nlohmann::json::parse(read_file(kTmp / "bench1.json"));
    CHECK(twin["report"] == "suite");
    REQUIRE(twin["rows"].size() == 1);
}

TEST_CASE("sweep covers the requested grid") {
    const fs::path out = kTmp / "sweep.csv";
    REQUIRE(run_cli("sweep --corpus \"" + kSample +
                    "\" --tokenizer bytes --model hash --max-new-tokens 12 "
                    "--decoding-lengths 4,8 --branch-lengths 2 "
                    "--draft-modes hierarchical,single --out " + out.string())
                .code == 0);
    CHECK(line_count(read_file(out)) == 5);  // header + 2x1x2 cells

    const fs::path cap = kTmp / "sweep_cap.csv";
    REQUIRE(run_cli("sweep --corpus \"" + kSample +
                    "\" --tokenizer bytes --model hash --max-new-tokens 12 "
                    "--capacity-mults 1,4 --out " + cap.string())
                .code == 0);
    const std::string cap_csv = read_file(cap);
    CHECK(cap_csv.rfind("capacity_multiplier,", 0) == 0);
    CHECK(line_count(cap_csv) == 3);
}

TEST_CASE("ablate reports the five maintenance variants") {
    const fs::path out = kTmp / "ablate.csv";
    REQUIRE(run_cli("ablate --corpus \"" + kSample +
                    "\" --tokenizer bytes --model hash --max-new-tokens 12 "
                    "--out " + out.string())
                .code == 0);
    const std::string csv = read_file(out);
    CHECK(line_count(csv) == 6);
    CHECK(csv.find("\nfull,") != std::string::npos);
    CHECK(csv.find("\nno-prompt-insert,") != std::string::npos);
    CHECK(csv.find("\nno-output-insert,") != std::string::npos);
    CHECK(csv.find("\nno-prune,") != std::string::npos);
    CHECK(csv.find("\nno-eliminate,") != std::string::npos);
}

TEST_CASE("the ngram reference model decodes the corpus") {
    const fs::path out = kTmp / "gen_ngram.json";
    const CliResult res = run_cli(
        "generate --corpus \"" + kSample +
        "\" --tokenizer bytes --model ngram --ngram-order 3 --run both "
        "--check --max-new-tokens 24 --out " + out.string());
    REQUIRE(res.code == 0);
    CHECK(nlohmann::json::parse(read_file(out))["all_match"] == true);
}
