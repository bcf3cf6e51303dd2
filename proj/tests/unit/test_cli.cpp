#include <doctest.h>

#include <sstream>

#include <fmt/format.h>

#include <json.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "helpers.hpp"
#include "tfpatch/error.hpp"
#include "tfpatch/experiments.hpp"
#include "tfpatch/instance.hpp"
#include "tfpatch/model.hpp"

using namespace tfpatch;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result tfpatch_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Tiny model, vocabulary and toy corpus written by export-fixture.
struct Workspace {
    testing::TempDir dir{"cli"};
    fs::path fixture = dir / "fixture";

    Workspace() {
        auto r = tfpatch_cli({"export-fixture", "-o", fixture.string(), "--seed", "5", "--layers", "2", "--heads",
                              "2", "--head-dim", "4", "--num-docs", "60", "--num-queries", "6"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }

    std::vector<std::string> text_args() const {
        return {"--corpus",  (fixture / "corpus.tsv").string(), "--queries",  (fixture / "queries.tsv").string(),
                "--vocab",   (fixture / "vocab.txt").string(),  "--top-k",    "10"};
    }
    std::vector<std::string> model_args() const {
        return {"--vocab", (fixture / "vocab.txt").string(), "--weights", (fixture / "model.apwm").string()};
    }

    Result generate(const fs::path& out, std::vector<std::string> extra) const {
        std::vector<std::string> args{"generate", "-o", out.string(), "--num-queries", "4"};
        for (auto& a : text_args()) args.push_back(a);
        for (auto& a : extra) args.push_back(a);
        return tfpatch_cli(args);
    }
};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(testing::slurp(p)); }

}  // namespace

TEST_CASE("exit codes by error category") {
    CHECK(cli::exit_code(Errc::config) == 2);
    CHECK(cli::exit_code(Errc::io) == 2);
    CHECK(cli::exit_code(Errc::hash_mismatch) == 2);
    CHECK(cli::exit_code(Errc::ingestion) == 3);
    CHECK(cli::exit_code(Errc::load_truncated) == 3);
    CHECK(cli::exit_code(Errc::degenerate) == 4);
    CHECK(cli::exit_code(Errc::undefined_r2) == 4);
    CHECK(cli::exit_code(Errc::domain) == 4);
}

TEST_CASE("config files merge with flags and reject unknown fields") {
    testing::TempDir dir("cfg");
    testing::spit(dir / "c.json", R"({"k_max": 3, "kinds": ["tfc2_inject"], "seed": 9})");
    auto c = cli::load_config(dir / "c.json");
    CHECK(c.k_max == 3);
    CHECK(c.kinds == std::vector<std::string>{"tfc2_inject"});
    CHECK(c.seed == 9);

    testing::spit(dir / "bad.json", R"({"k_maxx": 3})");
    CHECK_THROWS_AS(cli::load_config(dir / "bad.json"), Error);
    testing::spit(dir / "type.json", R"({"k_max": "three"})");
    CHECK_THROWS_AS(cli::load_config(dir / "type.json"), Error);

    auto round = cli::RunConfig{};
    round.head_group = {"1.0", "2.3"};
    cli::RunConfig back;
    cli::merge_json(back, cli::to_json(round));
    CHECK(cli::to_json(back) == cli::to_json(round));

    cli::RunConfig a, b;
    b.workers = 8;
    b.out_dir = "elsewhere";
    CHECK(cli::config_hash(a) == cli::config_hash(b));
    b.seed = 1;
    CHECK(cli::config_hash(a) != cli::config_hash(b));

    CHECK(tfpatch_cli({"fit", "--config", (dir / "bad.json").string(), "x.csv"}).code == 2);
    CHECK(tfpatch_cli({"fit", "--config", (dir / "missing.json").string(), "x.csv"}).code == 2);
    CHECK(tfpatch_cli({"patch", "--fraction", "0.7", "x.jsonl"}).code == 2);
    CHECK(tfpatch_cli({"nonsense"}).code == 2);
    CHECK(tfpatch_cli({"--version"}).code == 0);
}

TEST_CASE("generate writes one file per K and is reproducible") {
    Workspace ws;
    const auto a = ws.dir / "a", b = ws.dir / "b";
    const std::vector<std::string> extra{"--kind", "tfc2_inject", "--k-min", "0", "--k-max", "10"};
    auto r = ws.generate(a, extra);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto r4 = ws.generate(b, concat(extra, {"-j", "4"}));
    REQUIRE_MESSAGE(r4.code == 0, r4.err);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) files += e.path().extension() == ".jsonl";
    CHECK(files == 11);
    for (std::size_t k = 0; k <= 10; ++k) {
        const auto name = "tfc2_inject_k" + std::to_string(k) + ".jsonl";
        CHECK(testing::slurp(a / name) == testing::slurp(b / name));
        CHECK(testing::slurp(a / (name + ".meta.json")) == testing::slurp(b / (name + ".meta.json")));
        auto data = read_dataset(a / name);
        CHECK(data.instances.size() == 4 * 10);
        for (const auto& in : data.instances) CHECK(in.k == k);
        auto meta = read_json(a / (name + ".meta.json"));
        CHECK(meta["instances"] == 40);
        CHECK(meta["tool_version"] == std::string(kToolVersion));
        CHECK(meta["config_hash"].get<std::string>().size() == 16);
    }
    CHECK(r.out.find("40 instances from 4 queries") != std::string::npos);
}

TEST_CASE("missing and malformed inputs have distinct exit codes") {
    Workspace ws;
    auto missing = tfpatch_cli(concat({"patch", "-o", ws.dir.path().string(), (ws.dir / "nope.jsonl").string()},
                                      ws.model_args()));
    CHECK(missing.code == 2);
    CHECK(missing.err.find("not found") != std::string::npos);

    testing::spit(ws.dir / "broken.jsonl", "{\"query_id\": 1}\n");
    auto broken = tfpatch_cli(concat({"patch", "-o", ws.dir.path().string(), (ws.dir / "broken.jsonl").string()},
                                     ws.model_args()));
    CHECK(broken.code == 3);
    CHECK(broken.err.find("[ingest]") != std::string::npos);

    auto no_weights = tfpatch_cli({"patch", (ws.dir / "broken.jsonl").string()});
    CHECK(no_weights.code == 2);
}

TEST_CASE("patch grids equal the library sweeps") {
    Workspace ws;
    const auto data_dir = ws.dir / "data", grid_dir = ws.dir / "grids";
    REQUIRE(ws.generate(data_dir, {}).code == 0);
    const auto dataset = data_dir / "tfc1_inject_append.jsonl";

    auto heads = tfpatch_cli(concat({"patch", "-o", grid_dir.string(), "--mode", "heads", dataset.string()},
                                    ws.model_args()));
    REQUIRE_MESSAGE(heads.code == 0, heads.err);
    auto blocks = tfpatch_cli(concat({"patch", "-o", grid_dir.string(), "--mode", "blocks", "-j", "3",
                                      dataset.string()},
                                     ws.model_args()));
    REQUIRE_MESSAGE(blocks.code == 0, blocks.err);

    auto model = load_weights_file(ws.fixture / "model.apwm");
    auto tok = testing::fixture_tokenizer(model.config().max_positions);
    auto instances = read_dataset(dataset).instances;

    auto expect_all = head_sweep(model, *tok, instances);
    auto got_all = read_json(grid_dir / "tfc1_inject_append_heads_all.json");
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t h = 0; h < 2; ++h) CHECK(got_all["values"][l][h].get<double>() == *expect_all.value(l, h));
    CHECK(got_all["metadata"]["split"] == "all");
    CHECK(got_all["metadata"]["config_hash"].get<std::string>().size() == 16);
    CHECK(got_all["metadata"]["dataset_config_hash"] ==
          read_json(data_dir / "tfc1_inject_append.jsonl.meta.json")["config_hash"]);

    auto split = split_by_rank(instances, baseline_scores(model, *tok, instances), 0.10);
    std::vector<DiagnosticInstance> top;
    for (auto i : split.top) top.push_back(instances[i]);
    auto expect_top = head_sweep(model, *tok, top);
    auto got_top = read_json(grid_dir / "tfc1_inject_append_heads_top.json");
    CHECK(got_top["counts"][0][0] == 4);
    CHECK(got_top["values"][1][1].get<double>() == *expect_top.value(1, 1));
    CHECK(fs::exists(grid_dir / "tfc1_inject_append_heads_bottom.csv"));

    for (auto site : {SiteKind::resid_pre, SiteKind::attn_out, SiteKind::mlp_out}) {
        const auto stem = "tfc1_inject_append_blocks_" + std::string(to_string(site));
        auto expect = block_sweep(model, *tok, instances, site);
        auto got = read_json(grid_dir / (stem + ".json"));
        REQUIRE(got["cols"].size() == 6);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t c = 0; c < 6; ++c) {
                if (auto v = expect.value(l, c)) {
                    CHECK(got["values"][l][c].get<double>() == *v);
                } else {
                    CHECK(got["values"][l][c].is_null());
                }
            }
        const auto csv = testing::slurp(grid_dir / (stem + ".csv"));
        CHECK(csv.rfind("# tfpatch ", 0) == 0);
        CHECK(csv.find("config_hash=") != std::string::npos);
    }
}

TEST_CASE("patch output does not depend on the worker count") {
    Workspace ws;
    REQUIRE(ws.generate(ws.dir / "data", {}).code == 0);
    const auto dataset = (ws.dir / "data" / "tfc1_inject_append.jsonl").string();
    for (const auto* mode : {"heads", "blocks"}) {
        REQUIRE(tfpatch_cli(concat({"patch", "-o", (ws.dir / "one").string(), "--mode", mode, dataset},
                                   ws.model_args())).code == 0);
        REQUIRE(tfpatch_cli(concat({"patch", "-o", (ws.dir / "four").string(), "--mode", mode, "-j", "4", dataset},
                                   ws.model_args())).code == 0);
    }
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(ws.dir / "one")) {
        CHECK(testing::slurp(e.path()) == testing::slurp(ws.dir / "four" / e.path().filename()));
        ++compared;
    }
    CHECK(compared == 12);
}

TEST_CASE("analyze reports bm25 adherence and refuses mixed configs") {
    Workspace ws;
    REQUIRE(ws.generate(ws.dir / "data", {"--kind", "tfc2_inject", "--k-max", "4"}).code == 0);
    std::vector<std::string> args{"analyze", "-o", (ws.dir / "report").string(), "--corpus",
                                  (ws.fixture / "corpus.tsv").string()};
    for (int k = 0; k <= 4; ++k) args.push_back((ws.dir / "data" / fmt::format("tfc2_inject_k{}.jsonl", k)).string());
    auto r = tfpatch_cli(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto report = read_json(ws.dir / "report" / "analysis.json");
    CHECK(report["adherence_combined"]["fraction"] == 1.0);
    CHECK(report["adherence_combined"]["total_pairs"] == 5 * 40);
    CHECK(report["tfc2_gaps"]["ladders"] == 40);
    CHECK(report["tfc2_gaps"]["ladders_decreasing"] == 40);
    CHECK(report["tfc2_gaps"]["mean_gaps_decreasing"] == true);
    const auto gaps = testing::slurp(ws.dir / "report" / "gaps.csv");
    CHECK(gaps.find("k,gap\n0,") != std::string::npos);

    REQUIRE(ws.generate(ws.dir / "other", {"--top-k", "12"}).code == 0);
    auto mixed = args;
    mixed.push_back((ws.dir / "other" / "tfc1_inject_append.jsonl").string());
    auto refused = tfpatch_cli(mixed);
    CHECK(refused.code == 2);
    CHECK(refused.err.find("--force") != std::string::npos);
    mixed.push_back("--force");
    CHECK(tfpatch_cli(mixed).code == 0);
}

TEST_CASE("analyze fits head impact across K") {
    Workspace ws;
    REQUIRE(ws.generate(ws.dir / "data", {"--kind", "tfc2_inject", "--k-max", "3"}).code == 0);
    std::vector<std::string> grids;
    for (int k = 0; k <= 3; ++k) {
        const auto ds = (ws.dir / "data" / ("tfc2_inject_k" + std::to_string(k) + ".jsonl")).string();
        auto r = tfpatch_cli(concat({"patch", "-o", (ws.dir / "grids").string(), ds}, ws.model_args()));
        REQUIRE_MESSAGE(r.code == 0, r.err);
        grids.push_back((ws.dir / "grids" / ("tfc2_inject_k" + std::to_string(k) + "_heads_all.json")).string());
    }
    auto args = concat({"analyze", "-o", (ws.dir / "report").string(), "--head-group", "1.0", "--head-group", "1.1"},
                       grids);
    auto r = tfpatch_cli(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto report = read_json(ws.dir / "report" / "analysis.json");
    const auto& all = report["head_impact"]["splits"]["all"];
    REQUIRE(all["points"].size() == 4);
    CHECK(all["points"][0]["x"] == 1.0);
    double expect = 0;
    for (int h = 0; h < 2; ++h) expect += std::abs(read_json(grids[2])["values"][1][h].get<double>());
    CHECK(all["points"][2]["y"].get<double>() == doctest::Approx(expect / 2).epsilon(1e-15));
    CHECK(all["fit"].contains("r2"));

    auto outside = concat({"analyze", "-o", (ws.dir / "report").string(), "--head-group", "5.0"}, grids);
    CHECK(tfpatch_cli(outside).code == 2);
}

TEST_CASE("fit command") {
    testing::TempDir dir("fit");
    std::string csv = "x,y\n";
    for (int x = 1; x <= 10; ++x) csv += fmt::format("{},{:.17g}\n", x, 3.2 * std::log(x) + 0.5);
    testing::spit(dir / "series.csv", csv);
    auto r = tfpatch_cli({"fit", "-o", dir.path().string(), (dir / "series.csv").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto j = read_json(dir / "series_fit.json");
    CHECK(j["fit"]["a"].get<double>() == doctest::Approx(3.2).epsilon(1e-12));
    CHECK(j["sublinear"] == true);
    CHECK(j["observed_sublinear"] == true);

    testing::spit(dir / "flat.csv", "1,2\n2,2\n3,2\n");
    auto flat = tfpatch_cli({"fit", "-o", dir.path().string(), (dir / "flat.csv").string()});
    CHECK(flat.code == 4);
    CHECK(flat.err.find("flat.csv") != std::string::npos);

    testing::spit(dir / "junk.csv", "1,2\nfoo\n");
    CHECK(tfpatch_cli({"fit", "-o", dir.path().string(), (dir / "junk.csv").string()}).code == 3);
}

TEST_CASE("attn and rank commands") {
    Workspace ws;
    REQUIRE(ws.generate(ws.dir / "data", {}).code == 0);
    const auto ds = (ws.dir / "data" / "tfc1_inject_append.jsonl").string();
    auto r = tfpatch_cli(concat({"attn", "-o", (ws.dir / "attn").string(), "--layer", "1", "--head", "0", ds},
                                ws.model_args()));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    auto j = read_json(ws.dir / "attn" / "tfc1_inject_append_attn_L1_H0.json");
    double total = 0;
    for (auto& [k, v] : j["mass"].items()) total += v.get<double>();
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(j["instances"] == 40);

    auto bad = tfpatch_cli(concat({"attn", "-o", (ws.dir / "attn").string(), "--layer", "7", ds}, ws.model_args()));
    CHECK(bad.code == 2);

    std::vector<std::string> rank_args{"rank", "-o", (ws.dir / "rank").string()};
    auto rr = tfpatch_cli(concat(rank_args, ws.text_args()));
    REQUIRE_MESSAGE(rr.code == 0, rr.err);
    const auto csv = testing::slurp(ws.dir / "rank" / "ranking.csv");
    CHECK(csv.find("query_id,rank,doc_id,score\n") != std::string::npos);
}
