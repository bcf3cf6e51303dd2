#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "tfpatch/axioms.hpp"
#include "tfpatch/corpus.hpp"
#include "tfpatch/diagnostics.hpp"
#include "tfpatch/experiments.hpp"
#include "tfpatch/fit.hpp"
#include "tfpatch/fixture.hpp"
#include "tfpatch/hash.hpp"
#include "tfpatch/model.hpp"
#include "tfpatch/parallel.hpp"
#include "tfpatch/scorer.hpp"

namespace tfpatch::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Re-raises with the stage name so the user can tell where a pipeline stopped.
template <typename Fn>
auto stage(std::string_view name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), fmt::format("[{}] {}", name, e.what()));
    }
}

std::string read_file(const fs::path& path) {
    require_file(path.string(), "input");
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(Errc::io, fmt::format("cannot write {}", path.string()));
}

std::string header_line(const RunConfig& config) {
    return fmt::format("tfpatch {} config_hash={}", kToolVersion, config_hash(config));
}

std::optional<ojson> read_sidecar(const fs::path& dataset) {
    const fs::path meta = dataset.string() + ".meta.json";
    if (!fs::exists(meta)) return std::nullopt;
    try {
        return ojson::parse(read_file(meta));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ingestion, fmt::format("{}: {}", meta.string(), e.what()));
    }
}

struct Engine {
    Model model;
    std::shared_ptr<const Tokenizer> tokenizer;
};

Engine load_engine(const RunConfig& config, TokenizerMode mode) {
    require_file(config.weights, "weights");
    require_file(config.vocab, "vocab");
    auto model = load_weights_file(config.weights);
    auto vocab = Vocabulary::load(config.vocab);
    if (vocab.size() != model.config().vocab_size) {
        throw Error(Errc::config, fmt::format("vocab has {} tokens but the model expects {}", vocab.size(),
                                              model.config().vocab_size));
    }
    auto tokenizer = std::make_shared<const Tokenizer>(std::move(vocab), mode, model.config().max_positions);
    return {std::move(model), std::move(tokenizer)};
}

struct LoadedDataset {
    fs::path path;
    Dataset data;
    std::string hash;
    std::optional<ojson> meta;
};

LoadedDataset load_dataset(const fs::path& path) {
    LoadedDataset d;
    d.path = path;
    d.hash = fnv1a_hex(read_file(path));
    d.data = read_dataset(path);
    d.meta = read_sidecar(path);
    return d;
}

ojson dataset_metadata(const RunConfig& config, const LoadedDataset& d) {
    ojson m;
    m["tool_version"] = kToolVersion;
    m["config_hash"] = config_hash(config);
    m["dataset"] = d.path.filename().string();
    m["dataset_hash"] = d.hash;
    m["dataset_config_hash"] = d.meta ? d.meta->value("config_hash", "") : "";
    if (!d.data.instances.empty()) {
        m["kind"] = to_string(d.data.instances.front().kind);
        m["k"] = d.data.instances.front().k;
    }
    return m;
}

void write_grid(const fs::path& stem, HeatmapGrid grid, const ojson& metadata, std::string_view split) {
    for (const auto& [key, v] : metadata.items()) grid.metadata[key] = v;
    grid.metadata["split"] = split;
    const std::vector<std::string> comments = {fmt::format(
        "tfpatch {} config_hash={} dataset_hash={} site={} split={} aggregation={}", kToolVersion,
        metadata["config_hash"].get<std::string>(), metadata["dataset_hash"].get<std::string>(), grid.site_kind,
        split, grid.metadata["aggregation"].get<std::string>())};
    write_file(stem.string() + ".csv", to_csv(grid, comments));
    write_file(stem.string() + ".json", to_json(grid).dump(2) + "\n");
}

std::vector<DiagnosticInstance> subset(const std::vector<DiagnosticInstance>& all, const std::vector<std::size_t>& idx) {
    std::vector<DiagnosticInstance> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(all[i]);
    return out;
}

Scorer analysis_scorer(const RunConfig& config, TokenizerMode mode, std::optional<Corpus>& corpus_holder) {
    if (config.scorer == "bm25") {
        require_file(config.corpus, "corpus");
        corpus_holder = ingest_corpus(config.corpus, mode);
        return make_bm25_scorer(*corpus_holder);
    }
    auto engine = load_engine(config, mode);
    return make_neural_scorer(engine.model, engine.tokenizer);
}

std::pair<std::size_t, std::size_t> parse_head(const std::string& text) {
    const auto dot = text.find('.');
    return {std::stoul(text.substr(0, dot)), std::stoul(text.substr(dot + 1))};
}

std::vector<Point> read_points(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::vector<Point> points;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#' || line.rfind("x,", 0) == 0) continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("missing comma");
            std::size_t used = 0;
            Point p;
            p.x = std::stod(line.substr(0, comma), &used);
            p.y = std::stod(line.substr(comma + 1));
            points.push_back(p);
        } catch (const std::exception&) {
            throw Error(Errc::ingestion, fmt::format("{}:{}: expected 'x,y'", path.string(), lineno));
        }
    }
    return points;
}

ojson fit_report(std::span<const Point> points, std::string_view context) {
    ojson j;
    auto& pts = j["points"] = ojson::array();
    for (const auto& p : points) pts.push_back({{"x", p.x}, {"y", p.y}});
    LogFit fit;
    try {
        fit = fit_log(points);
    } catch (const Error& e) {
        throw Error(e.code(), fmt::format("fit of {}: {}", context, e.what()));
    }
    double lo = points.front().x;
    double hi = lo;
    for (const auto& p : points) {
        lo = std::min(lo, p.x);
        hi = std::max(hi, p.x);
    }
    j["fit"] = to_json(fit);
    j["sublinear"] = check_sublinear(fit, lo, hi);
    if (points.size() >= 3) {
        j["observed_sublinear"] = check_sublinear(points);
    } else {
        j["observed_sublinear"] = nullptr;
    }
    return j;
}

}  // namespace

int exit_code(Errc code) noexcept {
    switch (code) {
        case Errc::config:
        case Errc::spec:
        case Errc::hash_mismatch:
        case Errc::io: return 2;
        case Errc::domain:
        case Errc::undefined_r2:
        case Errc::degenerate: return 4;
        default: return 3;
    }
}

int cmd_generate(const RunConfig& config, std::ostream& out) {
    const auto mode = parse_tokenizer_mode(config.tokenizer_mode);
    require_file(config.corpus, "corpus");
    require_file(config.queries, "queries");
    const auto corpus = stage("ingest", [&] { return ingest_corpus(config.corpus, mode); });
    const auto queries = stage("ingest", [&] { return read_queries(config.queries); });

    std::optional<Engine> engine;
    std::shared_ptr<const Tokenizer> tokenizer;
    Scorer scorer;
    if (config.scorer == "neural") {
        engine = stage("load", [&] { return load_engine(config, mode); });
        tokenizer = engine->tokenizer;
        scorer = make_neural_scorer(engine->model, tokenizer);
    } else {
        require_file(config.vocab, "vocab");
        auto vocab = stage("load", [&] { return Vocabulary::load(config.vocab); });
        tokenizer = std::make_shared<const Tokenizer>(std::move(vocab), mode, config.max_positions);
        scorer = stage("ingest", [&] { return make_bm25_scorer(corpus); });
    }

    const auto hash = config_hash(config);
    for (const auto& kind_name : config.kinds) {
        const auto kind = parse_perturbation_kind(kind_name);
        const bool tfc2 = kind == PerturbationKind::tfc2_inject;
        SelectionOptions opts;
        opts.top_k = config.top_k;
        opts.num_queries = config.num_queries;
        opts.workers = config.workers;
        opts.spec = {kind, 0};
        if (tfc2) {
            opts.spec = config.tfc2_selection == "inherit"
                            ? PerturbationSpec{PerturbationKind::tfc1_inject_append, 0}
                            : PerturbationSpec{kind, config.k_min};
        }
        const auto selections =
            stage("select", [&] { return select_queries(queries, corpus, scorer, scorer, *tokenizer, opts); });

        const std::size_t k_lo = tfc2 ? config.k_min : 0;
        const std::size_t k_hi = tfc2 ? config.k_max : 0;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            GenerationStats stats;
            const PerturbationSpec spec{kind, k};
            const auto instances =
                stage("perturb", [&] { return build_instances(selections, corpus, spec, *tokenizer, &stats); });
            std::size_t degenerate = 0;
            if (engine) {
                const auto gaps = parallel_map(instances.size(), config.workers, [&](std::size_t i) {
                    return scorer(instances[i].query_text, instances[i].perturbed_text) -
                           scorer(instances[i].query_text, instances[i].baseline_text);
                });
                for (double g : gaps) degenerate += std::abs(g) < config.delta ? 1 : 0;
            }

            const auto name = tfc2 ? fmt::format("{}_k{}.jsonl", kind_name, k) : fmt::format("{}.jsonl", kind_name);
            const fs::path path = fs::path(config.out_dir) / name;
            const auto content = format_dataset(instances, mode);
            ojson meta;
            meta["tool_version"] = kToolVersion;
            meta["config_hash"] = hash;
            meta["dataset_hash"] = fnv1a_hex(content);
            meta["kind"] = kind_name;
            meta["k"] = k;
            meta["tokenizer_mode"] = to_string(mode);
            meta["queries"] = selections.size();
            meta["instances"] = stats.instances;
            meta["no_op"] = stats.no_op;
            meta["skipped_length"] = stats.skipped_length;
            if (engine) meta["degenerate"] = degenerate;
            stage("write", [&] {
                write_file(path, content);
                write_file(path.string() + ".meta.json", meta.dump(2) + "\n");
            });
            fmt::print(out, "{}: {} instances from {} queries, {} no_op, {} skipped for length", path.string(),
                       stats.instances, selections.size(), stats.no_op, stats.skipped_length);
            if (engine) fmt::print(out, ", {} degenerate", degenerate);
            fmt::print(out, "\n");
        }
    }
    return 0;
}

int cmd_rank(const RunConfig& config, std::ostream& out) {
    const auto mode = parse_tokenizer_mode(config.tokenizer_mode);
    require_file(config.corpus, "corpus");
    require_file(config.queries, "queries");
    const auto corpus = stage("ingest", [&] { return ingest_corpus(config.corpus, mode); });
    const auto queries = stage("ingest", [&] { return read_queries(config.queries); });
    std::optional<Corpus> holder;
    const auto scorer = stage("load", [&] {
        if (config.scorer == "bm25") return make_bm25_scorer(corpus);
        return analysis_scorer(config, mode, holder);
    });
    const auto ranked = stage("rank", [&] {
        return parallel_map(queries.size(), config.workers,
                            [&](std::size_t i) { return rank_documents(scorer, queries[i].text, corpus, config.top_k); });
    });
    std::string csv = fmt::format("# {}\nquery_id,rank,doc_id,score\n", header_line(config));
    for (std::size_t q = 0; q < queries.size(); ++q) {
        for (std::size_t r = 0; r < ranked[q].size(); ++r) {
            csv += fmt::format("{},{},{},{:.17g}\n", queries[q].id, r + 1, ranked[q][r].doc_id, ranked[q][r].score);
        }
    }
    const auto path = fs::path(config.out_dir) / "ranking.csv";
    stage("write", [&] { write_file(path, csv); });
    fmt::print(out, "{}: {} queries ranked\n", path.string(), queries.size());
    return 0;
}

int cmd_patch(const RunConfig& config, std::ostream& out) {
    if (config.inputs.empty()) throw Error(Errc::config, "patch needs at least one dataset input");
    require_file(config.weights, "weights");
    require_file(config.vocab, "vocab");
    for (const auto& in : config.inputs) require_file(in, "dataset");
    SweepOptions options{config.delta, config.workers, config.absolute};
    for (const auto& input : config.inputs) {
        const auto d = stage("ingest", [&] { return load_dataset(input); });
        const auto engine = stage("load", [&] { return load_engine(config, d.data.mode); });
        const auto metadata = dataset_metadata(config, d);
        const auto base = fs::path(config.out_dir) / d.path.stem();
        const auto& instances = d.data.instances;

        if (config.mode == "blocks") {
            for (auto site : {SiteKind::resid_pre, SiteKind::attn_out, SiteKind::mlp_out}) {
                auto grid = stage("patch", [&] {
                    return block_sweep(engine.model, *engine.tokenizer, instances, site, options);
                });
                const auto stem = fs::path(base.string() + fmt::format("_blocks_{}", to_string(site)));
                stage("write", [&] { write_grid(stem, std::move(grid), metadata, "all"); });
                fmt::print(out, "{}.csv\n", stem.string());
            }
            continue;
        }

        const auto scores =
            stage("rank", [&] { return baseline_scores(engine.model, *engine.tokenizer, instances, config.workers); });
        const auto split = stage("split", [&] { return split_by_rank(instances, scores, config.fraction); });
        const std::vector<std::pair<std::string, std::vector<DiagnosticInstance>>> parts = {
            {"all", instances}, {"top", subset(instances, split.top)}, {"bottom", subset(instances, split.bottom)}};
        for (const auto& [name, part] : parts) {
            auto grid = stage("patch", [&] { return head_sweep(engine.model, *engine.tokenizer, part, options); });
            grid.metadata["fraction"] = config.fraction;
            const auto stem = fs::path(base.string() + "_heads_" + name);
            stage("write", [&] { write_grid(stem, std::move(grid), metadata, name); });
            fmt::print(out, "{}.csv\n", stem.string());
        }
    }
    return 0;
}

int cmd_attn(const RunConfig& config, std::ostream& out) {
    if (config.inputs.empty()) throw Error(Errc::config, "attn needs at least one dataset input");
    require_file(config.weights, "weights");
    require_file(config.vocab, "vocab");
    for (const auto& in : config.inputs) require_file(in, "dataset");
    const auto source = parse_token_class(config.source_class);
    for (const auto& input : config.inputs) {
        const auto d = stage("ingest", [&] { return load_dataset(input); });
        const auto engine = stage("load", [&] { return load_engine(config, d.data.mode); });
        const auto& instances = d.data.instances;
        validate_site(engine.model.config(), {SiteKind::head_out, config.layer, config.head});

        const auto dists = stage("attn", [&] {
            return parallel_map(instances.size(), config.workers, [&](std::size_t i) -> std::optional<ClassDistribution> {
                const auto prepared = prepare_instance(*engine.tokenizer, instances[i]);
                if (std::find(prepared.classes.begin(), prepared.classes.end(), source) == prepared.classes.end()) {
                    return std::nullopt;
                }
                return attention_to_classes(engine.model, *engine.tokenizer, instances[i], config.layer, config.head,
                                            source);
            });
        });
        ClassDistribution mean{};
        std::size_t used = 0;
        for (const auto& dist : dists) {
            if (!dist) continue;
            ++used;
            for (std::size_t c = 0; c < kNumTokenClasses; ++c) mean[c] += (*dist)[c];
        }
        if (used == 0) {
            throw Error(Errc::degenerate,
                        fmt::format("[attn] no instance in {} has {} tokens", input, to_string(source)));
        }
        auto j = dataset_metadata(config, d);
        j["layer"] = config.layer;
        j["head"] = config.head;
        j["source_class"] = to_string(source);
        j["instances"] = used;
        j["skipped"] = instances.size() - used;
        j["aggregation"] = "per instance: average source rows, then sum mass per class; mean over instances";
        auto& mass = j["mass"] = ojson::object();
        for (std::size_t c = 0; c < kNumTokenClasses; ++c) {
            mass[std::string(to_string(kAllTokenClasses[c]))] = mean[c] / static_cast<double>(used);
        }
        const auto path = fs::path(config.out_dir) /
                          fmt::format("{}_attn_L{}_H{}.json", d.path.stem().string(), config.layer, config.head);
        stage("write", [&] { write_file(path, j.dump(2) + "\n"); });
        fmt::print(out, "{}\n", path.string());
    }
    return 0;
}

int cmd_analyze(const RunConfig& config, std::ostream& out) {
    if (config.inputs.empty()) throw Error(Errc::config, "analyze needs dataset (.jsonl) or grid (.json) inputs");
    for (const auto& in : config.inputs) require_file(in, "input");

    std::vector<LoadedDataset> datasets;
    std::vector<std::pair<fs::path, ojson>> grids;
    std::set<std::string> dataset_hashes;
    std::set<std::string> grid_hashes;
    for (const auto& input : config.inputs) {
        const fs::path path(input);
        if (path.extension() == ".jsonl") {
            datasets.push_back(stage("ingest", [&] { return load_dataset(path); }));
            if (datasets.back().meta) dataset_hashes.insert(datasets.back().meta->value("config_hash", ""));
        } else {
            ojson g;
            try {
                g = ojson::parse(read_file(path));
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::ingestion, fmt::format("[ingest] {}: {}", input, e.what()));
            }
            if (!g.contains("metadata") || !g.contains("values")) {
                throw Error(Errc::ingestion, fmt::format("[ingest] {} is not a grid file", input));
            }
            dataset_hashes.insert(g["metadata"].value("dataset_config_hash", ""));
            grid_hashes.insert(g["metadata"].value("config_hash", ""));
            grids.emplace_back(path, std::move(g));
        }
    }
    // Datasets must come from one generation config, grids from one patch config.
    for (auto* set : {&dataset_hashes, &grid_hashes}) {
        set->erase("");
        if (set->size() <= 1 || config.force) continue;
        std::string list;
        for (const auto& h : *set) list += (list.empty() ? "" : ", ") + h;
        throw Error(Errc::hash_mismatch,
                    fmt::format("[analyze] inputs come from different configs ({}); pass --force to combine them",
                                list));
    }

    ojson report;
    report["tool_version"] = kToolVersion;
    report["config_hash"] = config_hash(config);
    report["dataset_config_hashes"] = dataset_hashes;
    report["grid_config_hashes"] = grid_hashes;
    report["scorer"] = config.scorer;

    std::vector<DiagnosticInstance> all;
    std::string gaps_csv = fmt::format("# {}\nk,gap\n", header_line(config));
    if (!datasets.empty()) {
        std::optional<Corpus> corpus;
        const auto scorer =
            stage("load", [&] { return analysis_scorer(config, datasets.front().data.mode, corpus); });
        auto& per_file = report["adherence"] = ojson::array();
        for (const auto& d : datasets) {
            const auto r = stage("adherence", [&] { return tfc1_adherence(d.data.instances, scorer); });
            per_file.push_back({{"dataset", d.path.filename().string()}, {"report", to_json(r)}});
            all.insert(all.end(), d.data.instances.begin(), d.data.instances.end());
        }
        report["adherence_combined"] = to_json(tfc1_adherence(all, scorer));

        std::vector<DiagnosticInstance> tfc2;
        for (const auto& in : all) {
            if (in.kind == PerturbationKind::tfc2_inject) tfc2.push_back(in);
        }
        if (!tfc2.empty()) {
            std::map<std::size_t, std::pair<double, std::size_t>> sums;
            std::size_t ladders = 0;
            std::size_t decreasing = 0;
            for (const auto& [key, ladder] : group_ladders(tfc2)) {
                if (ladder.size() < 3) continue;
                const auto series = stage("gaps", [&] { return tfc2_gap_check(ladder, scorer); });
                ++ladders;
                decreasing += series.decreasing ? 1 : 0;
                for (std::size_t i = 0; i < series.k.size(); ++i) {
                    sums[series.k[i]].first += series.gaps[i];
                    ++sums[series.k[i]].second;
                }
            }
            auto& g = report["tfc2_gaps"];
            g["ladders"] = ladders;
            g["ladders_decreasing"] = decreasing;
            auto& mean = g["mean_gap_by_k"] = ojson::array();
            std::vector<double> means;
            for (const auto& [k, s] : sums) {
                const double m = s.first / static_cast<double>(s.second);
                means.push_back(m);
                mean.push_back({{"k", k}, {"gap", m}});
                gaps_csv += fmt::format("{},{:.17g}\n", k, m);
            }
            bool strictly = means.size() >= 2;
            for (std::size_t i = 1; i < means.size(); ++i) strictly = strictly && means[i] < means[i - 1];
            g["mean_gaps_decreasing"] = strictly;
        }
    }

    if (!grids.empty() && !config.head_group.empty()) {
        std::map<std::string, std::map<std::size_t, double>> series;
        for (const auto& [path, g] : grids) {
            const auto& meta = g["metadata"];
            if (g.value("site_kind", "") != "head_out" || !meta.contains("k")) continue;
            const auto k = meta["k"].get<std::size_t>();
            const auto split = meta.value("split", "all");
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& h : config.head_group) {
                const auto [l, hd] = parse_head(h);
                const auto& values = g["values"];
                if (l >= values.size() || hd >= values[l].size()) {
                    throw Error(Errc::config, fmt::format("[analyze] head {} is outside grid {}", h, path.string()));
                }
                if (values[l][hd].is_null()) continue;
                sum += std::abs(values[l][hd].get<double>());
                ++n;
            }
            if (n == 0) continue;
            if (series[split].contains(k)) {
                throw Error(Errc::ingestion, fmt::format("[analyze] two {} grids for K = {}", split, k));
            }
            series[split][k] = sum / static_cast<double>(n);
        }
        auto& hi = report["head_impact"];
        hi["group"] = config.head_group;
        hi["x"] = "k + 1 (term copies in the perturbed document)";
        auto& by_split = hi["splits"] = ojson::object();
        for (const auto& [split, byk] : series) {
            std::vector<Point> points;
            for (const auto& [k, y] : byk) points.push_back({static_cast<double>(k) + 1.0, y});
            if (points.size() < 2) continue;
            by_split[split] = fit_report(points, fmt::format("head impact ({} split)", split));
        }
    }

    const auto dir = fs::path(config.out_dir);
    stage("write", [&] {
        write_file(dir / "analysis.json", report.dump(2) + "\n");
        if (report.contains("tfc2_gaps")) write_file(dir / "gaps.csv", gaps_csv);
    });
    fmt::print(out, "{}\n", (dir / "analysis.json").string());
    if (report.contains("adherence_combined")) {
        fmt::print(out, "adherence {:.6f} over {} pairs\n", report["adherence_combined"]["fraction"].get<double>(),
                   report["adherence_combined"]["total_pairs"].get<std::size_t>());
    }
    return 0;
}

int cmd_fit(const RunConfig& config, std::ostream& out) {
    if (config.inputs.empty()) throw Error(Errc::config, "fit needs at least one x,y CSV input");
    for (const auto& in : config.inputs) require_file(in, "points");
    for (const auto& input : config.inputs) {
        const fs::path path(input);
        const auto points = stage("ingest", [&] { return read_points(path); });
        auto j = stage("fit", [&] { return fit_report(points, path.filename().string()); });
        ojson report;
        report["tool_version"] = kToolVersion;
        report["config_hash"] = config_hash(config);
        report["input"] = path.filename().string();
        for (auto& [k, v] : j.items()) report[k] = v;
        const auto dest = fs::path(config.out_dir) / (path.stem().string() + "_fit.json");
        stage("write", [&] { write_file(dest, report.dump(2) + "\n"); });
        const auto& f = report["fit"];
        fmt::print(out, "{}: a={:.6g} b={:.6g} r2={:.6g} sublinear={}\n", dest.string(), f["a"].get<double>(),
                   f["b"].get<double>(), f["r2"].get<double>(), report["sublinear"].get<bool>());
    }
    return 0;
}

int cmd_export_fixture(const RunConfig& config, std::ostream& out) {
    const auto dir = fs::path(config.out_dir);
    auto vocab = config.vocab.empty() ? fixture_vocabulary()
                                      : stage("load", [&] { return Vocabulary::load(config.vocab); });
    auto model_config = fixture_config(config.num_layers, config.num_heads, config.head_dim, vocab.size(),
                                       config.max_positions);
    model_config.norm_style = config.norm_style == "pre" ? NormStyle::pre : NormStyle::post;
    const auto manifest = random_manifest(model_config, config.seed);

    std::string corpus;
    for (const auto& [id, text] : fixture_corpus(config.num_docs, config.seed)) corpus += id + "\t" + text + "\n";
    std::string queries;
    for (const auto& q : fixture_queries(config.fixture_queries, config.seed)) queries += q.id + "\t" + q.text + "\n";

    stage("write", [&] {
        std::error_code ec;
        fs::create_directories(dir, ec);
        save_weights_file(manifest, dir / "model.apwm");
        vocab.save(dir / "vocab.txt");
        write_file(dir / "corpus.tsv", corpus);
        write_file(dir / "queries.tsv", queries);
    });
    fmt::print(out, "{}: {} layers, {} heads, dim {}, vocab {}\n", (dir / "model.apwm").string(),
               model_config.num_layers, model_config.num_heads, model_config.model_dim, model_config.vocab_size);
    return 0;
}

namespace {

// Flags are parsed into a scratch config and copied over the file config only
// when given, so the precedence is defaults < config file < flags.
struct Bindings {
    RunConfig flags;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>> items;

    template <typename T>
    void add(CLI::App* app, const std::string& name, T RunConfig::*member, const std::string& help) {
        CLI::Option* opt = nullptr;
        if constexpr (std::is_same_v<T, bool>) {
            opt = app->add_flag(name, flags.*member, help);
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            opt = app->add_option(name, flags.*member, help);
            // One value per occurrence (or a comma list) so options never swallow positionals.
            if (name.rfind("inputs", 0) != 0) opt->allow_extra_args(false)->delimiter(',');
        } else {
            opt = app->add_option(name, flags.*member, help)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
        items.emplace_back(opt, [member](RunConfig& dst, const RunConfig& src) { dst.*member = src.*member; });
    }

    void apply(RunConfig& dst) const {
        for (const auto& [opt, copy] : items) {
            if (opt->count() > 0) copy(dst, flags);
        }
    }
};

struct Subcommand {
    CLI::App* app;
    std::function<int(const RunConfig&, std::ostream&)> fn;
    Bindings bindings;
    std::string config_path;
};

void add_common(Subcommand& s) {
    s.app->add_option("--config", s.config_path, "JSON config file");
    s.bindings.add(s.app, "-o,--out-dir", &RunConfig::out_dir, "Output directory");
    s.bindings.add(s.app, "-j,--workers", &RunConfig::workers, "Worker threads");
}

void add_text_inputs(Subcommand& s) {
    s.bindings.add(s.app, "--corpus", &RunConfig::corpus, "Corpus TSV or JSONL");
    s.bindings.add(s.app, "--queries", &RunConfig::queries, "Queries TSV");
    s.bindings.add(s.app, "--vocab", &RunConfig::vocab, "Vocabulary file");
    s.bindings.add(s.app, "--weights", &RunConfig::weights, "Weight manifest");
    s.bindings.add(s.app, "--tokenizer-mode", &RunConfig::tokenizer_mode, "wordpiece or whitespace");
    s.bindings.add(s.app, "--scorer", &RunConfig::scorer, "bm25 or neural");
    s.bindings.add(s.app, "--top-k", &RunConfig::top_k, "Documents per query");
}

void add_model_inputs(Subcommand& s) {
    s.bindings.add(s.app, "--vocab", &RunConfig::vocab, "Vocabulary file");
    s.bindings.add(s.app, "--weights", &RunConfig::weights, "Weight manifest");
    s.bindings.add(s.app, "inputs,--input", &RunConfig::inputs, "Input files");
    s.bindings.add(s.app, "--delta", &RunConfig::delta, "Degeneracy threshold");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Activation patching workbench for term-frequency axioms", "tfpatch"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    std::vector<std::unique_ptr<Subcommand>> subs;
    auto make = [&](const char* name, const char* help, auto fn) -> Subcommand& {
        auto s = std::make_unique<Subcommand>();
        s->app = app.add_subcommand(name, help);
        s->fn = fn;
        add_common(*s);
        subs.push_back(std::move(s));
        return *subs.back();
    };

    auto& gen = make("generate", "Build diagnostic datasets (one JSONL per kind and K)", cmd_generate);
    add_text_inputs(gen);
    gen.bindings.add(gen.app, "--kind", &RunConfig::kinds, "Perturbation kinds");
    gen.bindings.add(gen.app, "--k-min", &RunConfig::k_min, "Smallest K for tfc2_inject");
    gen.bindings.add(gen.app, "--k-max", &RunConfig::k_max, "Largest K for tfc2_inject");
    gen.bindings.add(gen.app, "--num-queries", &RunConfig::num_queries, "Queries to keep");
    gen.bindings.add(gen.app, "--tfc2-selection", &RunConfig::tfc2_selection, "inherit or native");
    gen.bindings.add(gen.app, "--max-positions", &RunConfig::max_positions, "Token limit without weights");
    gen.bindings.add(gen.app, "--delta", &RunConfig::delta, "Degeneracy threshold");

    auto& rank = make("rank", "Rank corpus documents for every query", cmd_rank);
    add_text_inputs(rank);

    auto& patch = make("patch", "Run patching sweeps over datasets", cmd_patch);
    add_model_inputs(patch);
    patch.bindings.add(patch.app, "--mode", &RunConfig::mode, "blocks or heads");
    patch.bindings.add(patch.app, "--fraction", &RunConfig::fraction, "Top/bottom split fraction");
    patch.bindings.add(patch.app, "--absolute", &RunConfig::absolute, "Average |normalized| per cell");

    auto& attn = make("attn", "Attention mass from one token class to all classes", cmd_attn);
    add_model_inputs(attn);
    attn.bindings.add(attn.app, "--layer", &RunConfig::layer, "Layer");
    attn.bindings.add(attn.app, "--head", &RunConfig::head, "Head");
    attn.bindings.add(attn.app, "--source-class", &RunConfig::source_class, "Source token class");

    auto& analyze = make("analyze", "Adherence, TFC2 gaps and head-impact fits", cmd_analyze);
    add_model_inputs(analyze);
    analyze.bindings.add(analyze.app, "--corpus", &RunConfig::corpus, "Corpus for the bm25 scorer");
    analyze.bindings.add(analyze.app, "--scorer", &RunConfig::scorer, "bm25 or neural");
    analyze.bindings.add(analyze.app, "--head-group", &RunConfig::head_group, "Heads as layer.head");
    analyze.bindings.add(analyze.app, "--force", &RunConfig::force, "Combine inputs with different config hashes");

    auto& fit = make("fit", "Fit a*ln(x)+b to x,y CSV series", cmd_fit);
    fit.bindings.add(fit.app, "inputs,--input", &RunConfig::inputs, "Input CSV files");

    auto& fixture = make("export-fixture", "Write a random tiny model, vocabulary and toy corpus", cmd_export_fixture);
    fixture.bindings.add(fixture.app, "--vocab", &RunConfig::vocab, "Use this vocabulary instead of the built-in one");
    fixture.bindings.add(fixture.app, "--seed", &RunConfig::seed, "Random seed");
    fixture.bindings.add(fixture.app, "--layers", &RunConfig::num_layers, "Layers");
    fixture.bindings.add(fixture.app, "--heads", &RunConfig::num_heads, "Heads per layer");
    fixture.bindings.add(fixture.app, "--head-dim", &RunConfig::head_dim, "Head dimension");
    fixture.bindings.add(fixture.app, "--max-positions", &RunConfig::max_positions, "Position limit");
    fixture.bindings.add(fixture.app, "--norm-style", &RunConfig::norm_style, "post or pre");
    fixture.bindings.add(fixture.app, "--num-docs", &RunConfig::num_docs, "Toy corpus size");
    fixture.bindings.add(fixture.app, "--num-queries", &RunConfig::fixture_queries, "Toy query count");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_code(Errc::config);
    }

    for (auto& s : subs) {
        if (!s->app->parsed()) continue;
        const auto name = s->app->get_name();
        try {
            RunConfig config = s->config_path.empty() ? RunConfig{} : load_config(s->config_path);
            s->bindings.apply(config);
            config.validate();
            return s->fn(config, out);
        } catch (const Error& e) {
            fmt::print(err, "tfpatch {}: {} error: {}\n", name, errc_name(e.code()), e.what());
            return exit_code(e.code());
        } catch (const std::exception& e) {
            fmt::print(err, "tfpatch {}: internal error: {}\n", name, e.what());
            return 1;
        }
    }
    return exit_code(Errc::config);
}

}  // namespace tfpatch::cli
