#include "tfpatch/instance.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "tfpatch/error.hpp"

namespace tfpatch {

using json = nlohmann::ordered_json;

std::string_view to_string(PerturbationKind kind) noexcept {
    switch (kind) {
        case PerturbationKind::tfc1_inject_append: return "tfc1_inject_append";
        case PerturbationKind::tfc1_inject_prepend: return "tfc1_inject_prepend";
        case PerturbationKind::tfc1_replace: return "tfc1_replace";
        case PerturbationKind::tfc2_inject: return "tfc2_inject";
    }
    return "unknown";
}

PerturbationKind parse_perturbation_kind(std::string_view text) {
    for (auto kind : {PerturbationKind::tfc1_inject_append, PerturbationKind::tfc1_inject_prepend,
                      PerturbationKind::tfc1_replace, PerturbationKind::tfc2_inject}) {
        if (text == to_string(kind)) return kind;
    }
    throw Error(Errc::config, fmt::format("unknown perturbation kind '{}'", text));
}

std::string_view to_string(TokenClass cls) noexcept {
    switch (cls) {
        case TokenClass::cls: return "tok_CLS";
        case TokenClass::inj: return "tok_inj";
        case TokenClass::qterm_plus: return "tok_qterm_plus";
        case TokenClass::qterm_minus: return "tok_qterm_minus";
        case TokenClass::other: return "tok_other";
        case TokenClass::sep: return "tok_SEP";
    }
    return "unknown";
}

TokenClass parse_token_class(std::string_view text) {
    for (auto cls : kAllTokenClasses) {
        if (text == to_string(cls)) return cls;
    }
    throw Error(Errc::config, fmt::format("unknown token class '{}'", text));
}

json to_json(const DiagnosticInstance& in, TokenizerMode mode) {
    json j;
    j["query_id"] = in.query_id;
    j["query_text"] = in.query_text;
    j["doc_id"] = in.doc_id;
    j["perturbation"] = {{"kind", to_string(in.kind)}, {"term", in.term}, {"k", in.k}};
    j["baseline_text"] = in.baseline_text;
    j["perturbed_text"] = in.perturbed_text;
    if (in.kind == PerturbationKind::tfc1_replace) {
        j["replacements"] = in.replacements;
        j["no_op"] = in.no_op;
    }
    j["tokenizer_mode"] = to_string(mode);
    return j;
}

DiagnosticInstance instance_from_json(const json& j) {
    DiagnosticInstance in;
    in.query_id = j.at("query_id").get<std::string>();
    in.query_text = j.at("query_text").get<std::string>();
    in.doc_id = j.at("doc_id").get<std::string>();
    const auto& p = j.at("perturbation");
    in.kind = parse_perturbation_kind(p.at("kind").get<std::string>());
    in.term = p.at("term").get<std::string>();
    in.k = p.at("k").get<std::size_t>();
    in.baseline_text = j.at("baseline_text").get<std::string>();
    in.perturbed_text = j.at("perturbed_text").get<std::string>();
    in.replacements = j.value("replacements", std::size_t{0});
    in.no_op = j.value("no_op", false);
    return in;
}

std::string format_dataset(std::span<const DiagnosticInstance> instances, TokenizerMode mode) {
    std::string out;
    for (const auto& in : instances) {
        out += to_json(in, mode).dump();
        out += '\n';
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const DiagnosticInstance> instances,
                   TokenizerMode mode) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io, fmt::format("cannot write dataset '{}'", path.string()));
    out << format_dataset(instances, mode);
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, fmt::format("cannot open dataset '{}'", path.string()));
    Dataset ds;
    bool mode_seen = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            ds.instances.push_back(instance_from_json(j));
            auto mode = parse_tokenizer_mode(j.at("tokenizer_mode").get<std::string>());
            if (mode_seen && mode != ds.mode) {
                throw Error(Errc::ingestion, "mixed tokenizer modes in one dataset");
            }
            ds.mode = mode;
            mode_seen = true;
        } catch (const json::exception& e) {
            throw Error(Errc::ingestion, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        } catch (const Error& e) {
            throw Error(Errc::ingestion, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
        }
    }
    return ds;
}

}  // namespace tfpatch
