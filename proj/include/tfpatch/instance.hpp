#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tfpatch/tokenizer.hpp"

namespace tfpatch {

enum class PerturbationKind { tfc1_inject_append, tfc1_inject_prepend, tfc1_replace, tfc2_inject };

std::string_view to_string(PerturbationKind kind) noexcept;
PerturbationKind parse_perturbation_kind(std::string_view text);

/// A (baseline, perturbed) document pair that differs only by a controlled
/// term-frequency perturbation. Both texts tokenize to the same length.
struct DiagnosticInstance {
    std::string query_id;
    std::string query_text;
    std::string doc_id;
    PerturbationKind kind = PerturbationKind::tfc1_inject_append;
    std::string term;
    std::size_t k = 0;  // prior copies for tfc2_inject, 0 otherwise
    std::string baseline_text;
    std::string perturbed_text;
    // tfc1_replace only
    std::size_t replacements = 0;
    bool no_op = false;

    friend bool operator==(const DiagnosticInstance&, const DiagnosticInstance&) = default;
};

enum class TokenClass { cls, inj, qterm_plus, qterm_minus, other, sep };

inline constexpr std::size_t kNumTokenClasses = 6;
inline constexpr std::array<TokenClass, kNumTokenClasses> kAllTokenClasses = {
    TokenClass::cls, TokenClass::inj, TokenClass::qterm_plus, TokenClass::qterm_minus, TokenClass::other,
    TokenClass::sep};

/// "tok_CLS", "tok_inj", "tok_qterm_plus", "tok_qterm_minus", "tok_other", "tok_SEP".
std::string_view to_string(TokenClass cls) noexcept;
TokenClass parse_token_class(std::string_view text);

nlohmann::ordered_json to_json(const DiagnosticInstance& instance, TokenizerMode mode);
DiagnosticInstance instance_from_json(const nlohmann::ordered_json& j);

/// One JSON object per line. Returns the serialized bytes so callers can hash them.
std::string format_dataset(std::span<const DiagnosticInstance> instances, TokenizerMode mode);
void write_dataset(const std::filesystem::path& path, std::span<const DiagnosticInstance> instances,
                   TokenizerMode mode);

struct Dataset {
    std::vector<DiagnosticInstance> instances;
    TokenizerMode mode = TokenizerMode::wordpiece;
};

/// Throws Errc::io when missing and Errc::ingestion (with line number) on bad lines.
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace tfpatch
