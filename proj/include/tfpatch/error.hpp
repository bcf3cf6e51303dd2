#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tfpatch {

/// Error categories raised by the library. The CLI maps them onto exit codes.
enum class Errc {
    config,          // bad configuration, unresolvable paths, bad vocabulary
    length,          // token sequence longer than max_positions
    load_magic,
    load_shape,
    load_missing,
    load_non_finite,
    load_truncated,
    load_format,     // unparseable manifest header
    spec,            // invalid SiteId / PatchSpec
    alignment,       // baseline/perturbed/cache token lengths disagree
    ingestion,       // corpus, query or dataset file is malformed
    empty_corpus,
    selection,       // no candidate query term survives filtering
    classification,  // injected positions not found in an instance
    domain,          // x <= 0 for a log fit, too few points, too few docs per query
    undefined_r2,    // constant series
    degenerate,      // nothing left after excluding degenerate instances
    hash_mismatch,
    io,              // file missing or unwritable
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
  public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

    Errc code() const noexcept { return code_; }

  private:
    Errc code_;
};

}  // namespace tfpatch
