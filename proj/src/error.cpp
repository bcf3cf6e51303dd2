#include "tfpatch/error.hpp"

namespace tfpatch {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::config: return "config";
        case Errc::length: return "length";
        case Errc::load_magic: return "load_magic";
        case Errc::load_shape: return "load_shape";
        case Errc::load_missing: return "load_missing";
        case Errc::load_non_finite: return "load_non_finite";
        case Errc::load_truncated: return "load_truncated";
        case Errc::load_format: return "load_format";
        case Errc::spec: return "spec";
        case Errc::alignment: return "alignment";
        case Errc::ingestion: return "ingestion";
        case Errc::empty_corpus: return "empty_corpus";
        case Errc::selection: return "selection";
        case Errc::classification: return "classification";
        case Errc::domain: return "domain";
        case Errc::undefined_r2: return "undefined_r2";
        case Errc::degenerate: return "degenerate";
        case Errc::hash_mismatch: return "hash_mismatch";
        case Errc::io: return "io";
    }
    return "unknown";
}

}  // namespace tfpatch
