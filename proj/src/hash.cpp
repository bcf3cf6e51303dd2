#include "tfpatch/hash.hpp"

#include <fmt/format.h>

namespace tfpatch {

std::string Fnv1a::hex() const { return fmt::format("{:016x}", state_); }

std::string fnv1a_hex(std::string_view text) {
    Fnv1a h;
    h.update(text);
    return h.hex();
}

}  // namespace tfpatch
