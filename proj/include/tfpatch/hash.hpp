#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace tfpatch {

/// 64-bit FNV-1a. Used for content fingerprints in output metadata, not for security.
class Fnv1a {
  public:
    void update(std::span<const std::byte> bytes) noexcept {
        for (auto b : bytes) {
            state_ ^= static_cast<std::uint8_t>(b);
            state_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view text) noexcept { update(std::as_bytes(std::span(text.data(), text.size()))); }

    std::uint64_t digest() const noexcept { return state_; }
    std::string hex() const;

  private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string fnv1a_hex(std::string_view text);

}  // namespace tfpatch
