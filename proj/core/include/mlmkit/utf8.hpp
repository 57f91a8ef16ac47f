#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace mlmkit::utf8 {

inline constexpr char32_t kReplacement = U'\uFFFD';

struct Decoded {
    std::u32string text;
    std::size_t replacements = 0;  // invalid sequences replaced with U+FFFD
};

/// Decode UTF-8; each maximal invalid subpart becomes one U+FFFD.
Decoded decode(std::string_view bytes);

void append(std::string& out, char32_t cp);
std::string encode(std::u32string_view text);

/// Repair invalid sequences in place of decode+encode.
std::string sanitize(std::string_view bytes, std::size_t* replacements = nullptr);

/// Split valid UTF-8 into one string per Unicode scalar value.
std::vector<std::string> scalars(std::string_view text);

std::size_t length(std::string_view text);

}  // namespace mlmkit::utf8
