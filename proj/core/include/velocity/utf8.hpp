#pragma once

#include <string>
#include <string_view>

namespace velocity::utf8 {

// Decodes UTF-8 into Unicode scalar values. Malformed sequences decode to
// U+FFFD, one per offending byte.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view scalars);
void append(std::string& out, char32_t scalar);

std::size_t length(std::string_view bytes);

}  // namespace velocity::utf8
