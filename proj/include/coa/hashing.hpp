#pragma once

#include <string>
#include <string_view>

namespace coa {

// Lowercase hex SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
// Throws ProtocolError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace coa
