#ifndef CQR_TEXT_HPP
#define CQR_TEXT_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace cqr {

// Canonical ingestion normalization: UTF-8 validation, Unicode NFC,
// internal whitespace runs collapsed to single spaces, ends trimmed.
// Case is preserved. Throws DataError on invalid UTF-8.
std::string normalize_text(const std::string& s);

// NFC alone (exposed for tests).
std::string to_nfc(const std::string& s);

// Split on ASCII whitespace. Assumes normalized input but tolerates any.
std::vector<std::string> whitespace_tokens(const std::string& s);

std::string join_tokens(const std::vector<std::string>& tokens);

// Lowercases ASCII letters only; multibyte sequences pass through.
std::string ascii_lower(const std::string& s);

// UTF-8 <-> codepoints. decode throws DataError on malformed input.
std::vector<uint32_t> utf8_decode(const std::string& s);
std::string utf8_encode(const std::vector<uint32_t>& cps);

}  // namespace cqr

#endif
