#include "cqr/text.hpp"

#include <algorithm>
#include <cctype>

#include "cqr/errors.hpp"

namespace cqr {

namespace {

#include "unicode_tables.inc"

constexpr uint32_t kHangulSBase = 0xAC00;
constexpr uint32_t kHangulLBase = 0x1100;
constexpr uint32_t kHangulVBase = 0x1161;
constexpr uint32_t kHangulTBase = 0x11A7;
constexpr uint32_t kHangulLCount = 19;
constexpr uint32_t kHangulVCount = 21;
constexpr uint32_t kHangulTCount = 28;
constexpr uint32_t kHangulNCount = kHangulVCount * kHangulTCount;
constexpr uint32_t kHangulSCount = kHangulLCount * kHangulNCount;

const DecompEntry* find_decomp(uint32_t cp) {
  auto it = std::lower_bound(std::begin(kDecomp), std::end(kDecomp), cp,
                             [](const DecompEntry& e, uint32_t v) { return e.cp < v; });
  return (it != std::end(kDecomp) && it->cp == cp) ? &*it : nullptr;
}

uint8_t combining_class(uint32_t cp) {
  auto it = std::lower_bound(std::begin(kCcc), std::end(kCcc), cp,
                             [](const CccEntry& e, uint32_t v) { return e.cp < v; });
  return (it != std::end(kCcc) && it->cp == cp) ? it->ccc : 0;
}

uint32_t compose_pair(uint32_t a, uint32_t b) {
  // Hangul LV / LVT composition is algorithmic.
  if (a >= kHangulLBase && a < kHangulLBase + kHangulLCount && b >= kHangulVBase &&
      b < kHangulVBase + kHangulVCount) {
    return kHangulSBase + ((a - kHangulLBase) * kHangulVCount + (b - kHangulVBase)) * kHangulTCount;
  }
  if (a >= kHangulSBase && a < kHangulSBase + kHangulSCount && (a - kHangulSBase) % kHangulTCount == 0 &&
      b > kHangulTBase && b < kHangulTBase + kHangulTCount) {
    return a + (b - kHangulTBase);
  }
  auto it = std::lower_bound(std::begin(kComp), std::end(kComp), std::pair<uint32_t, uint32_t>{a, b},
                             [](const CompEntry& e, const std::pair<uint32_t, uint32_t>& v) {
                               return e.a != v.first ? e.a < v.first : e.b < v.second;
                             });
  return (it != std::end(kComp) && it->a == a && it->b == b) ? it->composed : 0;
}

void decompose_into(uint32_t cp, std::vector<uint32_t>& out) {
  if (cp >= kHangulSBase && cp < kHangulSBase + kHangulSCount) {
    const uint32_t s = cp - kHangulSBase;
    out.push_back(kHangulLBase + s / kHangulNCount);
    out.push_back(kHangulVBase + (s % kHangulNCount) / kHangulTCount);
    if (s % kHangulTCount != 0) out.push_back(kHangulTBase + s % kHangulTCount);
    return;
  }
  if (const DecompEntry* e = find_decomp(cp)) {
    decompose_into(e->a, out);
    if (e->b != 0) decompose_into(e->b, out);
    return;
  }
  out.push_back(cp);
}

// Canonical ordering: stable exchange of adjacent marks with out-of-order
// combining classes (sequences of marks are short; bubble is fine).
void canonical_order(std::vector<uint32_t>& cps) {
  for (size_t i = 1; i < cps.size(); ++i) {
    const uint8_t c = combining_class(cps[i]);
    if (c == 0) continue;
    size_t j = i;
    while (j > 0 && combining_class(cps[j - 1]) > c) {
      std::swap(cps[j - 1], cps[j]);
      --j;
    }
  }
}

// Canonical composition over an NFD sequence.
std::vector<uint32_t> compose(const std::vector<uint32_t>& in) {
  std::vector<uint32_t> out;
  out.reserve(in.size());
  int last_starter = -1;
  uint8_t last_ccc = 0;
  for (uint32_t cp : in) {
    const uint8_t ccc = combining_class(cp);
    if (last_starter >= 0) {
      const bool blocked = (last_ccc != 0 && last_ccc >= ccc) ||
                           (ccc == 0 && static_cast<size_t>(last_starter) + 1 != out.size());
      if (!blocked) {
        if (uint32_t c = compose_pair(out[last_starter], cp)) {
          out[last_starter] = c;
          continue;
        }
      }
    }
    if (ccc == 0) {
      last_starter = static_cast<int>(out.size());
      last_ccc = 0;
    } else {
      last_ccc = ccc;
    }
    out.push_back(cp);
  }
  return out;
}

}  // namespace

std::vector<uint32_t> utf8_decode(const std::string& s) {
  std::vector<uint32_t> cps;
  cps.reserve(s.size());
  size_t i = 0;
  const auto bad = [&](size_t at) {
    throw DataError("invalid UTF-8 at byte offset " + std::to_string(at));
  };
  while (i < s.size()) {
    const unsigned char c = s[i];
    uint32_t cp = 0;
    int extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      cp = c & 0x1F;
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      cp = c & 0x0F;
      extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      bad(i);
    }
    if (i + extra >= s.size()) bad(i);
    for (int k = 1; k <= extra; ++k) {
      const unsigned char cc = s[i + k];
      if ((cc & 0xC0) != 0x80) bad(i + k);
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Reject overlong forms and surrogates.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      bad(i);
    }
    cps.push_back(cp);
    i += 1 + extra;
  }
  return cps;
}

std::string utf8_encode(const std::vector<uint32_t>& cps) {
  std::string s;
  s.reserve(cps.size());
  for (uint32_t cp : cps) {
    if (cp < 0x80) {
      s += static_cast<char>(cp);
    } else if (cp < 0x800) {
      s += static_cast<char>(0xC0 | (cp >> 6));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      s += static_cast<char>(0xE0 | (cp >> 12));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      s += static_cast<char>(0xF0 | (cp >> 18));
      s += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      s += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      s += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return s;
}

std::string to_nfc(const std::string& s) {
  std::vector<uint32_t> cps = utf8_decode(s);
  std::vector<uint32_t> nfd;
  nfd.reserve(cps.size());
  for (uint32_t cp : cps) decompose_into(cp, nfd);
  canonical_order(nfd);
  return utf8_encode(compose(nfd));
}

std::string normalize_text(const std::string& s) {
  const std::string nfc = to_nfc(s);
  std::string out;
  out.reserve(nfc.size());
  bool pending_space = false;
  for (char ch : nfc) {
    const unsigned char c = ch;
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += ch;
  }
  return out;
}

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : s) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
  }
  return out;
}

}  // namespace cqr
