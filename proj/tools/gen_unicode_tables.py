#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc (canonical NFC data) from Python's unicodedata.

Run from the repo root:  python3 tools/gen_unicode_tables.py > src/unicode_tables.inc
Hangul syllables are excluded; the C++ side handles them algorithmically.
"""
import sys
import unicodedata

HANGUL_BASE, HANGUL_END = 0xAC00, 0xD7A3


def main(out):
    decomp = {}  # cp -> (a, b); canonical decompositions only, b == 0 for singletons
    ccc = {}     # cp -> canonical combining class (nonzero only)
    for cp in range(0x110000):
        ch = chr(cp)
        c = unicodedata.combining(ch)
        if c:
            ccc[cp] = c
        if HANGUL_BASE <= cp <= HANGUL_END:
            continue
        d = unicodedata.decomposition(ch)
        if d and not d.startswith("<"):
            parts = [int(x, 16) for x in d.split()]
            if len(parts) == 1:
                decomp[cp] = (parts[0], 0)
            elif len(parts) == 2:
                decomp[cp] = (parts[0], parts[1])

    # A pair (a, b) composes to cp iff NFC maps the decomposed pair back to cp;
    # this bakes in the composition exclusions without listing them.
    comp = []
    for cp, (a, b) in decomp.items():
        if b == 0:
            continue
        if unicodedata.combining(chr(a)) != 0:
            continue
        if unicodedata.normalize("NFC", chr(a) + chr(b)) == chr(cp):
            comp.append((a, b, cp))
    comp.sort()

    ver = unicodedata.unidata_version
    out.write("// Generated by tools/gen_unicode_tables.py (Unicode %s). Do not edit.\n" % ver)
    out.write("// clang-format off\n")

    out.write("struct DecompEntry { uint32_t cp, a, b; };\n")
    out.write("static const DecompEntry kDecomp[] = {\n")
    for cp in sorted(decomp):
        a, b = decomp[cp]
        out.write("{0x%X,0x%X,0x%X},\n" % (cp, a, b))
    out.write("};\n")

    out.write("struct CccEntry { uint32_t cp; uint8_t ccc; };\n")
    out.write("static const CccEntry kCcc[] = {\n")
    for cp in sorted(ccc):
        out.write("{0x%X,%d},\n" % (cp, ccc[cp]))
    out.write("};\n")

    out.write("struct CompEntry { uint32_t a, b, composed; };\n")
    out.write("static const CompEntry kComp[] = {\n")
    for a, b, c in comp:
        out.write("{0x%X,0x%X,0x%X},\n" % (a, b, c))
    out.write("};\n")
    out.write("// clang-format on\n")


if __name__ == "__main__":
    main(sys.stdout)
