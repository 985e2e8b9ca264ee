#!/usr/bin/env python3
"""Writes core/src/stats/nemenyi_table.hpp.

q_alpha(k) = studentized_range.ppf(1 - alpha, k, inf) / sqrt(2), rounded to
three decimals (the usual published precision, which gives 1.960 at k = 2).
"""
import math
import pathlib
import sys

import numpy as np
from scipy.stats import studentized_range

KS = range(2, 21)
ALPHAS = {"0.05": 0.05, "0.10": 0.10}
DF = np.inf


def q_value(alpha, k):
    return round(float(studentized_range.ppf(1.0 - alpha, k, DF)) / math.sqrt(2.0), 3)


def main():
    out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else (
        pathlib.Path(__file__).resolve().parent.parent / "core/src/stats/nemenyi_table.hpp")
    lines = [
        "#pragma once",
        "",
        "#include <array>",
        "",
        "// Generated by scripts/gen_nemenyi_table.py with scipy " + __import__("scipy").__version__ + ".",
        "// q_alpha(k) = studentized_range.ppf(1 - alpha, k, df = inf) / sqrt(2),",
        "// rounded to 3 decimals. Index 0 is k = 2, index 18 is k = 20.",
        "",
        "namespace ukd::stats::detail {",
        "",
    ]
    for label, alpha in ALPHAS.items():
        name = "kNemenyiQ" + label.replace("0.", "")
        values = ", ".join(f"{q_value(alpha, k):.3f}" for k in KS)
        lines.append(f"inline constexpr std::array<double, 19> {name}{{{values}}};")
    lines += ["", "}  // namespace ukd::stats::detail", ""]
    out.write_text("\n".join(lines))


if __name__ == "__main__":
    main()
