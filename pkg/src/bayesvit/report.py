"""Aligned text rendering of the sweep CSVs (two decimals, as in the printed tables)."""
from __future__ import annotations

from pathlib import Path

from .files import read_csv
from .harness import METHOD_ORDER


def _align(rows: list) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, r in enumerate(rows):
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _methods(records) -> list:
    present = {r["method"] for r in records}
    known = [m for m in METHOD_ORDER if m in present]
    return known + sorted(present - set(known))


def _cells(records):
    """Ordered (Q, M) keys: Q ascending, M descending."""
    keys = {(r["Q"], r["M"]) for r in records}
    return sorted(keys, key=lambda k: (k[0], -float(k[1])))


def render_table1(records) -> str:
    out = []
    methods = _methods(records)
    for ds in sorted({r["dataset"] for r in records}, key=int):
        sub = [r for r in records if r["dataset"] == ds]
        index = {(r["Q"], r["M"], r["method"]): r for r in sub}
        rows = [["Q", "M"] + methods]
        for q, m in _cells(sub):
            line = [q, m]
            for meth in methods:
                r = index.get((q, m, meth))
                if r is None or r["best_lnp"] == "na":
                    line.append("na")
                    continue
                cell = f"{float(r['best_lnp']):.2f}"
                if meth != "SA" and r["distinct_outputs"] != "na":
                    cell += f" ({r['distinct_outputs']})"
                line.append(cell)
            rows.append(line)
        out.append(f"dataset {ds}: best ln p(x, y) (distinct outputs)\n" + _align(rows))
    return "\n\n".join(out)


def render_table2(records) -> str:
    out = []
    methods = _methods(records)
    for ds in sorted({r["dataset"] for r in records}, key=int):
        sub = [r for r in records if r["dataset"] == ds]
        index = {(r["Q"], r["M"], r["method"]): r["hamming_to_best"] for r in sub}
        rows = [["Q", "M"] + methods]
        for q, m in _cells(sub):
            rows.append([q, m] + [index.get((q, m, meth), "na") for meth in methods])
        out.append(f"dataset {ds}: pointwise differences to the best path\n" + _align(rows))
    return "\n\n".join(out)


def render_table3(records) -> str:
    methods = [m for m in ("SA", "sEM", "sMM") if any(r["method"] == m for r in records)]
    index = {(r["Q"], r["M"], r["method"]): r for r in records}
    header = ["Q", "M"] + [f"{m}_max" for m in methods] + [f"{m}_min" for m in methods]
    rows = [header]
    for q, m in _cells(records):
        wins = [index[(q, m, meth)]["winner_count"] if (q, m, meth) in index else "na" for meth in methods]
        loss = [index[(q, m, meth)]["loser_count"] if (q, m, meth) in index else "na" for meth in methods]
        rows.append([q, m] + wins + loss)
    return "winner (max) and strict loser (min) counts over datasets\n" + _align(rows)


def render_report(out_dir) -> str:
    d = Path(out_dir)
    parts = []
    if (d / "table1.csv").exists():
        parts.append(render_table1(read_csv(d / "table1.csv")))
    if (d / "table2.csv").exists():
        parts.append(render_table2(read_csv(d / "table2.csv")))
    if (d / "table3.csv").exists():
        t3 = read_csv(d / "table3.csv")
        if t3:
            parts.append(render_table3(t3))
    if not parts:
        raise FileNotFoundError(f"no table CSVs in {d}")
    return "\n\n".join(parts) + "\n"
