"""Recompute document-benchmark average columns from reference per-dataset
cells and compare the 4-decimal rendering with the reference averages.

    python scripts/reproduce_table_aggregates.py
"""

from forensic_bench.core import SplitTag
from forensic_bench.protocols import Aggregate, EvalGroup, ProtocolSpec
from forensic_bench.report import format_cell, markdown_text, table_from_results
from forensic_bench.runner import GroupResult, RunResult

DOCTAMPER = ("DocTamperTest", "DocTamperFCD", "DocTamperSCD")
EXTERNAL = ("T-SROIE", "OSTF", "TPIC-13", "RTM")

# (run, group values, aggregate name, groups, reference average)
ROWS = [
    ("DTD", dict(zip(DOCTAMPER, (0.6856, 0.7392, 0.8031))), "Average_D", DOCTAMPER, "0.7426"),
    ("CAFTB", dict(zip(DOCTAMPER, (0.2917, 0.3770, 0.3275))), "Average_D", DOCTAMPER, "0.3321"),
    ("CAFTB", dict(zip(DOCTAMPER + EXTERNAL, (0.2917, 0.3770, 0.3275, 0.2617, 0.1194, 0.3007, 0.0328))),
     "Average_All", DOCTAMPER + EXTERNAL, "0.2444"),
]


def main():
    ok = True
    for run, values, agg, groups, ref in ROWS:
        spec = ProtocolSpec("doc", (), tuple(EvalGroup(g, ((g, SplitTag.TEST),)) for g in groups),
                            (Aggregate(agg, groups),))
        res = RunResult("doc", run, [GroupResult(g, {"pixel": {"F1": v}}, 1, 1) for g, v in values.items()])
        table = table_from_results([res], spec, "pixel.F1")
        got = format_cell(table.cell(run, agg))
        ok &= got == ref
        print(f"{run:6s} {agg:12s} recomputed {got}  reference {ref}  {'ok' if got == ref else 'MISMATCH'}")
        print(markdown_text(table))
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
