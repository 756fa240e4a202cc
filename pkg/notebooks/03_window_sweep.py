"""
Request windows, cache size and I/O count
=========================================

Run seeded query batches over a desk-scale table while varying the request
window and the cache size, then print the report tables.
"""

import tempfile
from pathlib import Path

from htsm.bench import BenchConfig, report, run_experiment, sweep

out = Path(tempfile.mkdtemp())

# %%
# One default batch set: 3 batches of 16 queries over 100,000 tuples.
single = run_experiment(BenchConfig())
t = single["totals"]
print(f"requests {t['request_count']}  sim_time {t['sim_time']:.3f}s  "
      f"every result matches the oracle: {single['oracle_match']}")

# %%
# Sweep window size against cache fraction. Wider windows merge more
# requests; once a window covers every chunk of a query the cache size no
# longer matters.
grid = {
    "base": {"batches": 1, "queries": 16},
    "grid": {"window": [1, 5, 10, 15, 30], "cache_fraction": [0.1, 0.2, 0.5, None]},
}
rows = sweep(grid, out / "window")
print("window  cache  requests")
for r in rows:
    frac = "unl" if r["cache_fraction"] is None else r["cache_fraction"]
    print(f"{r['window']:6d}  {frac!s:5}  {r['request_count']}")

# %%
# Side-by-side CS and HighTh on a workload that keeps reusing four columns.
pool = ["quantity", "extendedprice", "discount", "shipdate"]
sweep({"base": {"batches": 1, "column_pool": pool}, "grid": {"mode": ["cs", "highth"]}}, out / "modes")
print(report([out / "modes"]))
