"""Simulate a small field, run the whole pipeline in memory, print the stage reports.

    python3 demos/simulate_and_run.py [seed]
"""
import sys

from podpipe import SimConfig, generate_collections, generate_ground_truth, run_pipeline
from podpipe.detect import OracleDetector
from podpipe.fieldmodel import FieldLayout

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = SimConfig(layout=FieldLayout(n_ranges=36, n_columns=10), seed=seed)
truth = generate_ground_truth(cfg)
collections = generate_collections(cfg, truth)
print(f"{cfg.layout.n_plots} plots, {len(collections)} passes, {int(truth.is_corrupted.sum())} corrupted")

yields = {int(p): float(y) for p, y in zip(truth.plot_ids, truth.yield_g)}
manual = {int(p): float(m) for p, m in zip(truth.plot_ids, truth.manual_count) if m >= 0}
res = run_pipeline(collections, cfg.layout, OracleDetector(cfg, truth), yields, manual)

for rep in res.stages:
    print(f"{rep.stage:9s} n={rep.n:4d} r={rep.r:.3f} yield = {rep.slope:.3f} * pods {rep.intercept:+.2f}")
print(f"removed by the 2-sigma filter: {len(res.stages[1].removed_outliers)} records")
if res.manual is not None:
    print(f"manual counts vs yield: n={res.manual.n} r={res.manual.r:.3f}")
