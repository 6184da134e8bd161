"""Show what the 2-sigma filter removes and how each stage moves r.

Writes three SVG scatter plots to ./filter_stages_out.
"""
from pathlib import Path

import numpy as np

from podpipe import SimConfig, generate_collections, generate_ground_truth, run_pipeline
from podpipe.analytics import stage_series
from podpipe.detect import OracleDetector
from podpipe.svgplot import ScatterData, write_scatter

cfg = SimConfig(seed=4)
truth = generate_ground_truth(cfg)
yields = {int(p): float(y) for p, y in zip(truth.plot_ids, truth.yield_g)}
res = run_pipeline(generate_collections(cfg, truth), cfg.layout, OracleDetector(cfg, truth), yields)

removed = res.stages[1].removed_outliers
bad = set(truth.plot_ids[truth.is_corrupted].tolist())
hits = sum(p in bad for p, _, _ in removed)
print(f"corrupted plots {len(bad)}; removed records {len(removed)}, {hits} of them from corrupted plots")
for axis in ("x", "y"):
    st = stage_series(res.results, residual_axis=axis)
    print(f"residual_axis={axis}: removed {len(st.removed)}, "
          f"r {np.corrcoef(st.all.x, st.all.y)[0, 1]:.3f} -> {np.corrcoef(st.filtered.x, st.filtered.y)[0, 1]:.3f}")

out = Path("filter_stages_out")
out.mkdir(exist_ok=True)
st = stage_series(res.results)
gone = {(p, s) for p, s, _ in st.removed}
dropped = [r for r in st.all.records if (r.plot_id, r.side) in gone]
for rep, series in zip(res.stages, (st.all, st.filtered, st.averaged)):
    extra = dropped if rep.stage == "filtered" else []
    write_scatter(ScatterData(rep.stage, series.x, series.y, rep.slope, rep.intercept, rep.r, rep.n,
                              [r.x for r in extra], [r.y for r in extra]), out / f"{rep.stage}.svg")
print(f"wrote {out}/all.svg, filtered.svg, averaged.svg")
