"""Time capped aggregation of the replicated ten-DER population and fit the growth exponent in n."""

from flexsum.bench import fit_scaling, sweep
from flexsum.scenario import base_ensemble

base = base_ensemble(0)
for cap_p in (600, 4000):
    recs = sweep(base, [10, 20, 40, 80], [0.16], caps=[(cap_p, 200)], repeats=3)
    for r in recs:
        print(f"cap_p={cap_p} n={r.n:3d} time={r.wall_time:.3f}s peak_blocks={r.peak_blocks}")
    fit = fit_scaling(recs, "n")
    print(f"cap_p={cap_p}: time ~ n^{fit.slope:.2f} (r2 {fit.r2:.3f})")
