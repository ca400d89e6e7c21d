"""Draw a 40-DER population for each built-in scenario and aggregate it at eps = 0.5."""

from flexsum.aggregator import TightnessConfig, aggregate
from flexsum.scenario import builtin_scenarios, generate_ensemble, type_frequencies

for sc in builtin_scenarios():
    ens = generate_ensemble(sc, 40, seed=sc.id)
    res = aggregate(ens, TightnessConfig(0.5, cap_p=600, cap_q=200))
    mix = " ".join(f"{c}={f:.2f}" for c, f in type_frequencies(ens).items())
    b = res.bounds
    print(f"scenario {sc.id} ({sc.income}/{sc.climate}/{sc.incentive}): {mix}")
    print(f"  p in [{b.p_inf:.1f}, {b.p_sup:.1f}] kW, q in [{b.q_inf:.1f}, {b.q_sup:.1f}] kVAr, "
          f"{res.grid.count} pixels, peak {res.peak_blocks} blocks")
