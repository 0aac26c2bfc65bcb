"""How often two nearby rates open the same arrows, and the good growth event.

Run: python3 demos/05_idem_and_good_growth.py
"""
from contact_shape import RunParams, SurvivalPolicy, box_edges_sized, good_growth_probability, idem_probability, shape_estimate

S = box_edges_sized(7, 2)
e = idem_probability(S, 5.0, 2.0, 1.999, 2000, RunParams(dimension=2))
print(f"agreement on {len(S)} edges up to t=5: {e.value:.3f} (exact {e.info['exact']:.3f})")

p = RunParams(replicas=60, policy=SurvivalPolicy(T_surv=30.0))
ref = shape_estimate(2.0, 30.0, p)
for N in (2, 5):
    g = good_growth_probability(2.0, 2.0, ref, 0.5, 8, N, 1.0, 60, p)
    print(f"good growth, N={N}: {g.value:.2f} +- {g.stderr:.2f}")
