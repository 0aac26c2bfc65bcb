"""Essential hitting times and the regeneration view.

sigma(x) is the first infection of x whose progeny survives (judged by a
finite-horizon proxy). From (x, sigma(x)) the process looks like a fresh
surviving start.

Run: python3 demos/03_essential_hitting.py
"""
from contact_shape import HarrisField, SurvivalPolicy, essential_hitting, regeneration_view, survival_proxy

policy = SurvivalPolicy(T_surv=40.0)

for seed in range(8):
    field = HarrisField(seed, 1, 3.0)
    rec = essential_hitting(field, 2.0, (8,), policy=policy)
    if not rec.regenerated:
        print(f"seed {seed}: {rec.status}")
        continue
    print(f"seed {seed}: first hit {rec.hitting_time:.3f}, sigma {rec.sigma:.3f} after K={rec.K} tries")
    view = regeneration_view(field, rec)
    assert survival_proxy(view, 2.0, (0,), 0.0, policy).survives
