"""Simulating the process on a window, coupled across rates.

Run: python3 demos/02_contact_process.py
"""
from contact_shape import HarrisField, Window, hitting_time, lifetime, simulate, simulate_coupled

field = HarrisField(seed=7, dimension=1, lambda_max=3.0)
W = Window(60)

tr = simulate(field, 2.5, [(0,)], W, 15.0, record_events=True)
print(f"{len(tr.events)} events, {len(tr.final_config)} sites infected at t=15")
print("first time site 10 is infected:", hitting_time(tr, (10,)))
print("lifetime:", lifetime(tr))

# Same clocks, several rates: configurations are nested.
runs = simulate_coupled(field, [1.5, 2.0, 2.5], [(0,)], W, 15.0)
for lam, r in runs.items():
    print(f"lam={lam}: {len(r.final_config)} infected")
assert runs[1.5].final_config <= runs[2.0].final_config <= runs[2.5].final_config
