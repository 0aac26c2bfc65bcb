"""Random clocks: one seeded field drives every rate at once.

Run: python3 demos/01_harris_field.py
"""
import numpy as np

from contact_shape import ClockKey, HarrisField, arrivals, shift_space, shift_time, thin

field = HarrisField(seed=2024, dimension=1, lambda_max=3.0)
edge = ClockKey.for_edge((0,), (1,))

# Each edge carries a rate-lambda_max Poisson clock with a uniform mark per arrival.
seq = arrivals(field, edge, 5.0)
print("arrivals on edge (0,1) up to t=5:", np.round(seq.times, 3))

# Keeping marks <= lam / lambda_max gives the rate-lam arrows. Smaller rates
# keep a subset of the same arrivals, which is what couples the rates.
for lam in (1.0, 2.0, 3.0):
    print(f"  lam={lam}: {len(thin(seq, lam, 3.0))} arrows")

# Views: shifting in time or space re-reads the same clocks.
later = arrivals(shift_time(field, 2.0), edge, 3.0)
print("seen from time 2:", np.round(later.times, 3))
moved = arrivals(shift_space(field, (5,)), edge, 5.0)
assert (moved.times == arrivals(field, edge.translated((5,)), 5.0).times).all()
print("space shift by 5 reads the clock of edge (5,6)")
