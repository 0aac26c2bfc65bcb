"""Exact transient law on a tiny lattice, used to check the simulator.

Run: python3 demos/06_exact_oracle.py
"""
from contact_shape import TinyLattice, mc_vs_oracle, transient_distribution
from contact_shape.oracle import build_generator

L = TinyLattice.path(5)
p = transient_distribution(build_generator(L, 2.0), L.encode([(0,)]), 1.0)
print(f"P(extinct by t=1) from the centre of a 5-path: {p[0]:.5f}")

ok = mc_vs_oracle(L, 2.0, 1.0, 5000, base_seed=3)
print(f"simulator vs exact law: p={ok.p_value:.3f}, passed={ok.passed}")
# a wrong rate on the exact side should be detected
bad = mc_vs_oracle(L, 2.0, 1.0, 5000, base_seed=3, oracle_lambda=2.6)
print(f"control with the wrong rate: p={bad.p_value:.2e}, passed={bad.passed}")
