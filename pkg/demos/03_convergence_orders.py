"""Empirical convergence orders.

Global errors at a fixed end time are fitted against the step size on a log
scale.  The locally exact variants keep the order of their kernel (or raise
first-order Euler to second order).  On a one-degree-of-freedom oscillator
the symmetric gradient scheme anchored at the start point is third order and
the midpoint-anchored one fourth order.
"""
import numpy as np

from lexint.analysis import estimate_order, geometric_grid, reference_solution
from lexint.systems import anharmonic2d, hamiltonian_to_ode, quartic1d

ode = hamiltonian_to_ode(anharmonic2d())
y0 = np.array([1.0, 0.0, 0.0, 0.7])
ref = reference_solution(ode, y0)
steps = geometric_grid(0.1, 0.1 / 10**1.5, 5)

print("anharmonic2d, t = 5, h from 0.1 down 1.5 decades")
for name in ("EEU", "EEU-LEX", "IEU", "IEU-ILEX", "IMP", "IMP-SLEX", "GR-IA", "GR-IA-LEX"):
    est = estimate_order(name, ode, y0, ref, steps, 5.0)
    print(f"  {name:10s} slope {est.slope:5.2f}   smallest error {est.errors[-1]:.2e}")

q = hamiltonian_to_ode(quartic1d(0.5))
x0 = np.array([1.0, 0.0])
qref = reference_solution(q, x0)
qsteps = geometric_grid(0.5, 0.5 / 10**1.5, 5)
print("\nH = p^2/2 + x^2/2 + x^4/8, t = 10")
for name in ("GR-SYM", "GR-SYM-LEX", "GR-SYM-SLEX"):
    est = estimate_order(name, q, x0, qref, qsteps, 10.0)
    print(f"  {name:12s} slope {est.slope:5.2f}   errors " + " ".join(f"{e:.1e}" for e in est.errors))
