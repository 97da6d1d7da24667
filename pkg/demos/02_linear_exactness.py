"""Locally exact schemes reproduce the exact flow of linear problems.

On dx/dt = A x + b a locally exact scheme is the exact discretization, for
every step size.  Two consequences: no step-size restriction for stability
(A-stability), and zero error per step up to rounding.
"""
import numpy as np
import scipy.linalg as sl

from lexint.analysis import stability_audit
from lexint.schemes import integrate, scheme, step_scheme
from lexint.systems import LinearSystem, get_system, linear_ode

# scalar decay with huge steps
decay = linear_ode([[-1.0]])
print("x1 after one step from x0 = 1, compared with e^-h")
for h in (1.0, 10.0, 100.0):
    row = [f"h={h:>5g}  exact {np.exp(-h):.6e}"]
    for name in ("EEU", "EEU-LEX", "IMP-SLEX", "IEU-ILEX"):
        y, _ = step_scheme(scheme(name), decay, np.array([1.0]), h)
        row.append(f"{name} {y[0]: .6e}")
    print("  ".join(row))

# a damped oscillator with a forcing term, 100 steps of h = 0.5
A = np.array([[0.0, 1.0], [-4.0, -0.3]])
b = np.array([0.0, 1.0])
ode = linear_ode(A, b)
aug = np.zeros((3, 3))
aug[:2, :2], aug[:2, 2] = A, b
E = sl.expm(0.5 * aug)
run = integrate("TR-LEX", ode, np.array([1.0, 0.0]), 0.5, 50.0)
exact = run.states[:-1] @ E[:2, :2].T + E[:2, 2]
print("\nTR-LEX on a forced damped oscillator, worst per-step deviation from expm:",
      np.abs(run.states[1:] - exact).max())

# stability audit: bounded for all h, and exact per step
for name in ("IMP-LEX", "TR", "EEU"):
    print()
    print(stability_audit(name, LinearSystem(A, b), [0.1, 1.0, 10.0], n_steps=50,
                          x0=[1.0, 0.0]).format())
