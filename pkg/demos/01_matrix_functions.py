"""Matrix functions behind every locally exact step.

The step matrices are built from exp(hJ), phi1(hJ) = (exp(hJ) - I)/(hJ) and
tanhc(hJ/2) = tanh(hJ/2)/(hJ/2).  None of them may divide by J, because
Jacobians of real problems are often singular.  This script compares the
package routines with scipy and shows them at a singular and a nilpotent
argument.
"""
import numpy as np
import scipy.linalg as sl

from lexint.matfun import ConditioningError, expm, expm_phi1, phi1, tanhc_half

rng = np.random.default_rng(0)
M = rng.normal(size=(4, 4))

E, P = expm_phi1(M)
print("exp(M) vs scipy:        ", np.abs(E - sl.expm(M)).max())
print("M phi1(M) - (e^M - I):  ", np.abs(M @ P - (E - np.eye(4))).max())

# singular and nilpotent arguments are fine
N = np.array([[0.0, 1.0], [0.0, 0.0]])
print("phi1 of nilpotent N:\n", phi1(N))
print("phi1 of the zero matrix equals I:", np.array_equal(phi1(np.zeros((3, 3))), np.eye(3)))

# tanhc(hS/2) for the harmonic oscillator generator S is tan(h/2)/(h/2) I
S = np.array([[0.0, 1.0], [-1.0, 0.0]])
h = 0.8
print("tanhc(hS/2):", tanhc_half(S, h)[0, 0], " expected", np.tan(h / 2) / (h / 2))

# the bracket e^{hM} + I is singular when hM has eigenvalues i*pi*(2k+1)
try:
    tanhc_half(S, np.pi)
except ConditioningError as exc:
    print("pole detected:", exc)

print("expm of a 1x1 argument:", expm(1.0)[0, 0])
