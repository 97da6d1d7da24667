"""Circular-orbit periods from the trajectory.

For H = |p|^2/2 + |x|^2/2 - |x|^3/30 a circular orbit of radius R has angular
velocity sqrt(1 - R/10).  The period is read off a numerical trajectory by
unwrapping the position angle and interpolating full turns.
"""
from lexint.analysis import orbit_period
from lexint.schemes import integrate
from lexint.systems import anharmonic2d, circ_init, circular_period, hamiltonian_to_ode

ode = hamiltonian_to_ode(anharmonic2d())
for R in (0.2, 1.0, 5.0):
    run = integrate("IMP-SLEX", ode, circ_init(R), 0.01, 30.0)
    print(f"R = {R:<4g} period from trajectory {orbit_period(run):.5f}   closed form {circular_period(R):.5f}")
