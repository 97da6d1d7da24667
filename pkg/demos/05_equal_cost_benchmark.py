"""Equal-cost comparison on circular orbits of the anharmonic oscillator.

Locally exact schemes cost more per step (Jacobians, matrix functions), so
they are compared at equal cost: each scheme runs with step lambda * h~,
where lambda is calibrated so that its cost per unit time matches the
baseline scheme run at h~.  Here three base steps of the midpoint/trapezoid
and gradient families at R = 1 are shown; the command-line tool runs the full
sweeps (lexint benchmark --preset ...).
"""
from lexint.analysis import benchmark_figure, preset_config, rows_to_csv

for preset in ("midtrap-r1", "grad-r1"):
    cfg = preset_config(preset, h_tilde=(0.0316, 0.01, 0.00316))
    rows = benchmark_figure(cfg)
    print(f"\n{preset}: error at t = 12.5 (lambda)")
    for ht in cfg.h_tilde:
        cells = [f"{r.scheme} {r.global_error:.1e} ({r.lam:.2f})" for r in rows if r.h_tilde == ht]
        print(f"  h~={ht:<7g} " + "  ".join(cells))

print("\nCSV form of the last sweep (first lines):")
print("\n".join(rows_to_csv(rows).splitlines()[:4]))
