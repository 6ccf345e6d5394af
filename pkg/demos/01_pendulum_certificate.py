"""Build a quadratic Lyapunov certificate for the damped pendulum and watch
it predict which pulse disturbances the system survives.

Run:  python3 demos/01_pendulum_certificate.py
"""

import numpy as np

from lyasco.lure import estimate_sector, solve_lmi, verify_vdot
from lyasco.pendulum import pendulum_field, pendulum_lure, pulse_scenario
from lyasco.sim import SimConfig, classify_stability, integrate
from lyasco.vmin import v_min

# The pendulum xdot1 = x2, xdot2 = -10 sin x1 - x2 splits into a stable
# linear part and the sector-bounded gap 10*(s - sin s).
system, polytope = pendulum_lure()

# Sweep the nonlinearity's slopes over the operating box to get the sector.
sector = estimate_sector(system, polytope)
print(f"sector envelope: [{sector.gamma:.6f}, {sector.beta:.6f}]")

# One linear matrix inequality gives the quadratic certificate.
lmi = solve_lmi(system, sector)
print("P =\n", lmi.p_matrix)
print(f"LMI residual: {lmi.residual:.2e}   multiplier tau: {lmi.tau:.4f}")

cert = lmi.quadratic(system.equilibrium)
print("sampled max dV/dt over the box:",
      verify_vdot(system, cert, polytope, n_samples=5000))

# The certified region is the sublevel set V <= v_min inside the box, where
# v_min is the smallest value of V on the box boundary.
vres = v_min(cert, polytope)
print(f"v_min = {vres.v_min:.6f} attained on facet {vres.argmin_facet}")

# Fire pulses of growing amplitude: whenever the fault-cleared state lands
# inside the certified region, the certificate promises convergence.
print(f"\n{'pulse':>8} {'V at clearing':>14} {'certified':>10} {'simulated':>10}")
cfg = SimConfig(horizon=20.0, step=1e-3)
for amplitude in (0.5, 1.0, 2.0, 4.0, 8.0, 12.0):
    scen = pulse_scenario(amplitude, t0=0.5, tc=0.6)
    pre = integrate(scen.during_field, np.zeros(2),
                    config=SimConfig(horizon=0.1, step=1e-3, settle_window=0.1))
    x_clear = pre.final_state
    v_clear = cert.value(x_clear)
    fired = v_clear <= vres.v_min and polytope.contains(x_clear)
    traj = integrate(pendulum_field, np.zeros(2), scenario=scen, config=cfg)
    label = classify_stability(traj, np.zeros(2), cfg)
    print(f"{amplitude:>8g} {v_clear:>14.6f} {str(fired):>10} {label:>10}")
