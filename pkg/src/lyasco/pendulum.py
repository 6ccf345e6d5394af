"""Damped pendulum demo system: xdot1 = x2, xdot2 = -10 sin x1 - x2.

The additive pulse disturbance enters as (-u, +u). The feedback form pulls
the linearized spring into the linear block, leaving the sector-bounded
gap 10 (s - sin s).
"""

from __future__ import annotations

import numpy as np

from .core import Polytope
from .lure import LureSystem
from .sco import DisturbanceScenario
from .sos import ElementaryFactor, Polynomial, QuasiPolynomialSystem

GRAVITY_GAIN = 10.0


def pendulum_field(x):
    x = np.asarray(x, dtype=float)
    return np.array([x[1], -GRAVITY_GAIN * np.sin(x[0]) - x[1]])


def pendulum_jvp(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.array([u[1], -GRAVITY_GAIN * np.cos(x[0]) * u[0] - u[1]])


def pendulum_lure(speed_cap: float = 8.0):
    """Feedback form plus the polytope |x1| <= pi/2, |x2| <= speed_cap."""
    A = np.array([[0.0, 1.0], [-GRAVITY_GAIN, -1.0]])
    B = np.array([[0.0], [1.0]])
    C = np.array([[1.0, 0.0]])

    def phi(s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return GRAVITY_GAIN * (s - np.sin(s))

    sys = LureSystem(a_matrix=A, b_matrix=B, c_matrix=C, nonlinearity=phi,
                     equilibrium=np.zeros(2),
                     nonlinearity_channels=[lambda s: GRAVITY_GAIN * (s - np.sin(s))])
    poly = Polytope.box([-np.pi / 2, -speed_cap], [np.pi / 2, speed_cap])
    return sys, poly


def pulse_scenario(amplitude: float, t0: float = 0.5, tc: float = 0.6,
                   taylor_order: int = 2) -> DisturbanceScenario:
    """Constant pulse u on [t0, tc) entering as (-u, +u)."""
    def during(x):
        base = pendulum_field(x)
        return base + amplitude * np.array([-1.0, 1.0])

    scen = DisturbanceScenario(t0=t0, tc=tc, taylor_order=taylor_order,
                               during_field=during,
                               during_field_builder=lambda x0, w: during,
                               field_jvp_builder=lambda x0, w: pendulum_jvp,
                               label=f"pulse u={amplitude:g}")
    return scen


def pendulum_quasi_polynomial() -> QuasiPolynomialSystem:
    """Recasting input: the sine enters as an elementary factor."""
    names = ["x1", "x2"]
    x1_poly = Polynomial.variable(names, 0)
    rhs = [
        [(1.0, [(0, 1)])],
        [(-GRAVITY_GAIN, [ElementaryFactor("sin", x1_poly)]), (-1.0, [(0, 1)])],
    ]
    return QuasiPolynomialSystem(state_names=names, rhs=rhs,
                                 equilibrium=np.zeros(2))
