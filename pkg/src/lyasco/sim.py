"""Fixed-step simulation with event-exact disturbance switching, the
trajectory-convergence classifier, and certificate soundness sweeps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .core import Polytope, Trajectory, polytope_contains

BLOWUP_GUARD = 1e6


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 20.0
    step: float = 1e-3
    convergence_tol: float = 1e-3
    settle_window: float = 2.0

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.horizon < self.settle_window:
            raise ValueError("horizon must cover the settle window")


def _rk4_span(field, x, t_start, t_end, h, out_t, out_x):
    """March from t_start to t_end with steps snapped to the span end."""
    t = t_start
    while t < t_end - 1e-12:
        hh = min(h, t_end - t)
        k1 = field(t, x)
        k2 = field(t + hh / 2, x + hh / 2 * k1)
        k3 = field(t + hh / 2, x + hh / 2 * k2)
        k4 = field(t + hh, x + hh * k3)
        x = x + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += hh
        out_t.append(t)
        out_x.append(x.copy())
        if np.abs(x).max() > BLOWUP_GUARD:
            return x, t, True
    return x, t, False


def integrate(dynamics, x_init, scenario=None,
              config: Optional[SimConfig] = None) -> Trajectory:
    """Classical RK4 with exact step alignment at the disturbance window.

    ``dynamics`` is ``f(x) -> xdot`` for the nominal system; ``scenario``
    (optional) supplies ``during_field(x) -> xdot`` plus ``t0``/``tc`` for a
    vanishing disturbance. Trajectories exceeding the blow-up guard are
    truncated and flagged diverged.
    """
    config = config or SimConfig()
    x = np.asarray(x_init, dtype=float).copy()
    nominal = lambda t, z: np.asarray(dynamics(z), dtype=float)
    out_t: List[float] = [0.0]
    out_x = [x.copy()]
    diverged = False

    if scenario is not None and scenario.tc > scenario.t0:
        during = lambda t, z: np.asarray(scenario.during_field(z), dtype=float)
        spans = [(nominal, 0.0, scenario.t0), (during, scenario.t0, scenario.tc),
                 (nominal, scenario.tc, config.horizon)]
    else:
        spans = [(nominal, 0.0, config.horizon)]

    for fld, ta, tb in spans:
        if tb <= ta:
            continue
        x, t, diverged = _rk4_span(fld, x, ta, tb, config.step, out_t, out_x)
        if diverged:
            break
    return Trajectory(np.array(out_t), np.array(out_x), diverged=diverged)


def classify_stability(traj: Trajectory, x0, config: Optional[SimConfig] = None) -> str:
    """"Stable" iff the state stays within the convergence tolerance of x0
    over the entire final settle window and never diverged."""
    config = config or SimConfig()
    if traj.diverged:
        return "Unstable"
    x0 = np.asarray(x0, dtype=float)
    t_end = traj.times[-1]
    window = traj.times >= t_end - config.settle_window
    dev = np.linalg.norm(traj.states[window] - x0, axis=1)
    return "Stable" if (dev <= config.convergence_tol).all() else "Unstable"


def convergence_order(dynamics, x_init, horizon: float, base_step: float):
    """Empirical RK4 order via Richardson triples; returns the rate."""
    def endpoint(h):
        cfg = SimConfig(horizon=horizon, step=h, settle_window=min(horizon, 1.0))
        return integrate(dynamics, x_init, config=cfg).final_state

    x_h = endpoint(base_step)
    x_h2 = endpoint(base_step / 2)
    x_h4 = endpoint(base_step / 4)
    e1 = np.linalg.norm(x_h - x_h4)
    e2 = np.linalg.norm(x_h2 - x_h4)
    if e2 == 0:
        return np.inf
    return float(np.log2(e1 / e2))


@dataclass
class SoundnessRecord:
    scenario_index: int
    fired: bool
    v_fault: float
    in_polytope: bool
    label: str
    counterexample: bool


@dataclass
class SoundnessReport:
    records: List[SoundnessRecord]

    @property
    def n_fired(self) -> int:
        return sum(r.fired for r in self.records)

    @property
    def counterexamples(self) -> List[SoundnessRecord]:
        return [r for r in self.records if r.counterexample]


def certificate_soundness_trial(dynamics, certificate, v_min_value: float,
                                poly: Polytope, scenarios,
                                config: Optional[SimConfig] = None,
                                max_workers: int = 1) -> SoundnessReport:
    """Sweep scenarios; wherever the certificate fires (fault-cleared state
    inside the certified sublevel set and the polytope), the post-fault
    trajectory must stay in the polytope and classify Stable.

    Scenarios whose fault-cleared state is not certified are recorded as
    "not certified", never as counterexamples. Scenarios are independent, so
    ``max_workers`` > 1 runs them on a thread pool; records keep scenario
    order either way.
    """
    config = config or SimConfig()
    x0 = certificate.equilibrium

    def run_one(item):
        idx, scen = item
        # fault-cleared state by honest integration of the during-fault field
        span = max(scen.tc - scen.t0, config.step)
        fault_cfg = SimConfig(horizon=span, step=config.step,
                              settle_window=min(span, 1.0))
        pre = integrate(scen.during_field, x0, config=fault_cfg)
        xc = pre.final_state
        v_fault = certificate.value(xc)
        inside = polytope_contains(poly, xc, tol=1e-9)
        fired = (v_fault <= v_min_value) and inside and not pre.diverged
        label = ""
        counter = False
        if fired:
            post = integrate(dynamics, xc, config=config)
            label = classify_stability(post, x0, config)
            stayed = all(polytope_contains(poly, s, tol=1e-7) for s in post.states)
            counter = (label != "Stable") or (not stayed)
        return SoundnessRecord(
            scenario_index=idx, fired=fired, v_fault=float(v_fault),
            in_polytope=inside, label=label or "not certified",
            counterexample=counter)

    items = list(enumerate(scenarios))
    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(run_one, items))
    else:
        records = [run_one(it) for it in items]
    return SoundnessReport(records)
