import numpy as np
import pytest

from lyasco.pendulum import pendulum_field, pulse_scenario
from lyasco.sim import (SimConfig, certificate_soundness_trial,
                        classify_stability, convergence_order, integrate)


class TestIntegrate:
    def test_exponential_decay(self):
        cfg = SimConfig(horizon=10.0, step=1e-3, settle_window=1.0)
        traj = integrate(lambda x: -x, np.array([1.0]), config=cfg)
        assert traj.final_state[0] == pytest.approx(np.exp(-10.0), abs=1e-9)

    def test_pendulum_pulse_returns(self):
        scen = pulse_scenario(2.0, 0.5, 0.6)
        cfg = SimConfig(horizon=20.0, step=1e-3)
        traj = integrate(pendulum_field, np.zeros(2), scenario=scen, config=cfg)
        during = (traj.times >= 0.5) & (traj.times <= 0.8)
        assert np.abs(traj.states[during]).max() > 0.05   # deviates under the pulse
        assert classify_stability(traj, np.zeros(2), cfg) == "Stable"

    def test_event_alignment(self):
        scen = pulse_scenario(1.0, t0=0.5005, tc=0.6015)
        cfg = SimConfig(horizon=2.0, step=1e-3)
        traj = integrate(pendulum_field, np.zeros(2), scenario=scen, config=cfg)
        assert np.isclose(traj.times, 0.5005).any()
        assert np.isclose(traj.times, 0.6015).any()

    def test_richardson_halving(self):
        # halving the step changes the endpoint by <= 16x the quarter-step gap
        def endpoint(h):
            cfg = SimConfig(horizon=2.0, step=h, settle_window=1.0)
            return integrate(pendulum_field, np.array([1.0, 0.0]),
                             config=cfg).final_state

        e_h = np.linalg.norm(endpoint(4e-3) - endpoint(1e-3))
        e_h2 = np.linalg.norm(endpoint(2e-3) - endpoint(1e-3))
        assert e_h <= 16.0 * e_h2 * 1.3 + 1e-15

    def test_divergence_guard(self):
        cfg = SimConfig(horizon=5.0, step=1e-3, settle_window=1.0)
        traj = integrate(lambda x: x ** 2, np.array([2.0]), config=cfg)
        assert traj.diverged
        assert classify_stability(traj, np.zeros(1), cfg) == "Unstable"

    def test_order_at_least_3_8(self):
        rate = convergence_order(pendulum_field, np.array([0.8, 0.0]),
                                 horizon=2.0, base_step=4e-3)
        assert rate >= 3.8


class TestClassifier:
    def test_unstable_when_not_settled(self):
        cfg = SimConfig(horizon=4.0, step=1e-3, convergence_tol=1e-3,
                        settle_window=2.0)
        # undamped oscillator never settles
        traj = integrate(lambda x: np.array([x[1], -x[0]]),
                         np.array([1.0, 0.0]), config=cfg)
        assert classify_stability(traj, np.zeros(2), cfg) == "Unstable"


class TestSoundness:
    def test_pendulum_sweep(self, pendulum_pack):
        cert = pendulum_pack["certificate"]
        poly = pendulum_pack["polytope"]
        vm = pendulum_pack["vmin"].v_min
        scens = [pulse_scenario(a, 0.5, 0.6)
                 for a in np.linspace(0.5, 6.0, 12)]
        cfg = SimConfig(horizon=20.0, step=1e-3, convergence_tol=1e-3,
                        settle_window=2.0)
        report = certificate_soundness_trial(pendulum_field, cert, vm, poly,
                                             scens, cfg)
        assert report.n_fired >= 1
        assert not report.counterexamples

    def test_lyapunov_monotone_along_certified_trajectory(self, pendulum_pack):
        cert = pendulum_pack["certificate"]
        poly = pendulum_pack["polytope"]
        vm = pendulum_pack["vmin"].v_min
        scen = pulse_scenario(4.0, 0.5, 0.6)
        pre = integrate(scen.during_field, np.zeros(2),
                        config=SimConfig(horizon=0.1, step=1e-3,
                                         settle_window=0.1))
        xc = pre.final_state
        assert cert.value(xc) <= vm
        post = integrate(pendulum_field, xc,
                         config=SimConfig(horizon=10.0, step=1e-3))
        vals = cert.value_batch(post.states)
        inside = np.array([poly.contains(s, tol=1e-9) for s in post.states])
        assert inside.all()
        assert (np.diff(vals) <= 1e-7).all()

    def test_uncertified_is_not_a_counterexample(self, pendulum_pack):
        cert = pendulum_pack["certificate"]
        poly = pendulum_pack["polytope"]
        vm = pendulum_pack["vmin"].v_min
        scens = [pulse_scenario(80.0, 0.5, 0.6)]   # far beyond the region
        report = certificate_soundness_trial(
            pendulum_field, cert, vm, poly, scens,
            SimConfig(horizon=5.0, step=1e-3, settle_window=1.0))
        rec = report.records[0]
        assert not rec.fired
        assert rec.label == "not certified"
        assert not rec.counterexample
