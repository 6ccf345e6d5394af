import numpy as np
import pytest

from lyasco.nlp import (GradientAuditError, NlpProblem, SolverConfig, solve)
from helpers import active_set_qp


def test_bound_via_inequality():
    p = NlpProblem(objective=lambda z: z[0] ** 2, x0=np.array([2.0]),
                   inequalities=lambda z: np.array([1.0 - z[0]]))
    s = solve(p)
    assert s.status == "Optimal"
    assert s.point[0] == pytest.approx(1.0, abs=1e-6)
    assert s.objective_value == pytest.approx(1.0, abs=1e-6)


def test_rosenbrock():
    p = NlpProblem(objective=lambda z: (1 - z[0]) ** 2 + 100 * (z[1] - z[0] ** 2) ** 2,
                   x0=np.array([-1.2, 1.0]))
    s = solve(p)
    assert s.status == "Optimal"
    np.testing.assert_allclose(s.point, [1.0, 1.0], atol=1e-4)


def test_equality_projection():
    p = NlpProblem(objective=lambda z: z[0] ** 2 + z[1] ** 2,
                   x0=np.array([3.0, -1.0]),
                   equalities=lambda z: np.array([z[0] + z[1] - 1.0]))
    s = solve(p)
    assert s.status == "Optimal"
    np.testing.assert_allclose(s.point, [0.5, 0.5], atol=1e-7)
    assert s.objective_value == pytest.approx(0.5, abs=1e-7)


def test_optimal_invariants():
    p = NlpProblem(objective=lambda z: (z[0] - 2) ** 2 + (z[1] + 1) ** 2,
                   x0=np.array([0.0, 0.0]),
                   equalities=lambda z: np.array([z[0] - z[1] - 1.0]),
                   inequalities=lambda z: np.array([z[0] - 5.0]))
    s = solve(p)
    assert s.status == "Optimal"
    assert s.kkt_residual <= 1e-7
    assert s.max_violation <= 1e-8


def test_determinism():
    def make():
        return NlpProblem(
            objective=lambda z: (z ** 2).sum() + np.sin(z[0]),
            x0=np.array([0.7, -0.3, 0.2]),
            inequalities=lambda z: np.array([z.sum() - 1.0]))

    s1 = solve(make(), SolverConfig(multistart=5))
    s2 = solve(make(), SolverConfig(multistart=5))
    assert (s1.point == s2.point).all()
    assert s1.objective_value == s2.objective_value


def test_multistart_beats_single_on_multimodal():
    def f(z):
        return (z[0] ** 2 - 1) ** 2 + 0.1 * (z[0] - 1) ** 2

    p = NlpProblem(objective=f, x0=np.array([-1.1]),
                   lower=np.array([-2.0]), upper=np.array([2.0]))
    single = solve(p, SolverConfig(multistart=1))
    multi = solve(p, SolverConfig(multistart=8))
    assert single.point[0] == pytest.approx(-0.947, abs=1e-2)
    assert multi.point[0] == pytest.approx(1.0, abs=1e-3)


def test_infeasible_detected():
    # x >= 1 and x <= -1 simultaneously
    p = NlpProblem(objective=lambda z: z[0] ** 2, x0=np.array([0.0]),
                   inequalities=lambda z: np.array([1.0 - z[0], z[0] + 1.0]))
    s = solve(p)
    assert s.status in ("Infeasible", "IterLimit")
    assert s.max_violation > 1e-3


def test_gradient_audit_catches_bad_gradient():
    p = NlpProblem(objective=lambda z: (z ** 2).sum(), x0=np.array([1.0, 2.0]),
                   gradient=lambda z: 3.0 * z)
    with pytest.raises(GradientAuditError):
        p.audit_gradients()


def test_gradient_audit_passes_correct():
    p = NlpProblem(objective=lambda z: (z ** 2).sum(), x0=np.array([1.0, 2.0]),
                   gradient=lambda z: 2.0 * z,
                   equalities=lambda z: np.array([z[0] - z[1]]),
                   equalities_jac=lambda z: np.array([[1.0, -1.0]]))
    p.audit_gradients()


def test_random_qps_match_active_set_oracle():
    rng = np.random.default_rng(42)
    for trial in range(50):
        n = int(rng.integers(2, 11))
        M = rng.normal(size=(n, n))
        H = M @ M.T + 0.5 * np.eye(n)
        c = rng.normal(size=n)
        m = int(rng.integers(1, 6))
        G = rng.normal(size=(m, n))
        x_feas = rng.normal(size=n) * 0.3
        h = G @ x_feas + rng.uniform(0.1, 1.0, m)

        want = active_set_qp(H, c, G, h, x0=x_feas)
        prob = NlpProblem(
            objective=lambda z, H=H, c=c: 0.5 * z @ H @ z + c @ z,
            gradient=lambda z, H=H, c=c: H @ z + c,
            x0=x_feas.copy(),
            inequalities=lambda z, G=G, h=h: G @ z - h,
            inequalities_jac=lambda z, G=G: G)
        got = solve(prob)
        assert got.status == "Optimal", f"trial {trial}"
        assert np.linalg.norm(got.point - want) <= 1e-6 * max(1.0, np.linalg.norm(want)), \
            f"trial {trial}: {got.point} vs {want}"


def test_initial_point_outside_bounds_rejected():
    with pytest.raises(ValueError):
        NlpProblem(objective=lambda z: z[0] ** 2, x0=np.array([2.0]),
                   upper=np.array([1.0]))
