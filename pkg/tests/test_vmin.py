import numpy as np
import pytest

from lyasco.core import Polytope, QuadraticCertificate
from lyasco.vmin import (EmptyFacetError, facet_minimize, v_min, v_min_oracle)
from helpers import random_spd


def box2():
    return Polytope.box([-1.0, -1.0], [1.0, 1.0])


def cert(P, x0):
    return QuadraticCertificate(np.asarray(P, dtype=float),
                                np.asarray(x0, dtype=float))


class TestFacetMinimize:
    def test_centered_identity(self):
        poly = box2()
        # facet 2 of the box is x1 = +1 for Polytope.box layout (-I then I)
        fm = facet_minimize(cert(np.eye(2), [0, 0]), poly, 2)
        np.testing.assert_allclose(fm.minimizer, [1.0, 0.0], atol=1e-9)
        assert fm.value == pytest.approx(1.0, abs=1e-9)

    def test_offset_equilibrium(self):
        # grid-search oracle over the facet x1=1 at step 1e-4 gives 0.25
        fm = facet_minimize(cert(np.eye(2), [0.5, 0.0]), box2(), 2)
        assert fm.value == pytest.approx(0.25, abs=1e-9)

    def test_anisotropic(self):
        # closed-form minimizer x0 + (d - c.x0) P^-1 c / (c' P^-1 c)
        fm = facet_minimize(cert(np.diag([1.0, 4.0]), [0, 0]), box2(), 2)
        np.testing.assert_allclose(fm.minimizer, [1.0, 0.0], atol=1e-9)
        assert fm.value == pytest.approx(1.0, abs=1e-9)

    def test_invariants(self):
        rng = np.random.default_rng(5)
        poly = box2()
        for _ in range(25):
            P = random_spd(rng, 2)
            x0 = rng.uniform(-0.7, 0.7, 2)
            V = cert(P, x0)
            for i in range(poly.n_facets):
                fm = facet_minimize(V, poly, i)
                ci = poly.facet_normals[i]
                di = poly.facet_offsets[i]
                assert abs(ci @ fm.minimizer - di) <= 1e-8
                assert poly.contains(fm.minimizer, tol=1e-8)
                assert fm.kkt_residual <= 1e-7
                if not fm.active_facets:
                    g = V.gradient(fm.minimizer)
                    assert np.linalg.norm(g - fm.multiplier * ci) <= 1e-7

    def test_empty_facet_raises(self):
        # x1 <= 2 is strictly redundant inside the unit box
        F = np.vstack([box2().facet_normals, [1.0, 0.0]])
        g = np.r_[box2().facet_offsets, 2.0]
        poly = Polytope(F, g)
        with pytest.raises(EmptyFacetError):
            facet_minimize(cert(np.eye(2), [0, 0]), poly, 4)

    def test_bad_index(self):
        with pytest.raises(IndexError):
            facet_minimize(cert(np.eye(2), [0, 0]), box2(), 9)


class TestVmin:
    def test_centered(self):
        res = v_min(cert(np.eye(2), [0, 0]), box2())
        assert res.v_min == pytest.approx(1.0, abs=1e-9)
        assert res.argmin_facet == 0  # ties break to the lowest index

    def test_offset(self):
        res = v_min(cert(np.eye(2), [0.5, 0.0]), box2())
        assert res.v_min == pytest.approx(0.25, abs=1e-9)
        assert res.argmin_facet == 2

    def test_interior_required(self):
        with pytest.raises(ValueError):
            v_min(cert(np.eye(2), [1.0, 0.0]), box2())

    def test_positive_for_interior_equilibrium(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            P = random_spd(rng, 2)
            res = v_min(cert(P, rng.uniform(-0.8, 0.8, 2)), box2())
            assert res.v_min > 0

    def test_matches_boundary_sampling(self):
        rng = np.random.default_rng(17)
        poly = box2()
        for _ in range(20):
            P = random_spd(rng, 2)
            x0 = rng.uniform(-0.7, 0.7, 2)
            V = cert(P, x0)
            got = v_min(V, poly).v_min
            want = v_min_oracle(V, poly, grid_density=2000)
            assert abs(got - want) <= 1e-5 * max(1.0, want)

    def test_sublevel_excludes_boundary(self):
        rng = np.random.default_rng(23)
        poly = box2()
        P = random_spd(rng, 2)
        V = cert(P, [0.3, -0.2])
        vm = v_min(V, poly).v_min
        # dense boundary sampling: no boundary point sits below vm - eps
        for i in range(4):
            ci, di = poly.facet_normals[i], poly.facet_offsets[i]
            t = np.linspace(-1, 1, 2500)
            pts = np.stack([np.where(ci[0] != 0, di * ci[0], t),
                            np.where(ci[1] != 0, di * ci[1], t)], axis=1)
            keep = (pts @ poly.facet_normals.T - poly.facet_offsets <= 1e-9).all(axis=1)
            vals = V.value_batch(pts[keep])
            assert (vals >= vm - 1e-6).all()

    def test_monotone_under_shrinking(self):
        rng = np.random.default_rng(29)
        P = random_spd(rng, 2)
        x0 = np.array([0.2, -0.1])
        V = cert(P, x0)
        prev = np.inf
        base = box2()
        for s in np.linspace(1.0, 0.25, 20):
            # shrink offsets toward the equilibrium: facets c.x <= s*d + (1-s)*c.x0
            g = s * base.facet_offsets + (1 - s) * (base.facet_normals @ x0)
            poly = Polytope(base.facet_normals, g, pairing=base.pairing)
            vm = v_min(V, poly).v_min
            assert vm <= prev + 1e-10
            prev = vm


class TestOracle:
    def test_centered_box(self):
        got = v_min_oracle(cert(np.eye(2), [0, 0]), box2(), grid_density=1000)
        assert got == pytest.approx(1.0, abs=1e-6)

    def test_3d_box(self):
        poly = Polytope.box([-1.0] * 3, [1.0] * 3)
        got = v_min_oracle(cert(np.eye(3), [0, 0, 0]), poly, grid_density=101)
        assert got == pytest.approx(1.0, abs=1e-6)

    def test_dimension_guard(self):
        poly = Polytope.box([-1.0] * 5, [1.0] * 5)
        with pytest.raises(ValueError):
            v_min_oracle(cert(np.eye(5), np.zeros(5)), poly)
