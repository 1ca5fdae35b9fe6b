import time

import numpy as np
import pytest

from spopt.core import jmul, mulj, symplecticity_residual
from spopt.retractions import (
    RetractionKind,
    SingularCayley,
    cayley_economical,
    cayley_full,
    quasi_geodesic,
    retract,
    sr_retract,
)
from spopt.sr import Breakdown

from conftest import random_point, random_tangent, random_tangent_spectral

ALL_KINDS = list(RetractionKind)


def remainder_ratio(kind, x, z, t=1e-3):
    def e(tt):
        r = retract(kind, x, tt * z.entries)
        return np.linalg.norm(r.entries - x.entries - tt * z.entries)
    return e(t / 2) / e(t)


class TestAxioms:
    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_zero_maps_to_base(self, kind, rng):
        x = random_point(10, 3, rng)
        r = retract(kind, x, np.zeros_like(x.entries))
        assert np.linalg.norm(r.entries - x.entries) <= 1e-13

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_first_order_remainder(self, kind, rng):
        x = random_point(10, 3, rng)
        z = random_tangent(x, rng, norm=1.0)
        assert 0.2 <= remainder_ratio(kind, x, z) <= 0.3

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_result_feasible(self, kind, rng):
        x = random_point(10, 3, rng)
        z = random_tangent(x, rng, norm=0.5)
        r = retract(kind, x, z.entries)
        assert symplecticity_residual(r) <= 1e-10


class TestCayley:
    def test_equivalence_of_forms(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(3, 16))
            k = int(rng.integers(1, n + 1))
            x = random_point(n, k, rng)
            z = random_tangent(x, rng, norm=1.0)
            rf = cayley_full(x, z)
            re = cayley_economical(x, z)
            assert np.linalg.norm(rf.entries - re.entries) <= 1e-10 * np.linalg.norm(x.entries)

    def test_singular_scaling_detected(self):
        # scale a direction until 2 becomes an eigenvalue of the Hamiltonian
        # matrix of the transform; exactly at that scale both forms must
        # report a singular resolvent
        from spopt.core import jtmul, poisson

        for seed in range(40):
            rng = np.random.default_rng(seed)
            x = random_point(4, 2, rng)
            z = random_tangent(x, rng, norm=1.0)
            e, ze = x.entries, z.entries
            gz = ze - 0.5 * e @ jmul(e.T @ jtmul(ze))
            s = gz @ mulj(e).T + mulj(e) @ gz.T
            lam = np.linalg.eigvals(s @ poisson(4))
            real = lam[(np.abs(lam.imag) < 1e-10 * (1 + np.abs(lam.real)))
                       & (np.abs(lam.real) > 1e-8)].real
            if real.size == 0:
                continue
            scale = 2.0 / real[np.argmax(np.abs(real))]
            caught = 0
            for form in (cayley_full, cayley_economical):
                try:
                    with np.errstate(all="ignore"):
                        form(x, scale * ze, check=False)
                except SingularCayley:
                    caught += 1
            assert caught == 2
            return
        pytest.fail("no direction with a real Hamiltonian eigenvalue found")

    @pytest.mark.slow
    def test_economical_cost_scales_linearly_in_n(self, rng):
        k = 4
        times = {}
        z_cache = {}
        for n in (200, 400, 800):
            x = random_point(n, k, rng)
            z = random_tangent(x, rng, norm=0.5)
            cayley_economical(x, z.entries, check=False)  # warm up
            reps = 5
            t0 = time.perf_counter()
            for _ in range(reps):
                cayley_economical(x, z.entries, check=False)
            times[n] = (time.perf_counter() - t0) / reps
        # linear growth: quadrupling n should stay far from quadratic (16x)
        assert times[800] / times[200] < 10.0


class TestQuasiGeodesic:
    def test_zero_direction(self, rng):
        x = random_point(6, 2, rng)
        r = quasi_geodesic(x, np.zeros_like(x.entries))
        assert np.allclose(r.entries, x.entries)

    def test_exponent_block_structure(self, rng):
        # the lower-left block of the 4k x 4k exponent is the identity
        x = random_point(6, 2, rng)
        z = random_tangent(x, rng)
        w = x.entries.T @ jmul(z.entries)
        block = np.block([
            [-jmul(w), jmul(z.entries.T @ jmul(z.entries))],
            [np.eye(4), -jmul(w)],
        ])
        assert np.array_equal(block[4:, :4], np.eye(4))

    def test_first_order(self, rng):
        x = random_point(6, 2, rng)
        z = random_tangent(x, rng, norm=1.0)
        assert 0.2 <= remainder_ratio(RetractionKind.QUASI_GEODESIC, x, z) <= 0.3


class TestSrRetraction:
    def test_zero_direction_identity(self, rng):
        x = random_point(8, 3, rng)
        r = sr_retract(x, np.zeros_like(x.entries))
        assert np.linalg.norm(r.entries - x.entries) <= 1e-13

    def test_factorization_accuracy_at_large_step(self, rng):
        x = random_point(8, 3, rng)
        z = random_tangent_spectral(x, rng, 0.99)
        r = sr_retract(x, z.entries)
        assert symplecticity_residual(r) <= 1e-12

    def test_deterministic(self, rng):
        x = random_point(8, 3, rng)
        z = random_tangent(x, rng)
        r1 = sr_retract(x, z.entries)
        r2 = sr_retract(x, z.entries)
        assert np.array_equal(r1.entries, r2.entries)

    def test_breakdown_propagates(self):
        # a rank-one X + Z has isotropic pairs
        from spopt.core import canonical_point
        x = canonical_point(3, 1)
        z = -x.entries  # X + Z = 0
        with pytest.raises(Breakdown):
            sr_retract(x, z, check=False)

    def test_safeguard_rescales(self, rng):
        x = random_point(6, 2, rng)
        z = random_tangent_spectral(x, rng, 5.0)
        r = sr_retract(x, z.entries, safeguard=True)
        assert symplecticity_residual(r) <= 1e-10


class TestFeasibilityDrift:
    @pytest.mark.slow
    def test_sr_keeps_feasibility_best_on_random_walk(self):
        # 1000 steps of size 1e-2 along fresh random tangents; the SR
        # retraction must end at least as feasible as Cayley and quasi-geodesic
        n, k = 100, 10
        finals = {}
        for kind in (RetractionKind.SR, RetractionKind.CAYLEY_ECONOMICAL,
                     RetractionKind.QUASI_GEODESIC):
            rng = np.random.default_rng(7)
            x = random_point(n, k, rng)
            for _ in range(1000):
                y = rng.standard_normal(x.entries.shape)
                w = x.entries.T @ jmul(y)
                z = mulj(x.entries) @ (0.5 * (w + w.T))  # cheap tangent direction
                z *= 1e-2 / np.linalg.norm(z)
                x = retract(kind, x, z, check=False)
            finals[kind] = symplecticity_residual(x.entries)
        assert finals[RetractionKind.SR] <= finals[RetractionKind.CAYLEY_ECONOMICAL]
        assert finals[RetractionKind.SR] <= finals[RetractionKind.QUASI_GEODESIC]
