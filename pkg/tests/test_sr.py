import numpy as np
import pytest

from spopt.core import canonical_point, jmul, perfect_shuffle, poisson, symplecticity_residual
from spopt.sr import (
    Breakdown,
    desr,
    even_minor_check,
    in_normalized_triangular_set,
    sgs,
    sgs_basic,
    sgs_modified,
    spectral_norm_estimate,
)

from conftest import random_point, random_tangent_spectral


def unit(n2, i):
    e = np.zeros(n2)
    e[i] = 1.0
    return e


class TestDesr:
    def test_symplectic_pair_is_identity(self):
        n = 4
        a = np.column_stack([unit(2 * n, 0), unit(2 * n, n)])
        f = desr(a)
        assert np.allclose(f.s(), a)
        assert np.allclose(f.r(), np.eye(2))

    def test_scaled_pair(self):
        n = 3
        a = np.column_stack([2 * unit(2 * n, 0), 3 * unit(2 * n, n)])
        f = desr(a)
        assert np.isclose(f.omega, 6.0)
        assert np.isclose(f.r11, np.sqrt(6.0))
        assert np.isclose(f.r22, np.sqrt(6.0))
        assert np.allclose(f.s1, 2 * unit(6, 0) / np.sqrt(6.0))
        assert np.allclose(f.s2, 3 * unit(6, 3) / np.sqrt(6.0))
        assert np.allclose(f.s() @ f.r(), a)

    def test_negative_omega(self):
        n = 3
        a = np.column_stack([unit(2 * n, n), unit(2 * n, 0)])  # omega = -1
        f = desr(a)
        assert f.r22 == -f.r11
        assert np.allclose(f.s() @ f.r(), a)

    def test_isotropic_breaks(self):
        a = np.column_stack([unit(6, 0), unit(6, 1)])
        with pytest.raises(Breakdown):
            desr(a)

    def test_zero_column_breaks(self):
        a = np.column_stack([unit(6, 0), np.zeros(6)])
        with pytest.raises(Breakdown):
            desr(a)


def brute_force_minors_nonzero(a):
    """Independent oracle: evaluate the even leading minors with plain det."""
    k = a.shape[1] // 2
    p = perfect_shuffle(k).matrix()
    gram = p @ (a.T @ jmul(a)) @ p.T
    scale = max(np.linalg.norm(gram, 2), 1e-300)
    return all(
        abs(np.linalg.det(gram[: 2 * j, : 2 * j])) > (1e-10 * scale) ** (2 * j)
        for j in range(1, k + 1)
    )


class TestSgsBasic:
    def test_psps_input_identity(self, rng):
        x = random_point(6, 3, rng)
        shuffle = perfect_shuffle(3)
        psps = shuffle.shuffle_cols(x.entries)
        f = sgs_basic(psps)
        assert np.allclose(f.s_hat, psps, atol=1e-12)
        assert np.allclose(f.r_hat, np.eye(6), atol=1e-12)

    def test_shuffled_canonical_point(self):
        e = canonical_point(5, 2)
        psps = perfect_shuffle(2).shuffle_cols(e.entries)
        f = sgs_basic(psps)
        assert np.allclose(f.r_hat, np.eye(4), atol=1e-14)

    def test_random_reconstruction_with_minor_oracle(self, rng):
        a = rng.standard_normal((8, 4))
        assert brute_force_minors_nonzero(a)
        f = sgs_basic(a)
        assert np.linalg.norm(a - f.s_hat @ f.r_hat) <= 1e-12 * np.linalg.norm(a)

    def test_psps_invariant_of_output(self, rng):
        a = rng.standard_normal((12, 6))
        f = sgs_basic(a)
        hat = np.zeros((6, 6))
        for j in range(3):
            hat[2 * j: 2 * j + 2, 2 * j: 2 * j + 2] = poisson(1)
        assert np.linalg.norm(f.s_hat.T @ jmul(f.s_hat) - hat) <= 1e-10

    def test_r_hat_block_structure(self, rng):
        # upper triangular with diagonal 2x2 blocks: zero off-entries,
        # positive first entry, matched absolute values
        a = rng.standard_normal((12, 6))
        r = sgs_basic(a).r_hat
        assert np.array_equal(r, np.triu(r))
        for j in range(3):
            block = r[2 * j: 2 * j + 2, 2 * j: 2 * j + 2]
            assert block[0, 1] == 0.0 and block[1, 0] == 0.0
            assert block[0, 0] > 0.0
            assert np.isclose(abs(block[1, 1]), block[0, 0])


class TestSgsModified:
    def test_agrees_with_basic(self, rng):
        a = rng.standard_normal((10, 6))
        fb, fm = sgs_basic(a), sgs_modified(a)
        assert np.allclose(fb.s_hat, fm.s_hat, atol=1e-10)
        assert np.allclose(fb.r_hat, fm.r_hat, atol=1e-10)

    def test_psps_input_identity(self, rng):
        x = random_point(7, 2, rng)
        psps = perfect_shuffle(2).shuffle_cols(x.entries)
        f = sgs_modified(psps)
        assert np.allclose(f.s_hat, psps, atol=1e-12)
        assert np.allclose(f.r_hat, np.eye(4), atol=1e-12)

    def test_graded_columns_not_worse_than_basic(self, rng):
        # columns with norms 1, 1e-4, 1e-8: the modified ordering must not
        # lose accuracy relative to the classical one
        a = rng.standard_normal((12, 6))
        a[:, 0:2] *= 1.0
        a[:, 2:4] *= 1e-4
        a[:, 4:6] *= 1e-8
        rb = _recon_residual(sgs_basic, a)
        rm = _recon_residual(sgs_modified, a)
        assert rm <= 1e-12
        assert rm <= 10 * rb + 1e-15


def _recon_residual(factor, a):
    f = factor(a)
    return np.linalg.norm(a - f.s_hat @ f.r_hat) / np.linalg.norm(a)


class TestSgs:
    def test_symplectic_input_identity(self, rng):
        x = random_point(8, 3, rng)
        f = sgs(x.entries)
        assert np.allclose(f.s.entries, x.entries, atol=1e-11)
        assert np.allclose(f.r, np.eye(6), atol=1e-11)

    def test_column_scaled_canonical(self):
        e = canonical_point(4, 2)
        a = e.entries @ np.diag([2.0, 3.0, 0.5, 1.0 / 3.0])
        f = sgs(a)
        assert np.linalg.norm(a - f.s.entries @ f.r) <= 1e-12 * np.linalg.norm(a)
        assert symplecticity_residual(f.s) <= 1e-12
        assert in_normalized_triangular_set(f.r, atol=1e-13)

    def test_isotropic_leading_pair_breaks(self):
        # columns 1 and k+1 (the first shuffled pair) identical => isotropic
        a = np.zeros((8, 4))
        a[:, 0] = unit(8, 0)
        a[:, 2] = unit(8, 0)
        a[:, 1] = unit(8, 1)
        a[:, 3] = unit(8, 5)
        with pytest.raises(Breakdown):
            sgs(a)

    def test_reconstruction_across_sizes(self, rng):
        for n, k in [(5, 1), (10, 4), (40, 10), (100, 20)]:
            a = rng.standard_normal((2 * n, 2 * k))
            f = sgs(a)
            assert np.linalg.norm(a - f.s.entries @ f.r) <= 1e-11 * np.linalg.norm(a)
            assert in_normalized_triangular_set(f.r, atol=1e-10 * np.linalg.norm(f.r))

    def test_deterministic_bitwise(self, rng):
        a = rng.standard_normal((12, 4))
        f1, f2 = sgs(a), sgs(a)
        assert np.array_equal(f1.s.entries, f2.s.entries)
        assert np.array_equal(f1.r, f2.r)

    def test_wide_matrix_rejected(self, rng):
        with pytest.raises(ValueError):
            sgs(rng.standard_normal((4, 6)))

    def test_tangent_perturbation_domain(self, rng):
        # spectral radius below one guarantees factorizability
        x = random_point(10, 3, rng)
        for trial in range(50):
            z = random_tangent_spectral(x, rng, 0.99)
            sgs(x.entries + z.entries)  # must not raise


class TestEvenMinorCheck:
    def test_symplectic_true(self, rng):
        x = random_point(6, 2, rng)
        assert even_minor_check(x.entries)

    def test_identical_columns_false(self):
        a = np.ones((6, 4))
        assert not even_minor_check(a)

    def test_matches_sgs_on_random_batch(self, rng):
        agree = 0
        for trial in range(200):
            a = rng.standard_normal((6, 4))
            ok_minor = even_minor_check(a)
            try:
                sgs(a)
                ok_sgs = True
            except Breakdown:
                ok_sgs = False
            agree += ok_minor == ok_sgs
        assert agree == 200

    def test_matches_brute_force(self, rng):
        for trial in range(100):
            a = rng.standard_normal((6, 4))
            assert even_minor_check(a) == brute_force_minors_nonzero(a)


class TestSpectralNormEstimate:
    def test_against_svd(self, rng):
        z = rng.standard_normal((30, 8))
        est = spectral_norm_estimate(z, iters=200, tol=1e-12)
        assert np.isclose(est, np.linalg.norm(z, 2), rtol=1e-6)

    def test_zero(self):
        assert spectral_norm_estimate(np.zeros((6, 2))) == 0.0
