import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from spdsliced import (
    SpdMatrix,
    SymMatrix,
    dist_affine_invariant,
    dist_log_euclidean,
    log_frechet_derivative,
    sym_exp,
    sym_log,
    udu_decompose,
)
from spdsliced.errors import DimensionMismatch, NotPositiveDefinite
from spdsliced.linalg import (
    EXP_CAP,
    exp_frechet_sym,
    udu_stack,
    unvech_isometric,
    vech_isometric,
)

from conftest import random_spd, random_sym


class TestTypes:
    def test_symmetrizes_on_construction(self, nprng):
        a = nprng.standard_normal((4, 4))
        m = SymMatrix(a)
        assert np.array_equal(m.array, m.array.T)
        assert np.allclose(m.array, 0.5 * (a + a.T))

    def test_rejects_nonsquare_and_nonfinite(self):
        with pytest.raises(DimensionMismatch):
            SymMatrix(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            SymMatrix(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    def test_immutability(self):
        m = SymMatrix(np.eye(2))
        with pytest.raises(AttributeError):
            m.dim = 3
        with pytest.raises(ValueError):
            m.array[0, 0] = 5.0

    def test_spd_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            SpdMatrix(np.diag([1.0, -0.5]))
        with pytest.raises(NotPositiveDefinite):
            SpdMatrix(np.diag([1.0, 0.0]))

    def test_cached_log_reconstructs(self, nprng):
        m = SpdMatrix(random_spd(nprng, 5))
        rebuilt = sym_exp(m.log)
        rel = np.linalg.norm(rebuilt.array - m.array) / np.linalg.norm(m.array)
        assert rel < 1e-8
        assert m.log is m.log  # cache is filled once

    def test_eigenpair_invariants(self, nprng):
        m = SpdMatrix(random_spd(nprng, 6))
        q = m.eig.eigenvectors
        assert np.linalg.norm(q.T @ q - np.eye(6)) < 1e-10
        rel = np.linalg.norm(m.eig.reconstruct() - m.array) / np.linalg.norm(m.array)
        assert rel < 1e-10


class TestLogExp:
    def test_log_identity_is_zero(self):
        assert np.allclose(sym_log(np.eye(3)).array, 0.0)

    def test_log_diagonal(self):
        out = sym_log(np.diag([np.e, 1.0]))
        assert np.allclose(out.array, np.diag([1.0, 0.0]), atol=1e-14)

    def test_exp_zero_is_identity(self):
        assert np.allclose(sym_exp(np.zeros((4, 4))).array, np.eye(4))

    def test_exp_diagonal(self):
        out = sym_exp(np.diag([1.0, 0.0]))
        assert np.allclose(out.array, np.diag([np.e, 1.0]), atol=1e-14)

    def test_roundtrip_wishart(self, nprng):
        for _ in range(20):
            m = random_spd(nprng, 4)
            back = sym_exp(sym_log(m)).array
            assert np.linalg.norm(back - m) / np.linalg.norm(m) < 1e-10

    def test_roundtrip_log_of_exp(self, nprng):
        for _ in range(20):
            s = random_sym(nprng, 4, scale=2.0)
            back = sym_log(sym_exp(s)).array
            assert np.linalg.norm(back - s) <= 1e-10 * max(1.0, np.linalg.norm(s))

    def test_matches_scipy_logm(self, nprng):
        m = random_spd(nprng, 5)
        ours = sym_log(m).array
        theirs = scipy.linalg.logm(m)
        assert np.linalg.norm(ours - theirs) < 1e-10

    def test_exp_overflow_guard(self):
        with pytest.raises(OverflowError):
            sym_exp(np.diag([EXP_CAP + 1.0, 0.0]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_roundtrip_property(self, seed):
        rng = np.random.default_rng(seed)
        s = random_sym(rng, 3)
        s *= min(1.0, 6.0 / max(np.abs(np.linalg.eigvalsh(s))))  # condition <= ~1e6
        back = sym_log(sym_exp(s)).array
        assert np.linalg.norm(back - s) <= 1e-10 * max(1.0, np.linalg.norm(s))


class TestDistances:
    def test_le_self_distance_zero(self, nprng):
        m = random_spd(nprng, 3)
        assert dist_log_euclidean(m, m) == 0.0

    def test_le_diagonal_example(self):
        assert abs(dist_log_euclidean(np.diag([np.e, 1.0]), np.eye(2)) - 1.0) < 1e-14

    def test_le_triangle_inequality(self, nprng):
        for _ in range(50):
            x, y, z = (random_spd(nprng, 3) for _ in range(3))
            dxz = dist_log_euclidean(x, z)
            dxy = dist_log_euclidean(x, y)
            dyz = dist_log_euclidean(y, z)
            assert dxz <= dxy + dyz + 1e-10

    def test_le_dimension_mismatch(self, nprng):
        with pytest.raises(DimensionMismatch):
            dist_log_euclidean(random_spd(nprng, 2), random_spd(nprng, 3))

    def test_ai_self_distance_zero(self, nprng):
        m = random_spd(nprng, 4)
        assert dist_affine_invariant(m, m) < 1e-12

    def test_ai_equals_le_for_commuting(self):
        x, y = np.diag([4.0, 1.0]), np.diag([1.0, 1.0])
        assert abs(dist_affine_invariant(x, y) - dist_log_euclidean(x, y)) < 1e-12

    def test_ai_affine_invariance(self, nprng):
        for _ in range(20):
            x, y = random_spd(nprng, 3), random_spd(nprng, 3)
            g = nprng.standard_normal((3, 3))
            while abs(np.linalg.det(g)) < 0.1:
                g = nprng.standard_normal((3, 3))
            base = dist_affine_invariant(x, y)
            moved = dist_affine_invariant(g @ x @ g.T, g @ y @ g.T)
            assert abs(base - moved) <= 1e-8 * max(1.0, base)


class TestLogFrechetDerivative:
    def test_identity_base_point(self, nprng):
        h = random_sym(nprng, 4)
        out = log_frechet_derivative(np.eye(4), h)
        assert np.allclose(out.array, h, atol=1e-12)

    def test_linearity(self, nprng):
        m = random_spd(nprng, 4)
        h1, h2 = random_sym(nprng, 4), random_sym(nprng, 4)
        lhs = log_frechet_derivative(m, 2.0 * h1 - 3.0 * h2).array
        rhs = 2.0 * log_frechet_derivative(m, h1).array - 3.0 * log_frechet_derivative(m, h2).array
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))

    @staticmethod
    def _fd_oracle(m, h, eps=1e-5):
        plus = scipy.linalg.logm(m + eps * h)
        minus = scipy.linalg.logm(m - eps * h)
        return (plus - minus) / (2.0 * eps)

    def test_matches_finite_differences(self, nprng):
        for _ in range(20):
            m = random_spd(nprng, 4)
            h = random_sym(nprng, 4)
            ours = log_frechet_derivative(m, h).array
            oracle = self._fd_oracle(m, h)
            assert np.linalg.norm(ours - oracle) / np.linalg.norm(oracle) <= 1e-6

    def test_near_degenerate_spectrum(self, nprng):
        # Two eigenvalues within 1e-7 of each other.
        q = np.linalg.qr(nprng.standard_normal((4, 4)))[0]
        w = np.array([0.5, 1.0, 1.0 + 1e-7, 3.0])
        m = (q * w) @ q.T
        h = random_sym(nprng, 4)
        ours = log_frechet_derivative(m, h).array
        oracle = self._fd_oracle(m, h)
        assert np.linalg.norm(ours - oracle) / np.linalg.norm(oracle) <= 1e-6

    def test_exp_derivative_inverse_relation(self, nprng):
        # Dexp at S is the inverse map of Dlog at exp(S).
        s = random_sym(nprng, 3)
        h = random_sym(nprng, 3)
        m = sym_exp(s)
        forward = exp_frechet_sym(s, h).array
        back = log_frechet_derivative(m, forward).array
        assert np.linalg.norm(back - h) <= 1e-9 * max(1.0, np.linalg.norm(h))


class TestUdu:
    def test_diagonal_input(self):
        u, d = udu_decompose(np.diag([3.0, 5.0, 7.0]))
        assert np.array_equal(u, np.eye(3))
        assert np.array_equal(d, np.array([3.0, 5.0, 7.0]))

    def test_two_by_two_example(self):
        u, d = udu_decompose(np.array([[2.0, 1.0], [1.0, 1.0]]))
        assert np.array_equal(u, np.array([[1.0, 1.0], [0.0, 1.0]]))
        assert np.array_equal(d, np.ones(2))

    def test_reconstruction_random(self, nprng):
        for _ in range(20):
            m = random_spd(nprng, 5)
            u, d = udu_decompose(m)
            rebuilt = (u * d) @ u.T
            assert np.linalg.norm(rebuilt - m) / np.linalg.norm(m) <= 1e-10
            assert np.array_equal(np.diag(u), np.ones(5))
            assert np.array_equal(u, np.triu(u))
            assert np.all(d > 0)

    def test_batch_matches_single(self, nprng):
        mats = np.stack([random_spd(nprng, 4) for _ in range(6)])
        us, ds = udu_stack(mats)
        for k in range(6):
            u, d = udu_decompose(mats[k])
            assert np.array_equal(us[k], u)
            assert np.array_equal(ds[k], d)

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            udu_decompose(np.diag([1.0, -1.0]))


class TestVectorization:
    def test_isometry(self, nprng):
        s = random_sym(nprng, 5)
        t = random_sym(nprng, 5)
        vs, vt = vech_isometric(s), vech_isometric(t)
        assert abs(vs @ vt - np.sum(s * t)) < 1e-12 * max(1.0, abs(np.sum(s * t)))

    def test_roundtrip(self, nprng):
        s = random_sym(nprng, 4)
        assert np.allclose(unvech_isometric(vech_isometric(s)), s, atol=1e-14)
