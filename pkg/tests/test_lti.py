import numpy as np
import pytest
import scipy.linalg

from mtctrl import (
    StateSpace,
    balanced_minimal_realization,
    gramians,
    h2_norm_sq,
    hinf_norm,
    impulse_response,
    l1_norm,
    lqr,
    negative_feedback,
    solve_lyapunov,
    spectral_abscissa,
)
from mtctrl.errors import (
    DegenerateGramian,
    DimensionMismatch,
    NotHurwitz,
    NotSiso,
    NotStabilizable,
)

from conftest import random_stable


class TestSolveLyapunov:
    def test_minus_identity(self):
        P = solve_lyapunov(-np.eye(2), np.eye(2))
        assert np.allclose(P, 0.5 * np.eye(2), atol=1e-12)

    def test_scalar(self):
        P = solve_lyapunov([[-1.0]], [[4.0]])
        assert np.allclose(P, [[2.0]], atol=1e-12)

    def test_random_residual(self, rng):
        for _ in range(20):
            sys = random_stable(rng, 5, m=2)
            M = sys.B @ sys.B.T
            P = solve_lyapunov(sys.A, M)
            res = np.linalg.norm(sys.A @ P + P @ sys.A.T + M)
            assert res <= 1e-9 * max(1.0, np.linalg.norm(M))
            assert np.allclose(P, P.T)

    def test_not_hurwitz(self):
        with pytest.raises(NotHurwitz):
            solve_lyapunov(np.eye(2), np.eye(2))

    def test_asymmetric_m_rejected(self):
        with pytest.raises(ValueError):
            solve_lyapunov(-np.eye(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestGramians:
    def test_scalar_values(self):
        P, Q = gramians(StateSpace(-1, 1, 2))
        assert np.allclose(P, 0.5)
        assert np.allclose(Q, 2.0)

    def test_zero_input_map(self):
        P, _ = gramians(StateSpace(-1, 0, 1))
        assert np.allclose(P, 0.0)

    def test_dual_trace_identity(self, rng):
        for _ in range(100):
            sys = random_stable(rng, 3)
            P, Q = gramians(sys)
            lhs = float(np.trace(sys.C @ P @ sys.C.T))
            rhs = float(np.trace(sys.B.T @ Q @ sys.B))
            assert lhs == pytest.approx(rhs, rel=1e-8)


class TestH2Norm:
    def test_scalar(self):
        assert h2_norm_sq(StateSpace(-1, 1, 2)) == pytest.approx(2.0, abs=1e-12)

    def test_zero_output(self):
        assert h2_norm_sq(StateSpace(-1, 1, 0)) == pytest.approx(0.0, abs=1e-15)

    def test_quadrature_oracle(self, rng):
        sys = random_stable(rng, 4)
        t = np.linspace(0.0, 40.0, 20001)
        g = impulse_response(sys, t)
        energy = np.trapezoid(np.sum(g * g, axis=(1, 2)), t)
        assert h2_norm_sq(sys) == pytest.approx(energy, rel=1e-4)

    def test_similarity_invariance(self, rng):
        sys = random_stable(rng, 4, m=2, p=2)
        ref = h2_norm_sq(sys)
        for _ in range(5):
            T = rng.standard_normal((4, 4)) + 3 * np.eye(4)
            Ti = np.linalg.inv(T)
            sim = StateSpace(T @ sys.A @ Ti, T @ sys.B, sys.C @ Ti)
            assert h2_norm_sq(sim) == pytest.approx(ref, rel=1e-6)

    def test_unstable_raises(self):
        with pytest.raises(NotHurwitz):
            h2_norm_sq(StateSpace(1, 1, 1))


class TestHinfNorm:
    def test_scalar_dc_peak(self):
        assert hinf_norm(StateSpace(-1, 1, 2)) == pytest.approx(2.0, rel=1e-5)

    def test_zero_input(self):
        assert hinf_norm(StateSpace(-1, 0, 2)) == 0.0

    def test_frequency_grid_oracle(self, rng):
        for _ in range(5):
            sys = random_stable(rng, 3)
            omega = np.logspace(-3, 3, 4000)
            gains = [
                np.linalg.norm(
                    sys.C @ np.linalg.solve(1j * w * np.eye(3) - sys.A, sys.B), 2
                )
                for w in omega
            ]
            assert hinf_norm(sys, tol=1e-6) == pytest.approx(max(gains), rel=1e-4)

    def test_dc_gain_lower_bound(self, rng):
        for _ in range(20):
            sys = random_stable(rng, 3, m=2, p=2)
            dc = np.linalg.norm(sys.C @ np.linalg.solve(-sys.A, sys.B), 2)
            assert hinf_norm(sys, tol=1e-6) >= dc - 1e-6 * dc


class TestL1Norm:
    def test_sign_constant_scalar(self):
        assert l1_norm(StateSpace(-1, 1, 2)) == pytest.approx(2.0, rel=1e-4)
        assert l1_norm(StateSpace(-2, 1, 1)) == pytest.approx(0.5, rel=1e-4)

    def test_requires_siso(self):
        with pytest.raises(NotSiso):
            l1_norm(StateSpace(-np.eye(2), np.eye(2), np.eye(2)))


class TestSpectralAbscissa:
    def test_diagonal(self):
        assert spectral_abscissa(-np.eye(3)) == pytest.approx(-1.0)

    def test_nilpotent(self):
        assert spectral_abscissa([[0.0, 1.0], [0.0, 0.0]]) == pytest.approx(0.0)

    def test_charpoly_oracle(self, rng):
        A = rng.standard_normal((6, 6))
        roots = np.roots(np.poly(A))
        assert spectral_abscissa(A) == pytest.approx(max(roots.real), abs=1e-8)


class TestBalancedRealization:
    def test_scalar_hankel(self):
        bal = balanced_minimal_realization(StateSpace(-1, 1, 2))
        assert np.allclose(bal.hankel, [1.0], atol=1e-10)

    def test_duplicate_modes_collapse(self, rng):
        # the collapsed modes inflate to ~sqrt(solver residual), so the
        # numerical-rank cut is made explicit here
        sys = random_stable(rng, 2)
        A = scipy.linalg.block_diag(sys.A, sys.A)
        B = np.vstack([sys.B, sys.B])
        C = scipy.linalg.block_diag(sys.C, sys.C)
        bal = balanced_minimal_realization(StateSpace(A, B, C), rank_tol=1e-6)
        assert bal.order == sys.n

    def test_hankel_match_sqrt_eig(self, rng):
        for _ in range(10):
            sys = random_stable(rng, 4)
            P, Q = gramians(sys)
            sigma_ref = np.sort(np.sqrt(np.clip(np.linalg.eigvals(P @ Q).real, 0, None)))[::-1]
            bal = balanced_minimal_realization(sys)
            assert np.allclose(bal.hankel, sigma_ref[: bal.order], atol=1e-8 * max(1, sigma_ref[0]))

    def test_balanced_gramians_diagonal(self, rng):
        sys = random_stable(rng, 4)
        bal = balanced_minimal_realization(sys)
        P, Q = gramians(bal.sys)
        S = np.diag(bal.hankel)
        tol = 1e-7 * bal.hankel[0]
        assert np.linalg.norm(P - S) <= tol
        assert np.linalg.norm(Q - S) <= tol
        assert np.all(np.diff(bal.hankel) <= 0) and np.all(bal.hankel > 0)


class TestLqr:
    def test_scalar(self):
        K, P = lqr([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        assert np.allclose(K, [[1.0]], atol=1e-10)
        assert np.allclose(P, [[1.0]], atol=1e-10)

    def test_double_integrator(self):
        A = [[0.0, 1.0], [0.0, 0.0]]
        B = [0.0, 1.0]
        K, P = lqr(A, B, np.eye(2), [[1.0]])
        assert np.allclose(K, [[1.0, np.sqrt(3.0)]], atol=1e-9)
        res = np.asarray(A).T @ P + P @ np.asarray(A) - P @ [[0, 0], [0, 1]] @ P + np.eye(2)
        assert np.linalg.norm(res) <= 1e-8

    def test_closed_loop_hurwitz(self, rng):
        for _ in range(10):
            n = int(rng.integers(2, 5))
            A = rng.standard_normal((n, n))
            B = rng.standard_normal((n, 2))
            K, P = lqr(A, B, np.eye(n), np.eye(2))
            assert spectral_abscissa(A - B @ K) < 0
            res = A.T @ P + P @ A - P @ B @ B.T @ P + np.eye(n)
            assert np.linalg.norm(res) <= 1e-8 * max(1, np.linalg.norm(P @ B @ B.T @ P))

    def test_not_stabilizable(self):
        # decoupled unstable state with no input authority
        A = np.diag([1.0, -1.0])
        B = np.array([[0.0], [1.0]])
        with pytest.raises(NotStabilizable):
            lqr(A, B, np.eye(2), [[1.0]])


class TestNegativeFeedback:
    def test_zero_controller_keeps_plant(self, rng):
        plant = random_stable(rng, 2)
        zero_ctrl = StateSpace(-np.eye(1), np.ones((1, 1)), np.zeros((1, 1)))
        cl = negative_feedback(plant, zero_ctrl)
        t = np.linspace(0.0, 5.0, 101)
        assert np.allclose(
            impulse_response(cl, t), impulse_response(plant, t), atol=1e-9
        )

    def test_fast_controller_pole(self):
        k = 1e3
        plant = StateSpace(0, 1, 1)
        ctrl = StateSpace(-k, k, 1)
        cl = negative_feedback(plant, ctrl)
        poles = np.sort(np.linalg.eigvals(cl.A).real)
        assert poles[-1] == pytest.approx(-1.0, abs=2e-3)

    def test_dimension_mismatch(self, rng):
        plant = random_stable(rng, 2, m=1, p=2)
        ctrl = random_stable(rng, 2, m=1, p=1)
        with pytest.raises(DimensionMismatch):
            negative_feedback(plant, ctrl)


class TestImpulseResponse:
    def test_t0_equals_cb(self, rng):
        sys = random_stable(rng, 3, m=2, p=2)
        g0 = impulse_response(sys, [0.0])[0]
        assert np.array_equal(g0, sys.C @ sys.B)

    def test_scalar_exponential(self):
        g = impulse_response(StateSpace(-1, 1, 2), [1.0])[0, 0, 0]
        assert g == pytest.approx(2.0 * np.exp(-1.0), abs=1e-9)

    def test_expm_oracle(self, rng):
        for _ in range(5):
            sys = random_stable(rng, 3)
            g = impulse_response(sys, [2.0])[0]
            g_ref = sys.C @ scipy.linalg.expm(2.0 * sys.A) @ sys.B
            assert np.abs(g - g_ref).max() <= 1e-8


def test_degenerate_gramian_not_triggered_by_semidefinite(rng):
    # non-minimal system: P is singular but PSD, balancing must still work
    sys = random_stable(rng, 2)
    A = scipy.linalg.block_diag(sys.A, -1.0)
    B = np.vstack([sys.B, [[0.0]]])
    C = np.hstack([sys.C, [[1.0]]])
    bal = balanced_minimal_realization(StateSpace(A, B, C))
    assert bal.order == 2


def test_state_space_coercion_and_checks():
    s = StateSpace(-1, 1, 2)
    assert s.A.shape == (1, 1) and s.B.shape == (1, 1) and s.C.shape == (1, 1)
    with pytest.raises(DimensionMismatch):
        StateSpace(np.zeros((2, 3)), np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        StateSpace([[np.nan]], 1, 1)
