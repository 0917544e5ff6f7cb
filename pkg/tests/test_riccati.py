import numpy as np
import pytest
from conftest import rand_psd
from hypothesis import given, settings
from hypothesis import strategies as st

from qns.linalg import loewner_slack, rng_stream
from qns.model import PowerLawSpectrum
from qns.riccati import (
    BoundingConfig,
    antisym_blocks,
    bounding_step,
    closed_form_discrete_gram,
    euler_update,
    init_bounding,
    monotone_update,
    riccati_blocks,
    v_update,
)


class TestMonotoneUpdate:
    def test_half_identity_center(self):
        # 2G - I = 0 kills the middle term; only the (eta/2) L drift remains
        lam = np.array([1.0, 0.4])
        out = monotone_update(0.5 * np.eye(2), lam, 0.2)
        np.testing.assert_allclose(out, 0.5 * np.eye(2) + 0.1 * np.diag(lam), atol=1e-15)

    def test_scalar_hand_value(self):
        # g' = 1 - (0.1/2)*1/(1.1) + 0.05
        out = monotone_update(np.array([[1.0]]), [1.0], 0.1)
        assert out[0, 0] == pytest.approx(1.0 - 0.05 / 1.1 + 0.05, abs=1e-15)

    def test_eta_zero_identity(self, rng):
        g = rand_psd(rng, 3)
        np.testing.assert_allclose(monotone_update(g, [1.0, 0.5, 0.2], 0.0), g, atol=1e-15)

    def test_matches_euler_to_second_order(self, rng):
        lam = np.array([1.0, 0.6, 0.3])
        g = rand_psd(rng, 3, scale=0.5)
        errs = []
        for eta in (0.02, 0.01):
            errs.append(np.abs(monotone_update(g, lam, eta) - euler_update(g, lam, eta)).max())
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)

    def test_change_of_variables_consistency(self, rng):
        # V = 2 L^{1/2} G L^{1/2} - L conjugates the G map into the V map
        lam = np.sort(rng.uniform(0.3, 1.0, 4))[::-1]
        g0 = np.diag(rng.uniform(0.05, 0.95, 4))
        eta = 0.2
        sq = np.sqrt(lam)
        v0 = 2.0 * (sq[:, None] * g0 * sq[None, :]) - np.diag(lam)
        v1 = v_update(v0, lam, eta)
        g1v = (v1 + np.diag(lam)) / (2.0 * np.outer(sq, sq))
        np.testing.assert_allclose(monotone_update(g0, lam, eta), g1v, atol=1e-12)

    def test_fixed_points_preserved(self):
        lam = np.array([1.0, 0.5])
        eta = 0.1
        # G = I and G = 0 are fixed up to O(eta^2) (exact Riccati equilibria)
        drift_i = np.abs(monotone_update(np.eye(2), lam, eta) - np.eye(2)).max()
        drift_0 = np.abs(monotone_update(np.zeros((2, 2)), lam, eta)).max()
        assert drift_i <= eta**2 * lam.max() ** 2
        assert drift_0 <= eta**2 * lam.max() ** 2

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_order_preserved_property(self, trial):
        rng = rng_stream(trial, 77)
        n = int(rng.integers(2, 9))
        lam = np.sort(rng.uniform(0.1, 1.0, n))[::-1]
        eta = rng.uniform(0.01, 0.45) / lam[0]
        g_minus = rand_psd(rng, n, scale=rng.uniform(0.3, 2.0))
        g_plus = g_minus + rand_psd(rng, n, scale=rng.uniform(0.1, 2.0))
        slack = loewner_slack(monotone_update(g_plus, lam, eta), monotone_update(g_minus, lam, eta))
        assert slack >= -1e-10


class TestEulerCounterexample:
    def test_euler_violates_order_somewhere(self):
        rng = rng_stream(42, 78)
        lam = np.array([1.0, 0.7, 0.5])
        eta = 0.45 / lam[0]
        found = False
        for _ in range(200):
            g_minus = rand_psd(rng, 3)
            g_plus = g_minus + rand_psd(rng, 3)
            if loewner_slack(euler_update(g_plus, lam, eta), euler_update(g_minus, lam, eta)) < -1e-10:
                found = True
                break
        assert found, "plain Euler is expected to break the Loewner order"


class TestVUpdate:
    def test_zero_state(self):
        lam = np.array([1.0, 0.5])
        np.testing.assert_allclose(v_update(np.zeros((2, 2)), lam, 0.3), 0.3 * np.diag(lam**2))

    def test_lambda_hat_is_subfixed_point(self):
        # V = Lhat is not fixed; the iterate stays above it
        lam = np.array([0.8, 0.5, 0.3])
        v = np.diag(lam)
        for _ in range(50):
            v = v_update(v, lam, 0.2)
            assert loewner_slack(v, np.diag(lam)) >= -1e-12


class TestBlocks:
    def test_one_step_blocks(self):
        lam = np.array([1.0, 0.5])
        eta = 0.2
        b = riccati_blocks(lam, eta, 1)
        np.testing.assert_allclose(b.a11, np.ones(2))
        np.testing.assert_allclose(b.a12, eta * lam)
        np.testing.assert_allclose(b.a22, 1 + eta**2 * lam**2)

    def test_zero_steps_identity(self):
        b = riccati_blocks(np.array([0.7]), 0.3, 0)
        assert b.a11[0] == pytest.approx(1.0)
        assert b.a12[0] == pytest.approx(0.0)
        assert b.a22[0] == pytest.approx(1.0)

    def test_identities_to_t100(self, rng):
        # both identities hold to 1e-12 relative for random (eta, lambda)
        for _ in range(25):
            lam = np.sort(rng.uniform(0.2, 1.0, 6))[::-1]
            eta = rng.uniform(0.01, 0.25)
            t = int(rng.integers(1, 101))
            b = riccati_blocks(lam, eta, t)
            sum_rel = np.abs(b.scaled_a11 + eta * lam * b.scaled_a12 - b.scaled_a22) / b.scaled_a22
            det = b.scaled_a22 * b.scaled_a11 - b.scaled_a12**2
            det_rel = np.abs(det - np.exp(-2 * b.log_scale)) / (b.scaled_a11 * b.scaled_a22)
            assert sum_rel.max() <= 1e-12
            assert det_rel.max() <= 1e-12

    def test_two_step_zero_diagonal_squaring(self):
        # [[1, eta],[eta l^2, 1]]^2 = [[1+eta^2 l^2, 2 eta],[2 eta l^2, 1+eta^2 l^2]]
        lam = np.array([0.8])
        eta = 0.3
        b = antisym_blocks(lam, eta, 2)
        assert b.a11[0] == pytest.approx(1 + eta**2 * lam[0] ** 2, rel=1e-14)
        assert b.a12[0] / lam[0] == pytest.approx(2 * eta, rel=1e-14)

    def test_closed_form_vs_matrix_power(self):
        lam = np.array([0.9, 0.4])
        eta = 0.15
        for t in (1, 3, 17, 64):
            b = antisym_blocks(lam, eta, t)
            for i, l in enumerate(lam):
                p = np.linalg.matrix_power(np.array([[1.0, eta], [eta * l**2, 1.0]]), t)
                assert abs(p[0, 0] - b.a11[i]) / p[0, 0] <= 1e-12
                assert abs(p[0, 1] - b.a12[i] / l) / p[0, 1] <= 1e-12
                assert abs(p[1, 1] - b.a22[i]) / p[1, 1] <= 1e-12

    def test_large_t_no_overflow(self):
        eta, lam = 0.1, 1.0
        b = riccati_blocks(np.array([lam]), eta, 1_000_000)
        assert np.isfinite(b.scaled_a11).all() and np.isfinite(b.log_scale).all()
        # t -> inf limit of a22/a12 is the top-eigenvector slope of the
        # companion matrix: eta lam / 2 + sqrt(1 + eta^2 lam^2 / 4)
        limit = eta * lam / 2 + np.sqrt(1 + eta**2 * lam**2 / 4)
        assert b.ratio_22_12()[0] == pytest.approx(limit, rel=1e-9)

    def test_ratio_bounds(self):
        # a11/a12 > sqrt(I + eta^2 L^2/4) - eta L / 2 and the two-sided chain
        lam = np.array([0.9, 0.5, 0.2])
        eta = 0.5
        for t in (1, 5, 20, 80):
            b = riccati_blocks(lam, eta, t)
            lb = np.sqrt(1 + eta**2 * lam**2 / 4) - eta * lam / 2
            assert np.all(b.ratio_11_12() > lb - 1e-12)
            mid = ((1 + eta * lam) ** t + (1 - eta * lam) ** t) / (
                (1 + eta * lam) ** t - (1 - eta * lam) ** t
            )
            assert np.all(b.ratio_22_12() > mid - 1e-10)
            assert np.all(mid >= b.ratio_11_12() - 1e-10)


class TestClosedFormDiscreteGram:
    def test_t_zero(self, rng):
        g0 = rand_psd(rng, 3)
        lam = np.array([1.0, 0.6, 0.3])
        np.testing.assert_array_equal(closed_form_discrete_gram(g0, lam, lam, lam, 0.1, 0), g0)

    def test_matches_iteration_t200(self, rng):
        lam = np.sort(rng.uniform(0.3, 1.0, 5))[::-1]
        g0 = np.diag(rng.uniform(0.01, 0.9, 5))
        eta = 0.05
        sq = np.sqrt(lam)
        v = 2.0 * (sq[:, None] * g0 * sq[None, :]) - np.diag(lam)
        for t in range(1, 201):
            v = v_update(v, lam, eta)
        g_it = (v + np.diag(lam)) / (2.0 * np.outer(sq, sq))
        g_cf = closed_form_discrete_gram(g0, lam, lam, lam, eta, 200)
        assert np.abs(g_cf - g_it).max() <= 1e-10

    def test_matches_iteration_full_psd_init(self, rng):
        lam = np.sort(rng.uniform(0.4, 1.0, 4))[::-1]
        g0 = rand_psd(rng, 4, scale=0.5)
        eta = 0.08
        sq = np.sqrt(lam)
        v = 2.0 * (sq[:, None] * g0 * sq[None, :]) - np.diag(lam)
        for t in range(1, 61):
            v = v_update(v, lam, eta)
        g_it = (v + np.diag(lam)) / (2.0 * np.outer(sq, sq))
        g_cf = closed_form_discrete_gram(g0, lam, lam, lam, eta, 60)
        assert np.abs(g_cf - g_it).max() <= 1e-10

    def test_euler_limit_recovers_continuous_flow(self):
        # eta -> 0 with t*eta = tau fixed converges to the continuous closed
        # form at the matching time, at rate O(eta)
        from qns.flow import FlowParams, closed_form_align_gram

        lam = np.array([1.0, 0.5])
        g0 = np.diag([0.3, 0.1])
        p = FlowParams(lambdas=lam, d=8, r_s=2)
        tau = 2.0
        # discrete effective rate: one step of size eta corresponds to
        # continuous time eta * T_U (the V recursions absorb the prefactor)
        errs = []
        for eta in (0.02, 0.01):
            t = int(round(tau / eta))
            g_disc = closed_form_discrete_gram(g0, lam, lam, lam, eta, t)
            g_cont = closed_form_align_gram(g0, tau * p.t_u / 0.5, p)
            errs.append(np.abs(g_disc - g_cont).max())
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.25)

    def test_singular_inner_matrix_raises(self):
        # engineer g0 to cancel the inner diagonal exactly at t = 1
        lam = np.array([1.0, 1.0])
        eta = 0.05
        b = riccati_blocks(lam, eta, 1)
        inner = (b.ratio_11_12() - 1.0) / 2.0
        g_bad = np.diag(-inner)
        with pytest.raises(np.linalg.LinAlgError, match="step"):
            closed_form_discrete_gram(g_bad, lam, lam, lam, eta, 1)


class TestBoundingHarness:
    def setup_method(self):
        self.spec = PowerLawSpectrum(r=6, alpha=0.25)
        self.cfg = BoundingConfig(d=1000, r_s=4, eta=1e-4)
        rng = rng_stream(5, 40)
        z = rng.standard_normal((1000, 4)) / np.sqrt(1000)
        self.g0 = z[:6] @ z[:6].T

    def test_initial_reference_floor(self):
        state = init_bounding(self.g0, self.spec, self.cfg)
        kappa = self.cfg.resolved_kappa(self.spec)
        np.testing.assert_allclose(state.t_ref, kappa * 4 / 1000 * np.eye(6))
        assert state.floor_ok(1000)

    def test_reference_nondecreasing_and_floored(self):
        state = init_bounding(self.g0, self.spec, self.cfg)
        prev = state.t_ref.copy()
        for _ in range(2000):
            state = bounding_step(state, self.spec, self.cfg)
            assert loewner_slack(state.t_ref, prev) >= -1e-15
            prev = state.t_ref.copy()
        assert state.floor_ok(1000)

    def test_reference_matches_scalar_logistic_bound(self):
        # per mode the reference recursion is the logistic
        # u' = u + a u (1 - u / u_star); it stays in [u_0, u_star (1 + a^2/4)]
        state = init_bounding(self.g0, self.spec, self.cfg)
        kappa = state.kappa_d
        ue = state.eta_eff
        quad = (3 * kappa + 1) / (kappa * (1 - 2 * kappa))
        a = 2 * (1 - 2 * kappa) * ue * state.lam_lo
        u_star = state.lam_lo / (quad * self.spec.lambdas)
        u0 = np.diag(state.t_ref).copy()
        for _ in range(5000):
            state = bounding_step(state, self.spec, self.cfg)
            diag = np.diag(state.t_ref)
            assert np.all(diag >= u0 - 1e-18)
            assert np.all(diag <= u_star * (1 + np.max(a) ** 2 / 4) + 1e-15)

    def test_noise_free_sandwich(self):
        state = init_bounding(self.g0, self.spec, self.cfg)
        g = self.g0.copy()
        for k in range(2000):
            state = bounding_step(state, self.spec, self.cfg)
            g = monotone_update(g, self.spec.lambdas, state.eta_eff)
            if k % 100 == 0:
                assert state.order_ok(1e-8)
                assert state.sandwich_slack(g) >= -1e-8

    def test_noise_hook_applies_to_both(self):
        state = init_bounding(self.g0, self.spec, self.cfg)
        noise = 1e-6 * np.eye(6)
        stepped = bounding_step(state, self.spec, self.cfg, noise=noise)
        base = bounding_step(state, self.spec, self.cfg)
        np.testing.assert_allclose(stepped.lower - base.lower, noise, atol=1e-18)
        np.testing.assert_allclose(stepped.upper - base.upper, noise, atol=1e-18)

    def test_step_size_guard(self):
        with pytest.raises(ValueError, match="step size too large"):
            init_bounding(self.g0, self.spec, BoundingConfig(d=1000, r_s=4, eta=2e-3))

    def test_kappa_defaults(self):
        from qns.riccati import default_kappa_d

        ld = np.log(1000)
        assert default_kappa_d(1000, 6, 0.25) == pytest.approx(1 / ld**3.5)
        r_u = min(int(np.ceil(ld**2.5)), 6)
        assert default_kappa_d(1000, 6, 1.0) == pytest.approx(1 / (r_u * ld**2.5))
