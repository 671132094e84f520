import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deadreckon.regression import (
    DegenerateDesignError,
    DistanceModel,
    InsufficientDataError,
    SlotObservation,
    TrainingBuffer,
    VelocityModel,
    fit_distance,
    fit_velocity,
    load_models,
    save_models,
)


def make_velocity_obs(beta, mu, n=40, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    obs = []
    for _ in range(n):
        v_prev = rng.uniform(2.0, 15.0)
        a = rng.uniform(-2.0, 2.0)
        dt = 2.0
        v_end = max(0.0, v_prev + beta * a * dt + mu + rng.normal(0.0, noise))
        obs.append(SlotObservation(v_prev=v_prev, a_mean=a, dt=dt,
                                   g_dist=max(0.0, v_prev * dt), v_end=v_end))
    return obs


def make_distance_obs(lams, eta, n=40, seed=0, vary_dt=True):
    rng = np.random.default_rng(seed)
    l1, l2, l3, l4 = lams
    obs = []
    for _ in range(n):
        v_prev = rng.uniform(2.0, 15.0)
        a = rng.uniform(-2.0, 2.0)
        dt = rng.uniform(1.5, 2.5) if vary_dt else 2.0
        d = l1 * v_prev * dt + l2 * 0.5 * a * dt * dt + l3 * dt * dt + l4 * dt + eta
        obs.append(SlotObservation(v_prev=v_prev, a_mean=a, dt=dt,
                                   g_dist=max(0.0, d), v_end=v_prev))
    return obs


def filled(obs, capacity=None):
    buf = TrainingBuffer(capacity or len(obs))
    for o in obs:
        buf.push(o)
    return buf


class TestTrainingBuffer:
    def test_push_to_empty(self):
        buf = TrainingBuffer(5)
        buf.push(make_velocity_obs(1.0, 0.0, n=1)[0])
        assert len(buf) == 1

    def test_capacity_three_keeps_last_three(self):
        obs = make_velocity_obs(1.0, 0.0, n=4)
        buf = filled(obs, capacity=3)
        assert buf.observations == obs[1:]

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=24))
    def test_fifo_matches_naive_list_model(self, capacity, n):
        obs = make_velocity_obs(1.0, 0.0, n=max(n, 1))[:n]
        buf = TrainingBuffer(capacity)
        naive = []
        for o in obs:
            buf.push(o)
            naive.append(o)
            naive = naive[-capacity:]
        assert buf.observations == naive

    def test_capacity_must_be_positive(self):
        with pytest.raises(ValueError):
            TrainingBuffer(0)


class TestFitVelocity:
    def test_exact_recovery(self):
        buf = filled(make_velocity_obs(beta=1.2, mu=0.3))
        m = fit_velocity(buf)
        assert m.beta == pytest.approx(1.2, abs=1e-9)
        assert m.mu == pytest.approx(0.3, abs=1e-9)

    def test_pure_kinematics(self):
        buf = filled(make_velocity_obs(beta=1.0, mu=0.0))
        m = fit_velocity(buf)
        assert m.beta == pytest.approx(1.0, abs=1e-9)
        assert m.mu == pytest.approx(0.0, abs=1e-9)

    def test_single_observation_insufficient(self):
        buf = filled(make_velocity_obs(1.0, 0.0, n=1))
        with pytest.raises(InsufficientDataError):
            fit_velocity(buf)

    def test_zero_spread_degenerate(self):
        obs = [SlotObservation(v_prev=10.0, a_mean=0.0, dt=2.0, g_dist=20.0, v_end=10.0)
               for _ in range(20)]
        with pytest.raises(DegenerateDesignError):
            fit_velocity(filled(obs))


class TestFitDistance:
    def test_exact_recovery_varying_dt(self):
        lams = (1.0, 1.0, 0.0, 0.0)
        buf = filled(make_distance_obs(lams, eta=0.0))
        m = fit_distance(buf)
        assert m.lambda1 == pytest.approx(1.0, abs=1e-8)
        assert m.lambda2 == pytest.approx(1.0, abs=1e-8)
        assert m.lambda3 == pytest.approx(0.0, abs=1e-8)
        assert m.lambda4 == pytest.approx(0.0, abs=1e-8)
        assert m.eta == pytest.approx(0.0, abs=1e-8)
        assert m.folded == ()

    def test_exact_recovery_general_parameters(self):
        lams = (1.05, 0.92, 0.15, -0.3)
        buf = filled(make_distance_obs(lams, eta=0.25, seed=3))
        m = fit_distance(buf)
        for got, want in zip((m.lambda1, m.lambda2, m.lambda3, m.lambda4, m.eta),
                             lams + (0.25,)):
            assert got == pytest.approx(want, rel=1e-8, abs=1e-8)
        assert m.residual_std == pytest.approx(0.0, abs=1e-8)

    def test_constant_dt_folds_time_columns(self):
        lams = (1.0, 1.0, 0.1, -0.2)
        buf = filled(make_distance_obs(lams, eta=0.3, vary_dt=False))
        m = fit_distance(buf)
        assert set(m.folded) == {"dt2", "dt"}
        assert m.lambda3 == 0.0 and m.lambda4 == 0.0
        # eta absorbs the folded columns at dt=2: 0.1*4 - 0.2*2 + 0.3 = 0.3
        assert m.eta == pytest.approx(0.1 * 4.0 - 0.2 * 2.0 + 0.3, abs=1e-8)
        # predictions still match the generator at the training dt
        for o in buf:
            assert m.predict(o.v_prev, o.a_mean, o.dt) == pytest.approx(o.g_dist, abs=1e-8)

    def test_below_min_obs(self):
        buf = filled(make_distance_obs((1.0, 1.0, 0.0, 0.0), eta=0.0, n=5))
        with pytest.raises(InsufficientDataError):
            fit_distance(buf)

    def test_buffer_recency_equals_explicit_window(self):
        obs = make_distance_obs((1.1, 0.9, 0.05, -0.1), eta=0.2, n=80, seed=9)
        buf = TrainingBuffer(30)
        for o in obs:
            buf.push(o)
        direct = filled(obs[-30:])
        a, b = fit_distance(buf), fit_distance(direct)
        assert (a.lambda1, a.lambda2, a.lambda3, a.lambda4, a.eta) == \
               (b.lambda1, b.lambda2, b.lambda3, b.lambda4, b.eta)


class TestPredict:
    def test_velocity_examples(self):
        assert VelocityModel(1.0, 0.0).predict(10.0, 1.5, 2.0) == pytest.approx(13.0)
        assert VelocityModel(1.0, 0.0).predict(1.0, -2.0, 2.0) == 0.0  # clamped
        assert VelocityModel(1.1, 0.2).predict(10.0, 1.0, 2.0) == pytest.approx(12.4)

    def test_distance_examples(self):
        assert DistanceModel(1.0, 1.0, 0.0, 0.0, 0.0).predict(10.0, 1.0, 2.0) == pytest.approx(22.0)
        assert DistanceModel(0.0, 0.0, 0.0, 0.0, 0.0).predict(10.0, 1.0, 2.0) == 0.0
        m = DistanceModel(1.05, 0.9, 0.1, -0.2, 0.3)
        assert m.predict(8.0, 0.5, 2.0) == pytest.approx(17.9, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=-5.0, max_value=5.0),
        st.floats(min_value=0.0, max_value=40.0), st.floats(min_value=-3.0, max_value=3.0),
        st.floats(min_value=0.5, max_value=4.0),
    )
    def test_predictions_never_negative(self, beta, mu, v, a, dt):
        assert VelocityModel(beta, mu).predict(v, a, dt) >= 0.0
        assert DistanceModel(beta, mu, beta, mu, beta).predict(v, a, dt) >= 0.0


class TestOlsOptimality:
    def test_perturbing_fitted_parameters_increases_ssr(self):
        obs = make_distance_obs((1.05, 0.92, 0.15, -0.3), eta=0.25, seed=11)
        rng = np.random.default_rng(1)
        noisy = [
            SlotObservation(o.v_prev, o.a_mean, o.dt,
                            max(0.0, o.g_dist + rng.normal(0.0, 0.5)), o.v_end)
            for o in obs
        ]
        buf = filled(noisy)
        m = fit_distance(buf)

        def ssr(l1, l2, l3, l4, eta):
            return sum(
                (o.g_dist - (l1 * o.v_prev * o.dt + l2 * 0.5 * o.a_mean * o.dt**2
                             + l3 * o.dt**2 + l4 * o.dt + eta)) ** 2
                for o in noisy
            )

        base = (m.lambda1, m.lambda2, m.lambda3, m.lambda4, m.eta)
        ssr0 = ssr(*base)
        for i in range(5):
            for delta in (-1e-3, 1e-3):
                perturbed = list(base)
                perturbed[i] += delta
                assert ssr(*perturbed) > ssr0

    def test_velocity_optimality(self):
        rng = np.random.default_rng(2)
        obs = [
            SlotObservation(o.v_prev, o.a_mean, o.dt, o.g_dist,
                            max(0.0, o.v_end + rng.normal(0.0, 0.2)))
            for o in make_velocity_obs(1.2, 0.3, seed=4)
        ]
        buf = filled(obs)
        m = fit_velocity(buf)

        def ssr(beta, mu):
            return sum((o.v_end - o.v_prev - beta * o.a_mean * o.dt - mu) ** 2 for o in obs)

        ssr0 = ssr(m.beta, m.mu)
        for db, dm in ((1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)):
            assert ssr(m.beta + db, m.mu + dm) > ssr0


class TestModelSerialization:
    def test_round_trip_and_schema(self, tmp_path):
        vm = VelocityModel(beta=1.15, mu=-0.07)
        dm = DistanceModel(1.02, 0.95, 0.0, 0.0, 0.4, residual_std=1.25,
                           folded=("dt2", "dt"))
        path = tmp_path / "models.json"
        save_models(path, vm, dm)
        import json
        payload = json.loads(path.read_text())
        assert set(payload) == {"beta", "mu", "lambda", "eta", "residual_std", "folded_columns"}
        assert payload["lambda"] == [1.02, 0.95, 0.0, 0.0]
        vm2, dm2 = load_models(path)
        assert vm2 == vm
        assert dm2 == dm


class TestObservationValidation:
    def test_invalid_observations_rejected(self):
        with pytest.raises(ValueError):
            SlotObservation(v_prev=1.0, a_mean=0.0, dt=0.0, g_dist=1.0, v_end=1.0)
        with pytest.raises(ValueError):
            SlotObservation(v_prev=-1.0, a_mean=0.0, dt=2.0, g_dist=1.0, v_end=1.0)
        with pytest.raises(ValueError):
            SlotObservation(v_prev=1.0, a_mean=float("nan"), dt=2.0, g_dist=1.0, v_end=1.0)
