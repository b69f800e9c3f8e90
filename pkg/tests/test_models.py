import numpy as np
import pytest

from flexnoise import (
    ConfigurationError,
    Dataset,
    ForwardModel,
    HergModel,
    HergParams,
    LogisticModel,
    LogisticParams,
    VoltageProtocol,
    gating_steady_state,
    gating_time_constants,
    herg_simulate,
    logistic_solve,
    ode_integrate,
)

TRUTH = LogisticParams(r=0.08, K=50.0, y0=2.0)


class TestLogistic:
    def test_initial_condition(self):
        assert logistic_solve(TRUTH, np.array([0.0]))[0] == pytest.approx(2.0)

    def test_carrying_capacity_limit(self):
        val = logistic_solve(TRUTH, np.array([1e6]))[0]
        assert val == pytest.approx(50.0, abs=1e-9)

    def test_matches_numerical_integration(self):
        # independent oracle: adaptive integration of the growth ODE itself
        def rhs(t, y):
            return [TRUTH.r * y[0] * (1.0 - y[0] / TRUTH.K)]

        times = np.array([0.0, 10.0])
        numeric = ode_integrate(rhs, [TRUTH.y0], times, rtol=1e-10, atol=1e-12)
        closed = logistic_solve(TRUTH, times)
        assert closed[1] == pytest.approx(numeric[1, 0], rel=1e-8)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            LogisticParams(r=-0.1, K=50.0, y0=2.0)
        with pytest.raises(ValueError):
            LogisticParams(r=np.nan, K=50.0, y0=2.0)
        with pytest.raises(ValueError):
            LogisticParams(r=0.1, K=0.0, y0=2.0)

    def test_monotone_increasing_below_capacity(self):
        rng = np.random.default_rng(0)
        times = np.linspace(0.0, 50.0, 200)
        for _ in range(25):
            r = rng.uniform(0.01, 2.0)
            K = rng.uniform(1.0, 100.0)
            y0 = rng.uniform(0.01, 0.99) * K
            traj = logistic_solve(LogisticParams(r, K, y0), times)
            assert np.all(np.diff(traj) >= 0)
            # strictly increasing wherever float saturation at K is not hit
            unsaturated = traj[:-1] < K * (1.0 - 1e-12)
            assert np.all(np.diff(traj)[unsaturated] > 0)


class TestOdeIntegrate:
    def test_constant(self):
        out = ode_integrate(lambda t, y: [0.0], [3.5], np.linspace(0, 5, 11))
        assert np.allclose(out[:, 0], 3.5)

    def test_exponential_decay(self):
        out = ode_integrate(lambda t, y: [-y[0]], [1.0], np.array([0.0, 1.0]))
        assert out[1, 0] == pytest.approx(np.exp(-1.0), rel=1e-8)

    def test_logistic_rhs_matches_closed_form(self):
        def rhs(t, y):
            return [TRUTH.r * y[0] * (1.0 - y[0] / TRUTH.K)]

        times = np.linspace(0.0, 100.0, 40)
        out = ode_integrate(rhs, [TRUTH.y0], times)
        assert np.allclose(out[:, 0], logistic_solve(TRUTH, times), rtol=1e-8)

    def test_random_params_within_10x_rtol(self):
        rng = np.random.default_rng(1)
        rtol = 1e-8
        times = np.linspace(0.0, 30.0, 15)
        for _ in range(100):
            p = LogisticParams(
                r=rng.uniform(0.01, 1.0),
                K=rng.uniform(5.0, 200.0),
                y0=rng.uniform(0.1, 4.0),
            )

            def rhs(t, y):
                return [p.r * y[0] * (1.0 - y[0] / p.K)]

            out = ode_integrate(rhs, [p.y0], times, rtol=rtol)[:, 0]
            closed = logistic_solve(p, times)
            assert np.all(np.abs(out - closed) <= 10 * rtol * np.abs(closed) + 1e-12)


class TestTransforms:
    def test_log_round_trip(self, logistic_model):
        theta = np.array([0.08, 50.0])
        phi = logistic_model.to_unconstrained(theta)
        assert np.allclose(phi, np.log(theta))
        back = logistic_model.to_constrained(phi)
        assert np.allclose(back, theta, rtol=1e-12)

    def test_log_jacobian_values(self, logistic_model):
        assert logistic_model.log_jacobian(np.log([1.0, 1.0])) == pytest.approx(0.0)
        assert logistic_model.log_jacobian([2.0, 0.0]) == pytest.approx(2.0)
        phi = logistic_model.to_unconstrained([np.e**2, 1.0])
        assert phi[0] == pytest.approx(2.0)

    def test_identity_transform(self):
        class Plain(ForwardModel):
            param_names = ("a", "b")
            transforms = ("identity", "identity")

            def simulate(self, theta, times):
                return np.full(len(times), theta[0] + theta[1])

        model = Plain()
        theta = np.array([1.5, -2.0])
        assert np.array_equal(model.to_unconstrained(theta), theta)
        assert model.log_jacobian(theta) == 0.0

    def test_nonpositive_rejected_on_log_coordinate(self, logistic_model):
        with pytest.raises(ValueError, match="positive"):
            logistic_model.to_unconstrained([-1.0, 50.0])
        with pytest.raises(ValueError, match="positive"):
            logistic_model.to_unconstrained([0.0, 50.0])


def step_protocol(levels, duration=2.0):
    return VoltageProtocol.from_steps([(duration, v) for v in levels])


PARAMS = HergParams(*np.exp([10.5, -2.5, 4.5, -3.5, 4.0, 4.5, 3.0, 2.0, 3.5]))


class TestHerg:
    def test_params_positive(self):
        with pytest.raises(ValueError, match="positive"):
            HergParams(-1.0, *([1.0] * 8))

    def test_steady_state_gives_constant_current(self):
        protocol = step_protocol([0.0], duration=5.0)
        times = np.linspace(0.0, 5.0, 30)
        a_inf, r_inf = gating_steady_state(PARAMS, 0.0)
        current = herg_simulate(PARAMS, protocol, -0.088, times,
                                init=(a_inf, r_inf))
        expected = PARAMS.g_kr * a_inf * r_inf * (0.0 + 0.088)
        assert np.allclose(current, expected, rtol=1e-6)

    def test_zero_driving_force(self):
        e_k = -0.088
        protocol = step_protocol([e_k], duration=4.0)
        times = np.linspace(0.0, 4.0, 20)
        current = herg_simulate(PARAMS, protocol, e_k, times)
        assert np.allclose(current, 0.0, atol=1e-12)

    def test_matches_segmentwise_exponential_relaxation(self):
        # oracle: with piecewise-constant V the gating ODEs have the exact
        # solution x(t) = x_inf + (x0 - x_inf) exp(-(t - t0)/tau)
        levels = [-0.08, 0.02, -0.04]
        duration = 2.0
        protocol = step_protocol(levels, duration)
        times = np.linspace(0.0, 6.0, 61)

        a, r = gating_steady_state(PARAMS, levels[0])
        seg_start = [(a, r)]
        for v in levels[:-1]:
            a_inf, r_inf = gating_steady_state(PARAMS, v)
            tau_a, tau_r = gating_time_constants(PARAMS, v)
            a = a_inf + (a - a_inf) * np.exp(-duration / tau_a)
            r = r_inf + (r - r_inf) * np.exp(-duration / tau_r)
            seg_start.append((a, r))

        exact = np.empty((times.size, 2))
        for i, t in enumerate(times):
            seg = min(int(t // duration), len(levels) - 1)
            a0, r0 = seg_start[seg]
            a_inf, r_inf = gating_steady_state(PARAMS, levels[seg])
            tau_a, tau_r = gating_time_constants(PARAMS, levels[seg])
            dt_in = t - seg * duration
            exact[i, 0] = a_inf + (a0 - a_inf) * np.exp(-dt_in / tau_a)
            exact[i, 1] = r_inf + (r0 - r_inf) * np.exp(-dt_in / tau_r)

        voltages = protocol.voltage(times)
        expected = PARAMS.g_kr * exact[:, 0] * exact[:, 1] * (voltages + 0.088)
        current = herg_simulate(PARAMS, protocol, -0.088, times)
        assert np.allclose(current, expected, atol=1e-6 * np.abs(expected).max())

    def test_gating_stays_in_unit_interval(self):
        rng = np.random.default_rng(3)
        for _ in range(15):
            params = HergParams(*np.exp(rng.normal([10.5, -2.5, 4.5, -3.5, 4.0,
                                                    4.5, 3.0, 2.0, 3.5], 0.3)))
            levels = rng.uniform(-0.1, 0.06, size=4)
            protocol = step_protocol(levels, duration=1.5)
            times = np.linspace(0.0, 6.0, 40)
            a0 = rng.uniform(0.05, 0.95)
            r0 = rng.uniform(0.05, 0.95)
            current = herg_simulate(params, protocol, -0.088, times, init=(a0, r0))
            gating = current / (params.g_kr * (protocol.voltage(times) + 0.088))
            finite = np.isfinite(gating)
            assert np.all(gating[finite] > -1e-9)
            assert np.all(gating[finite] < 1.0 + 1e-9)

    def test_protocol_must_cover_window(self):
        protocol = step_protocol([0.0], duration=1.0)
        with pytest.raises(ConfigurationError, match="cover"):
            herg_simulate(PARAMS, protocol, -0.088, np.linspace(0.0, 2.0, 5))

    def test_protocol_gap_rejected(self):
        with pytest.raises(ConfigurationError, match="contiguous"):
            VoltageProtocol([(0.0, 1.0, -0.08, -0.08), (1.5, 2.0, 0.0, 0.0)])

    def test_protocol_csv_round_trip(self, tmp_path):
        protocol = VoltageProtocol(
            [(0.0, 1.0, -0.08, -0.08), (1.0, 2.0, -0.08, 0.04), (2.0, 3.0, 0.04, 0.04)]
        )
        path = tmp_path / "protocol.csv"
        protocol.write_csv(path)
        back = VoltageProtocol.read_csv(path)
        assert np.array_equal(back.segments, protocol.segments)
        assert back.voltage(1.5) == pytest.approx(-0.02)

    def test_ramp_voltage(self):
        protocol = VoltageProtocol([(0.0, 2.0, -0.1, 0.1)])
        assert protocol.voltage(1.0) == pytest.approx(0.0)

    def test_model_wrapper(self):
        protocol = step_protocol([-0.08, 0.02], duration=2.0)
        model = HergModel(protocol)
        times = np.linspace(0.0, 4.0, 25)
        theta = PARAMS.as_array()
        out = model.simulate(theta, times)
        direct = herg_simulate(PARAMS, protocol, model.e_k, times)
        assert np.allclose(out, direct)
        assert model.n_params == 9
        ds = Dataset(times, out)
        assert model.suggest_start(ds).shape == (9,)
