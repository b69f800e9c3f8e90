"""Forward ODE models, numerical integration, and parameter transforms.

Models map a parameter vector and a time grid to a mean trajectory. Each
model declares a per-parameter transform between the constrained space
(where simulation happens) and an unconstrained space (where optimizers
and samplers operate); log-transformed coordinates contribute their
unconstrained value to the change-of-variables log-Jacobian.
"""

from __future__ import annotations

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from ._validation import as_vector, check_increasing, check_positive
from .exceptions import ConfigurationError, NumericalError

# Reference log-scale parameter values for the potassium-channel model
# (literature means; also used as prior centres by the likelihood module).
HERG_PRIOR_LOG_MEANS = (10.5, -2.5, 4.5, -3.5, 4.0, 4.5, 3.0, 2.0, 3.5)
HERG_PRIOR_LOG_SDS = (1.0, 3.0, 1.0, 1.5, 0.5, 0.5, 1.5, 0.5, 0.5)


def ode_integrate(rhs, y0, times, rtol=1e-8, atol=1e-10):
    """Integrate ``dy/dt = rhs(t, y)`` with an adaptive RK45 pair.

    Returns the state trajectory sampled at ``times``, shape
    (len(times), len(y0)). The requested tolerances bound the *delivered*
    accuracy, so the solver runs with a 100x tighter internal tolerance to
    absorb global error growth and dense-output interpolation error.
    """
    times = check_increasing(times)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    sol = solve_ivp(
        rhs,
        (times[0], times[-1]),
        y0,
        method="RK45",
        t_eval=times,
        rtol=max(0.01 * rtol, 1e-13),
        atol=max(0.01 * atol, 1e-300),
    )
    if not sol.success:
        raise NumericalError(f"ODE integration failed: {sol.message}")
    return sol.y.T


class ForwardModel(ABC):
    """A deterministic mean-trajectory generator with parameter transforms.

    Subclasses define ``param_names``, ``transforms`` ('log' or 'identity'
    per parameter) and ``simulate``.
    """

    param_names: tuple[str, ...] = ()
    transforms: tuple[str, ...] = ()

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @abstractmethod
    def simulate(self, theta, times) -> np.ndarray:
        """Return the trajectory at ``times`` for constrained parameters."""

    def to_unconstrained(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        phi = theta.copy()
        for k, kind in enumerate(self.transforms):
            if kind == "log":
                if theta[k] <= 0 or not np.isfinite(theta[k]):
                    raise ValueError(
                        f"{self.param_names[k]} must be positive for the log transform"
                    )
                phi[k] = np.log(theta[k])
        return phi

    def to_constrained(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        theta = phi.copy()
        for k, kind in enumerate(self.transforms):
            if kind == "log":
                theta[k] = np.exp(phi[k])
        return theta

    def log_jacobian(self, phi) -> float:
        """log |d theta / d phi| for the declared transforms.

        Each log coordinate has theta_k = exp(phi_k), so its contribution
        is phi_k; identity coordinates contribute nothing.
        """
        phi = np.asarray(phi, dtype=float)
        return float(
            sum(phi[k] for k, kind in enumerate(self.transforms) if kind == "log")
        )

    def suggest_start(self, dataset):
        """A rough data-driven starting point in constrained space."""
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Logistic growth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticParams:
    r: float
    K: float
    y0: float

    def __post_init__(self):
        for name in ("r", "K", "y0"):
            check_positive(getattr(self, name), name)


def logistic_solve(params: LogisticParams, times) -> np.ndarray:
    """Closed-form logistic growth trajectory.

    f(t) = K / (1 + (K/y0 - 1) * exp(-r t)), the solution of
    dy/dt = r y (1 - y/K) with f(0) = y0.
    """
    times = np.asarray(times, dtype=float)
    # extreme parameters can overflow to inf/nan here; callers treat a
    # non-finite trajectory as a rejected point
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return params.K / (
            1.0 + (params.K / params.y0 - 1.0) * np.exp(-params.r * times)
        )


class LogisticModel(ForwardModel):
    """Two-parameter logistic growth with a fixed initial value.

    Parameters (r, K) are inferred on the log scale; y0 is an experiment
    constant, not a model parameter.
    """

    param_names = ("r", "K")
    transforms = ("log", "log")

    def __init__(self, y0=2.0):
        check_positive(y0, "y0")
        self.y0 = float(y0)

    def simulate(self, theta, times):
        r, K = float(theta[0]), float(theta[1])
        return logistic_solve(LogisticParams(r, K, self.y0), times)

    def suggest_start(self, dataset):
        K0 = max(float(np.max(dataset.values)), 2.0 * self.y0)
        half = self.y0 + 0.5 * (K0 - self.y0)
        above = np.nonzero(dataset.values >= half)[0]
        if above.size and dataset.times[above[0]] > dataset.times[0]:
            t_half = float(dataset.times[above[0]] - dataset.times[0])
            r0 = np.log(max(K0 / self.y0 - 1.0, 1.5)) / t_half
        else:
            r0 = 1.0 / dataset.span
        return np.array([r0, K0])


# ---------------------------------------------------------------------------
# hERG potassium channel (Hodgkin-Huxley gating)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HergParams:
    """Maximal conductance [pS] and kinetic rates p1..p8 [1/s or 1/V]."""

    g_kr: float
    p1: float
    p2: float
    p3: float
    p4: float
    p5: float
    p6: float
    p7: float
    p8: float

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)) or not np.all(values > 0):
            raise ValueError("all hERG parameters must be finite and positive")

    def as_array(self):
        return np.array(
            [self.g_kr, self.p1, self.p2, self.p3, self.p4,
             self.p5, self.p6, self.p7, self.p8]
        )

    @classmethod
    def from_array(cls, values):
        values = as_vector(values, "herg parameters")
        if values.size != 9:
            raise ValueError("expected 9 hERG parameters")
        return cls(*values)


def _gating_rates(params: HergParams, v):
    k1 = params.p1 * np.exp(params.p2 * v)
    k2 = params.p3 * np.exp(-params.p4 * v)
    k3 = params.p5 * np.exp(params.p6 * v)
    k4 = params.p7 * np.exp(-params.p8 * v)
    return k1, k2, k3, k4


def gating_steady_state(params: HergParams, v):
    """Stationary gating point (a_inf, r_inf) at a fixed voltage."""
    k1, k2, k3, k4 = _gating_rates(params, v)
    return k1 / (k1 + k2), k4 / (k3 + k4)


def gating_time_constants(params: HergParams, v):
    k1, k2, k3, k4 = _gating_rates(params, v)
    return 1.0 / (k1 + k2), 1.0 / (k3 + k4)


class VoltageProtocol:
    """Piecewise voltage command: contiguous step or ramp segments.

    Each segment is (t_start, t_end, v_start, v_end); equal start/end
    voltages encode a step. Voltages are in volts, times in seconds.
    """

    def __init__(self, segments):
        segs = np.asarray(segments, dtype=float)
        if segs.ndim != 2 or segs.shape[1] != 4 or segs.shape[0] == 0:
            raise ConfigurationError("segments must be a non-empty (m, 4) table")
        if np.any(segs[:, 1] <= segs[:, 0]):
            raise ConfigurationError("each segment needs t_end > t_start")
        gaps = segs[1:, 0] - segs[:-1, 1]
        if np.any(np.abs(gaps) > 1e-12 * max(1.0, abs(segs[-1, 1]))):
            raise ConfigurationError("segments must be contiguous and non-overlapping")
        self.segments = segs

    @classmethod
    def from_steps(cls, steps, t0=0.0):
        """Build a step protocol from (duration, voltage) pairs."""
        segments = []
        t = float(t0)
        for duration, voltage in steps:
            segments.append((t, t + duration, voltage, voltage))
            t += duration
        return cls(segments)

    @property
    def t_start(self):
        return float(self.segments[0, 0])

    @property
    def t_end(self):
        return float(self.segments[-1, 1])

    def covers(self, times):
        return times[0] >= self.t_start - 1e-12 and times[-1] <= self.t_end + 1e-12

    def voltage(self, t):
        """Voltage at time t; boundaries belong to the later segment."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.segments[:, 0], t, side="right") - 1
        idx = np.clip(idx, 0, len(self.segments) - 1)
        seg = self.segments[idx]
        t0, t1, v0, v1 = seg[..., 0], seg[..., 1], seg[..., 2], seg[..., 3]
        frac = np.where(t1 > t0, (t - t0) / (t1 - t0), 0.0)
        return v0 + np.clip(frac, 0.0, 1.0) * (v1 - v0)

    @classmethod
    def read_csv(cls, path):
        segments = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = ["t_start", "t_end", "v_start", "v_end"]
            if [h.strip() for h in header] != expected:
                raise ConfigurationError(
                    f"expected header {','.join(expected)} in {path}"
                )
            for row in reader:
                if row:
                    segments.append([float(x) for x in row])
        return cls(segments)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_start", "t_end", "v_start", "v_end"])
            for seg in self.segments:
                writer.writerow([format(x, ".17g") for x in seg])


def herg_simulate(
    params: HergParams,
    protocol: VoltageProtocol,
    e_k,
    times,
    init=None,
    rtol=1e-8,
    atol=1e-10,
):
    """Potassium current I = g a r (V - E_K) under a voltage protocol.

    Gating follows da/dt = (a_inf - a)/tau_a and dr/dt = (r_inf - r)/tau_r
    with voltage-dependent rates k1 = p1 exp(p2 V), k2 = p3 exp(-p4 V),
    k3 = p5 exp(p6 V), k4 = p7 exp(-p8 V). Integration runs segment by
    segment so adaptive steps never straddle a voltage discontinuity; the
    gating state is carried continuously across each boundary.

    ``init`` defaults to the steady state at the protocol's initial
    voltage.
    """
    times = check_increasing(times)
    if not protocol.covers(times):
        raise ConfigurationError(
            "protocol does not cover the requested time window "
            f"[{times[0]}, {times[-1]}]"
        )
    if init is None:
        init = gating_steady_state(params, protocol.segments[0, 2])
    state = np.asarray(init, dtype=float)

    gating = np.empty((times.size, 2))
    gating[times <= protocol.t_start] = state
    for t0, t1, v0, v1 in protocol.segments:
        if t0 >= times[-1]:
            break
        slope = (v1 - v0) / (t1 - t0)

        def rhs(t, y, _t0=t0, _v0=v0, _slope=slope):
            v = _v0 + _slope * (t - _t0)
            k1, k2, k3, k4 = _gating_rates(params, v)
            a, r = y
            return [k1 * (1.0 - a) - k2 * a, k4 * (1.0 - r) - k3 * r]

        stop = min(t1, times[-1])
        inside = np.nonzero((times > t0) & (times <= stop))[0]
        t_eval = times[inside]
        if t_eval.size == 0 or t_eval[-1] < stop:
            t_eval = np.append(t_eval, stop)
        sol = solve_ivp(
            rhs, (t0, stop), state, method="RK45",
            t_eval=t_eval, rtol=rtol, atol=atol,
        )
        if not sol.success:
            raise NumericalError(
                f"gating integration failed on segment [{t0}, {t1}]: {sol.message}"
            )
        if inside.size:
            gating[inside] = sol.y.T[: inside.size]
        state = sol.y[:, -1]
        if stop >= times[-1]:
            break

    voltages = protocol.voltage(times)
    return params.g_kr * gating[:, 0] * gating[:, 1] * (voltages - e_k)


class HergModel(ForwardModel):
    """Hodgkin-Huxley hERG current model driven by a voltage protocol.

    All nine parameters are positive and inferred on the log scale. The
    reversal potential is a fixed constant of the experiment (volts);
    the default corresponds to -88 mV.
    """

    param_names = ("g_kr", "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8")
    transforms = ("log",) * 9

    def __init__(self, protocol: VoltageProtocol, e_k=-0.088, rtol=1e-8, atol=1e-10):
        self.protocol = protocol
        self.e_k = float(e_k)
        self.rtol = rtol
        self.atol = atol

    def simulate(self, theta, times):
        return herg_simulate(
            HergParams.from_array(theta),
            self.protocol,
            self.e_k,
            times,
            rtol=self.rtol,
            atol=self.atol,
        )

    def suggest_start(self, dataset):
        return np.exp(np.array(HERG_PRIOR_LOG_MEANS))
