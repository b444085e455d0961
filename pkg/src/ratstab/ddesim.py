"""Constant-delay DDE integration and closed-loop scenario wiring.

The integrator is the method of steps with classical fixed-step RK4. The
delay must be an integer multiple (>= 2) of the step so that every
breakpoint lands on a grid node; delayed stage values at half steps come
from cubic Hermite interpolation using stored node states and node
derivatives, which keeps the scheme fourth order between breakpoints.
Whole-step delayed lookups are node reads and therefore exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractViolation, DivergedError
from .matops import build_companion
from .sysmodel import GainSet, SystemSpec

DIVERGENCE_GUARD = 1e12

# step used to differentiate the initial history function (it is a callable,
# so the step is independent of the grid)
_PHI_SLOPE_STEP_SCALE = 1e-5


class Scenario(Enum):
    """Closed-loop configuration; decides which blocks are integrated."""

    OPEN_LOOP = "open_loop"
    STATE_FEEDBACK = "state_feedback"
    OBSERVER = "observer"
    OBSERVER_BASED = "observer_based"
    OUTPUT_FEEDBACK = "output_feedback"

    @property
    def has_observer(self) -> bool:
        return self in (Scenario.OBSERVER, Scenario.OBSERVER_BASED, Scenario.OUTPUT_FEEDBACK)


class HistoryBuffer:
    """Uniform-grid state store with node derivatives for Hermite lookups.

    Node j corresponds to time t0 + j h. The derivative stored at a node is
    the right-hand derivative; the left-hand slope of the initial history
    at the junction node is kept separately because the first derivative
    jumps there.
    """

    def __init__(self, t0: float, h: float, capacity: int, width: int, break_index: int):
        self.t0 = float(t0)
        self.h = float(h)
        self._states = np.empty((capacity, width))
        self._derivs = np.empty((capacity, width))
        self._break_index = break_index
        self._break_left_slope = np.zeros(width)
        self._filled = 0

    @property
    def states(self) -> np.ndarray:
        return self._states[: self._filled]

    def seed(self, values: np.ndarray, slopes: np.ndarray):
        count = values.shape[0]
        self._states[:count] = values
        self._derivs[:count] = slopes
        if 0 <= self._break_index < count:
            self._break_left_slope = slopes[self._break_index].copy()
        self._filled = count

    def append(self, state: np.ndarray):
        self._states[self._filled] = state
        self._filled += 1

    def set_derivative(self, j: int, value: np.ndarray):
        self._derivs[j] = value

    def node(self, j: int) -> np.ndarray:
        if j < 0 or j >= self._filled:
            raise ContractViolation(f"node {j} outside stored history")
        return self._states[j]

    def segment_midpoint(self, j: int) -> np.ndarray:
        """Cubic Hermite value at the midpoint of segment [node j, node j+1]."""
        if j < 0 or j + 1 >= self._filled:
            raise ContractViolation(f"segment {j} outside stored history")
        left_slope = self._derivs[j]
        if j + 1 == self._break_index:
            right_slope = self._break_left_slope
        else:
            right_slope = self._derivs[j + 1]
        return 0.5 * (self._states[j] + self._states[j + 1]) + 0.125 * self.h * (
            left_slope - right_slope
        )

    def value_at(self, s: float) -> np.ndarray:
        """State at an arbitrary stored time; node-aligned queries are exact."""
        position = (s - self.t0) / self.h
        j = int(round(position))
        if abs(position - j) <= 1e-9:
            return self.node(j).copy()
        j = int(math.floor(position))
        if j < 0 or j + 1 >= self._filled:
            raise ContractViolation(f"time {s} outside stored history")
        lam = position - j
        left_slope = self._derivs[j]
        if j + 1 == self._break_index:
            right_slope = self._break_left_slope
        else:
            right_slope = self._derivs[j + 1]
        h = self.h
        x0, x1 = self._states[j], self._states[j + 1]
        h00 = (1.0 + 2.0 * lam) * (1.0 - lam) ** 2
        h10 = lam * (1.0 - lam) ** 2
        h01 = lam * lam * (3.0 - 2.0 * lam)
        h11 = lam * lam * (lam - 1.0)
        return h00 * x0 + h * h10 * left_slope + h01 * x1 + h * h11 * right_slope


def _as_history_fn(phi, width: int) -> Callable[[float], np.ndarray]:
    if callable(phi):
        probe = np.asarray(phi(0.0), dtype=float)
        if probe.shape != (width,):
            raise ConfigError(f"history function must return length-{width} vectors")
        return lambda s: np.asarray(phi(s), dtype=float)
    const = np.asarray(phi, dtype=float)
    if const.shape != (width,):
        raise ConfigError(f"constant history must have length {width}, got shape {const.shape}")
    return lambda s: const


def _grid_layout(tau: float, h: float, horizon: float) -> tuple[int, int]:
    if not (h > 0.0 and math.isfinite(h)):
        raise ConfigError(f"step must be positive and finite, got {h!r}")
    if not (tau > 0.0 and math.isfinite(tau)):
        raise ConfigError(f"delay must be positive and finite, got {tau!r}")
    m = int(round(tau / h))
    if m < 2 or abs(m * h - tau) > 1e-9 * max(1.0, tau):
        raise ConfigError(
            f"delay must be an integer multiple (>= 2) of the step, got tau={tau!r}, h={h!r}"
        )
    if not horizon >= h:
        raise ConfigError(f"horizon must be at least one step, got T={horizon!r}")
    steps = int(round(horizon / h))
    if abs(steps * h - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigError(f"horizon must sit on the step grid, got T={horizon!r}, h={h!r}")
    return m, steps


def integrate(rhs: Callable, phi, tau: float, h: float, horizon: float):
    """Integrate x'(t) = rhs(t, x(t), x(t - tau)) from the history phi.

    phi is a constant vector or a callable on [-tau, 0]; its value at 0 is
    the initial state. Returns (t, states) on the uniform grid covering
    [-tau, horizon], history included. Raises DivergedError at the first
    node whose state is non-finite or larger than the guard.
    """
    m, steps = _grid_layout(tau, h, horizon)
    probe = phi(0.0) if callable(phi) else np.asarray(phi, dtype=float)
    width = np.asarray(probe, dtype=float).reshape(-1).shape[0]
    history = _as_history_fn(phi, width)

    seed_values = np.empty((m + 1, width))
    for j in range(m + 1):
        seed_values[j] = history(-tau + j * h)
    if not np.all(np.isfinite(seed_values)):
        raise ConfigError("initial history contains non-finite values")

    # slopes of the history callable; one-sided second-order stencils at the
    # ends, step capped by h so no evaluation leaves [-tau, 0]
    delta = min(_PHI_SLOPE_STEP_SCALE * max(1.0, tau), h)
    seed_slopes = np.empty((m + 1, width))
    for j in range(m + 1):
        s = -tau + j * h
        if j == 0:
            seed_slopes[j] = (-3.0 * history(s) + 4.0 * history(s + delta) - history(s + 2 * delta)) / (2 * delta)
        elif j == m:
            seed_slopes[j] = (3.0 * history(s) - 4.0 * history(s - delta) + history(s - 2 * delta)) / (2 * delta)
        else:
            seed_slopes[j] = (history(s + delta) - history(s - delta)) / (2 * delta)

    buffer = HistoryBuffer(t0=-tau, h=h, capacity=m + steps + 1, width=width, break_index=m)
    buffer.seed(seed_values, seed_slopes)

    half = 0.5 * h
    for i in range(steps):
        t = i * h
        node = m + i
        x = buffer.node(node)
        k1 = np.asarray(rhs(t, x, buffer.node(i)), dtype=float)
        buffer.set_derivative(node, k1)
        x_mid_delayed = buffer.segment_midpoint(i)
        k2 = np.asarray(rhs(t + half, x + half * k1, x_mid_delayed), dtype=float)
        k3 = np.asarray(rhs(t + half, x + half * k2, x_mid_delayed), dtype=float)
        k4 = np.asarray(rhs(t + h, x + h * k3, buffer.node(i + 1)), dtype=float)
        advanced = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(advanced)) or np.linalg.norm(advanced) > DIVERGENCE_GUARD:
            raise DivergedError((i + 1) * h)
        buffer.append(advanced)
    final = m + steps
    buffer.set_derivative(final, np.asarray(rhs(steps * h, buffer.node(final), buffer.node(steps)), dtype=float))

    t = np.arange(-m, steps + 1, dtype=float) * h
    return t, buffer.states.copy()


@dataclass
class Trajectory:
    """Simulation output on the uniform grid covering [-tau, T].

    ``x`` rows are plant states, ``xhat`` observer states when the scenario
    has one, ``u`` the control value applied at each node (zero on the
    history segment). ``theta`` is carried along so the scaled coordinates
    can be reproduced.
    """

    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray | None
    u: np.ndarray
    theta: float
    tau: float
    h: float

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def history_len(self) -> int:
        """Number of grid segments covering one delay interval."""
        return int(round(self.tau / self.h))

    def index_of(self, time: float) -> int:
        position = (time - self.t[0]) / self.h
        j = int(round(position))
        if abs(position - j) > 1e-9 or j < 0 or j >= len(self.t):
            raise ContractViolation(f"time {time} is not a grid node")
        return j

    def norm_x(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=1)

    def norm_err(self) -> np.ndarray | None:
        if self.xhat is None:
            return None
        return np.linalg.norm(self.xhat - self.x, axis=1)

    def _scaling(self) -> np.ndarray:
        return self.theta ** -np.arange(self.n, dtype=float)

    def eta(self) -> np.ndarray | None:
        """Scaled observer error eta = Delta_theta (xhat - x), one row per node."""
        if self.xhat is None:
            return None
        return (self.xhat - self.x) * self._scaling()

    def chi(self) -> np.ndarray:
        """Scaled state chi = Delta_theta x, one row per node."""
        return self.x * self._scaling()


def run_scenario(sys: SystemSpec, gains: GainSet, scenario: Scenario, phi, phi_hat=None,
                 h: float = 1e-3, horizon: float = 10.0,
                 u_ext: Callable[[float], float] | None = None) -> Trajectory:
    """Wire the requested closed-loop configuration and integrate it.

    phi (plant) and phi_hat (observer, when present) are constant vectors
    or callables on [-tau, 0]. For the plain observer scenario the control
    is externally given; it defaults to zero when u_ext is omitted.
    """
    n = sys.n
    if gains.n != n:
        raise ConfigError(f"gain length {gains.n} does not match system dimension {n}")
    A, B, _ = build_companion(n)
    L_scaled = gains.L_scaled
    K_scaled = gains.K_scaled
    f = sys.f
    external = u_ext if u_ext is not None else (lambda t: 0.0)

    plant_phi = _as_history_fn(phi, n)
    if scenario.has_observer:
        if phi_hat is None:
            raise ConfigError(f"scenario {scenario.value} needs an observer history")
        observer_phi = _as_history_fn(phi_hat, n)
        stacked_phi = lambda s: np.concatenate([plant_phi(s), observer_phi(s)])
    else:
        stacked_phi = plant_phi

    def plant_rhs(x, xd, u):
        return A @ x + B * u + f(x, xd, u)

    if scenario is Scenario.OPEN_LOOP:
        def rhs(t, x, xd):
            return plant_rhs(x, xd, 0.0)
    elif scenario is Scenario.STATE_FEEDBACK:
        def rhs(t, x, xd):
            return plant_rhs(x, xd, float(K_scaled @ x))
    elif scenario is Scenario.OBSERVER:
        def rhs(t, z, zd):
            x, xh = z[:n], z[n:]
            xd, xhd = zd[:n], zd[n:]
            u = float(external(t))
            innovation = L_scaled * (xh[0] - x[0])
            return np.concatenate([
                plant_rhs(x, xd, u),
                A @ xh + B * u + f(xh, xhd, u) + innovation,
            ])
    elif scenario is Scenario.OBSERVER_BASED:
        def rhs(t, z, zd):
            x, xh = z[:n], z[n:]
            xd, xhd = zd[:n], zd[n:]
            u = float(K_scaled @ xh)
            innovation = L_scaled * (xh[0] - x[0])
            return np.concatenate([
                plant_rhs(x, xd, u),
                A @ xh + B * u + f(xh, xhd, u) + innovation,
            ])
    elif scenario is Scenario.OUTPUT_FEEDBACK:
        def rhs(t, z, zd):
            x, xh = z[:n], z[n:]
            xd = zd[:n]
            u = float(K_scaled @ xh)
            innovation = L_scaled * (xh[0] - x[0])
            return np.concatenate([
                plant_rhs(x, xd, u),
                A @ xh + B * u + innovation,  # nonlinearity-free observer
            ])
    else:
        raise ConfigError(f"unknown scenario {scenario!r}")

    t, states = integrate(rhs, stacked_phi, sys.tau, h, horizon)
    if scenario.has_observer:
        x, xhat = states[:, :n], states[:, n:]
    else:
        x, xhat = states, None

    u = np.zeros(len(t))
    live = t >= -1e-12
    if scenario is Scenario.STATE_FEEDBACK:
        u[live] = x[live] @ K_scaled
    elif scenario is Scenario.OBSERVER:
        u[live] = [float(external(ti)) for ti in t[live]]
    elif scenario in (Scenario.OBSERVER_BASED, Scenario.OUTPUT_FEEDBACK):
        u[live] = xhat[live] @ K_scaled

    return Trajectory(t=t, x=x, xhat=xhat, u=u, theta=gains.theta, tau=sys.tau, h=h)
