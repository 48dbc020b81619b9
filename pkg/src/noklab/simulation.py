"""Diffuse-interface gradient flow of the nonlocal Ohta-Kawasaki energy on [0, 2 pi).

The energy is::

    E[u] = int (eps/2) u_x^2 + W(u)/eps dx + (gamma/2) int |L^(-1/2) (u - omega)|^2 dx

with ``W(u) = 18 (u^2 - u)^2``. The L2 gradient flow is discretised with a
Fourier pseudo-spectral method in space and semi-implicit BDF2 in time
(implicit diffusion, extrapolated double-well and nonlocal terms). The mean
of ``u`` is projected back to ``omega`` after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np

from .errors import DivergenceError, ParameterError, SingularModeError
from .kernels import KernelSpec, eigenvalue

TWO_PI = 2.0 * math.pi


def double_well(u):
    return 18.0 * (u * u - u) ** 2


def double_well_prime(u):
    return 36.0 * (2.0 * u**3 - 3.0 * u**2 + u)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one simulation. ``epsilon=None`` means ``10 * dx``."""

    gamma: float
    omega: float
    kernel: KernelSpec
    grid_points: int = 1024
    epsilon: float | None = None
    dt: float = 1e-3
    max_steps: int = 200_000
    steady_tol: float = 1e-7
    seed: int = 0
    noise_amp: float = 0.1
    dealias: bool = False
    energy_tol: float = 1e-9

    def __post_init__(self):
        m = self.grid_points
        if int(m) != m or m < 8 or m & (m - 1):
            raise ParameterError(f"grid_points must be a power of two >= 8, got {m}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", 10.0 * self.dx)
        if not self.epsilon > 0:
            raise ParameterError("epsilon must be > 0")
        if not self.dt > 0:
            raise ParameterError("dt must be > 0")
        if not self.steady_tol > 0:
            raise ParameterError("steady_tol must be > 0")
        if not 0.0 < self.omega < 1.0:
            raise ParameterError(f"omega must lie in (0, 1), got {self.omega}")
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ParameterError("gamma must be finite and >= 0")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ParameterError("max_steps must be a positive integer")
        if self.noise_amp < 0:
            raise ParameterError("noise_amp must be >= 0")

    @property
    def dx(self) -> float:
        return TWO_PI / self.grid_points

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.grid_points) * self.dx

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class FieldState:
    u: np.ndarray
    time: float = 0.0
    step: int = 0
    energy: float = float("nan")
    u_prev: np.ndarray | None = field(default=None, repr=False)


class _Operators(NamedTuple):
    modes: np.ndarray  # integer wavenumbers of the rfft
    weights: np.ndarray  # multiplicity of each rfft mode in the full spectrum
    inv_lambda: np.ndarray  # 1/lambda(n), 0 at n = 0
    mask: np.ndarray  # dealiasing mask (all ones when off)


_OPS_CACHE: dict = {}


def _operators(config: SolverConfig) -> _Operators:
    key = (config.kernel, config.grid_points, config.dealias)
    ops = _OPS_CACHE.get(key)
    if ops is None:
        m = config.grid_points
        n = np.arange(m // 2 + 1, dtype=float)
        weights = np.full(n.shape, 2.0)
        weights[0] = 1.0
        weights[-1] = 1.0
        lam = eigenvalue(config.kernel, n[1:])
        if np.any(lam <= 0):
            raise SingularModeError(f"lambda vanishes at a nonzero mode for {config.kernel.label()}")
        inv = np.concatenate(([0.0], 1.0 / lam))
        mask = (n <= m / 3.0).astype(float) if config.dealias else np.ones_like(n)
        ops = _Operators(n, weights, inv, mask)
        _OPS_CACHE[key] = ops
    return ops


def _coeffs(u: np.ndarray) -> np.ndarray:
    """Normalised Fourier coefficients u_hat_n = (1/2pi) int u e^{-inx} dx, n >= 0."""
    return np.fft.rfft(u) / len(u)


def _field(coeffs: np.ndarray, m: int) -> np.ndarray:
    return np.fft.irfft(coeffs * m, n=m)


def _project_mean(u: np.ndarray, omega: float) -> np.ndarray:
    return u + (omega - np.mean(u))


def init_random(config: SolverConfig) -> FieldState:
    """``omega`` plus seeded uniform noise of amplitude ``noise_amp``, mean-corrected."""
    rng = np.random.default_rng(config.seed)
    xi = rng.uniform(-1.0, 1.0, config.grid_points)
    u = _project_mean(config.omega + config.noise_amp * xi, config.omega)
    return FieldState(u, energy=energy_diffuse(u, config))


def state_from_field(u, config: SolverConfig) -> FieldState:
    u = np.array(u, dtype=float)
    if u.shape != (config.grid_points,):
        raise ParameterError(f"field must have {config.grid_points} points")
    return FieldState(u, energy=energy_diffuse(u, config))


def _nonlinear_hat(u: np.ndarray, config: SolverConfig, ops: _Operators) -> np.ndarray:
    """Fourier coefficients of ``-W'(u)/eps - gamma G(u - mean u)``."""
    w_hat = _coeffs(double_well_prime(u)) * ops.mask
    u_hat = _coeffs(u)
    return -w_hat / config.epsilon - config.gamma * ops.inv_lambda * u_hat


def rhs_spectral(u, config: SolverConfig) -> np.ndarray:
    """L2 gradient ``eps u_xx - W'(u)/eps - gamma G(u - mean u)`` in physical space."""
    u = np.asarray(u, dtype=float)
    ops = _operators(config)
    u_hat = _coeffs(u)
    total = -config.epsilon * ops.modes**2 * u_hat + _nonlinear_hat(u, config, ops)
    return _field(total, config.grid_points)


def energy_diffuse(u, config: SolverConfig) -> float:
    """Spectral evaluation of the diffuse energy on the grid."""
    u = np.asarray(u, dtype=float)
    ops = _operators(config)
    power = ops.weights * np.abs(_coeffs(u)) ** 2
    gradient = 0.5 * config.epsilon * TWO_PI * math.fsum(ops.modes**2 * power)
    potential = config.dx / config.epsilon * math.fsum(double_well(u))
    # (u - omega) differs from u only in mode 0, which carries no weight here
    nonlocal_ = 0.5 * config.gamma * TWO_PI * math.fsum(ops.inv_lambda * power)
    return gradient + potential + nonlocal_


def _check_finite(u, config, step):
    if not np.all(np.isfinite(u)):
        raise DivergenceError(f"non-finite field at step {step}; try a smaller dt than {config.dt}")


def step_bdf2(state: FieldState, config: SolverConfig) -> FieldState:
    """One semi-implicit BDF2 step; backward Euler when no previous field is stored."""
    ops = _operators(config)
    m = config.grid_points
    diff = config.epsilon * ops.modes**2
    dt = config.dt
    u_k = state.u
    if state.u_prev is None:
        rhs = _coeffs(u_k) + dt * _nonlinear_hat(u_k, config, ops)
        new_hat = rhs / (1.0 + dt * diff)
    else:
        u_ext = 2.0 * u_k - state.u_prev
        rhs = 4.0 * _coeffs(u_k) - _coeffs(state.u_prev) + 2.0 * dt * _nonlinear_hat(u_ext, config, ops)
        new_hat = rhs / (3.0 + 2.0 * dt * diff)
    u_new = _project_mean(_field(new_hat, m), config.omega)
    _check_finite(u_new, config, state.step + 1)
    return FieldState(
        u_new,
        time=state.time + dt,
        step=state.step + 1,
        energy=energy_diffuse(u_new, config),
        u_prev=u_k,
    )


class TrajectoryRow(NamedTuple):
    step: int
    time: float
    energy: float
    bubble_count: int


@dataclass
class ConvergenceReport:
    converged: bool
    steps: int
    residual: float
    energy_nonincreasing: bool
    max_energy_increase: float
    trajectory: list[TrajectoryRow]


def evolve(
    state: FieldState,
    config: SolverConfig,
    record_every: int = 1000,
    on_record: Callable[[FieldState], None] | None = None,
) -> tuple[FieldState, ConvergenceReport]:
    """Step until ``max|u^{k+1} - u^k| / dt < steady_tol`` or ``max_steps``.

    Every step's energy is compared with its predecessor; increases larger
    than ``config.energy_tol`` mark the run as not energy-nonincreasing.
    A trajectory row is kept every ``record_every`` steps and at the end;
    ``on_record`` is called with the state at the same moments.
    """
    if record_every < 1:
        raise ParameterError("record_every must be >= 1")
    rows = [TrajectoryRow(state.step, state.time, state.energy, detect_bubbles(state.u).count)]
    if on_record is not None:
        on_record(state)
    max_rise = -math.inf
    residual = math.inf
    converged = False
    steps = 0
    for _ in range(config.max_steps):
        new = step_bdf2(state, config)
        steps += 1
        residual = float(np.max(np.abs(new.u - state.u))) / config.dt
        max_rise = max(max_rise, new.energy - state.energy)
        state = new
        converged = residual < config.steady_tol
        if converged or steps % record_every == 0:
            rows.append(TrajectoryRow(state.step, state.time, state.energy, detect_bubbles(state.u).count))
            if on_record is not None:
                on_record(state)
        if converged:
            break
    if rows[-1].step != state.step:
        rows.append(TrajectoryRow(state.step, state.time, state.energy, detect_bubbles(state.u).count))
        if on_record is not None:
            on_record(state)
    report = ConvergenceReport(
        converged=converged,
        steps=steps,
        residual=residual,
        energy_nonincreasing=max_rise <= config.energy_tol,
        max_energy_increase=max(max_rise, 0.0),
        trajectory=rows,
    )
    return state, report


@dataclass(frozen=True)
class BubbleProfile:
    count: int
    intervals: tuple[tuple[float, float], ...]
    widths: np.ndarray
    gaps: np.ndarray
    width_cv: float
    gap_cv: float
    full_cover: bool = False


def _cv(values: np.ndarray) -> float:
    if len(values) == 0:
        return 0.0
    mean = float(np.mean(values))
    return float(np.std(values) / mean) if mean > 0 else 0.0


def detect_bubbles(u, threshold: float = 0.5, length: float = TWO_PI) -> BubbleProfile:
    """Bubbles are the periodic runs where ``u > threshold``.

    Endpoints are placed at the linearly interpolated threshold crossings.
    Gaps are the periodic spacings between consecutive bubble centres.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or len(u) < 2 or not np.all(np.isfinite(u)):
        raise ParameterError("u must be a finite 1D array")
    m = len(u)
    h = length / m
    inside = u > threshold
    empty = np.array([])
    if not inside.any():
        return BubbleProfile(0, (), empty, empty, 0.0, 0.0)
    if inside.all():
        return BubbleProfile(1, ((0.0, length),), np.array([length]), np.array([length]), 0.0, 0.0, True)
    before = np.roll(u, 1)
    was_inside = np.roll(inside, 1)
    rises = np.flatnonzero(inside & ~was_inside)
    falls = np.flatnonzero(~inside & was_inside)

    def crossing(j):
        u0, u1 = before[j], u[j]
        return ((j - 1) + (threshold - u0) / (u1 - u0)) * h

    starts = np.array([crossing(j) for j in rises]) % length
    ends = np.array([crossing(j) for j in falls]) % length
    if falls[0] < rises[0]:
        # the first fall closes the bubble that wraps around x = 0
        ends = np.roll(ends, -1)
    widths = (ends - starts) % length
    centres = (starts + 0.5 * widths) % length
    order = np.argsort(centres)
    centres = centres[order]
    gaps = np.diff(np.append(centres, centres[0] + length))
    intervals = tuple((float(s), float(e)) for s, e in zip(starts[order], ends[order]))
    widths = widths[order]
    return BubbleProfile(len(widths), intervals, widths, gaps, _cv(widths), _cv(gaps))


def step_profile(big_n: int, omega: float, grid_points: int, shift: float = 0.0) -> np.ndarray:
    """Grid samples of the equal-size, equal-distance N-bubble step function."""
    x = np.arange(grid_points) * (TWO_PI / grid_points)
    phase = ((x - shift) % (TWO_PI / big_n)) / (TWO_PI / big_n)
    return (phase < omega).astype(float)


def tanh_profile(big_n: int, config: SolverConfig, shift: float = 0.0) -> np.ndarray:
    """Smooth N-bubble profile with the optimal interface shape ``(1 + tanh(3 d / eps)) / 2``."""
    period = TWO_PI / big_n
    half = 0.5 * config.omega * period
    y = (config.x - shift) % period - 0.5 * period
    dist = half - np.abs(y)
    return _project_mean(0.5 * (1.0 + np.tanh(3.0 * dist / config.epsilon)), config.omega)
