"""Optimal bubble count: discrete minimisation of ``E_tot(N) = 2N + (2 gamma/pi) F(N)``.

``n_star`` is the largest integer minimiser of ``E_tot`` and ``n_tilde`` the
smallest integer minimiser of ``F`` (when ``F`` attains its infimum). Since
``F`` does not depend on gamma, one cached table of ``F(1..cap)`` serves an
entire gamma sweep.
"""

from __future__ import annotations

import enum
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .energy import (
    DEFAULT_TRUNCATION,
    EnergyParams,
    cumulative_delta_n_f,
    d_delta_of_delta_n_f,
    f_infinity,
    integer_repulsion_table,
)
from .errors import ConsistencyError, ParameterError
from .kernels import Family, KernelCase, KernelSpec, classify, discrete_lambda_argmax

TIE_RTOL = 1e-12


class CapLimitedWarning(UserWarning):
    """The minimiser sits on the scan cap, so it is a lower bound only."""


@dataclass(frozen=True)
class OptimalResult:
    n_star: int
    n_tilde: int | None
    bounded: bool
    energy_at_star: float
    scan_cap: int
    cap_limited: bool = False


@dataclass
class SweepResult:
    gamma_grid: np.ndarray
    n_star_values: np.ndarray
    kernel: KernelSpec
    omega: float
    scan_cap: int
    bounded: bool
    cap_limited: np.ndarray = field(default=None)


class DeltaMode(str, enum.Enum):
    INSTANT_PROMOTE = "InstantPromote"
    INSTANT_DEMOTE = "InstantDemote"
    CUMULATIVE_PROMOTE = "CumulativePromote"
    CUMULATIVE_DEMOTE = "CumulativeDemote"
    UNCHANGED = "Unchanged"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class DeltaPoint:
    """Sign diagnostics at one horizon value."""

    delta: float
    n_star: int
    n_star_local: int
    instant_prev: float | None
    instant_at: float
    cumulative_prev: float | None
    cumulative_at: float
    instant_mode: DeltaMode
    cumulative_mode: DeltaMode


@dataclass(frozen=True)
class DeltaEffectReport:
    mode: DeltaMode
    kernel: KernelSpec
    omega: float
    gamma: float
    points: tuple[DeltaPoint, ...]


class UpperBoundCheck(NamedTuple):
    bounded: bool
    bound: int | None
    predicted_bounded: bool
    agree: bool
    gamma_grid: np.ndarray
    n_star_values: np.ndarray
    diagnostic: str


def default_scan_cap(kernel: KernelSpec) -> int:
    if kernel.family in (Family.LOCAL, Family.SCREENED) or kernel.delta <= 0:
        return 200
    return max(200, math.ceil(4 * math.pi / kernel.delta))


def kernel_bounded(kernel: KernelSpec) -> bool:
    """Whether ``N*(gamma)`` is expected to saturate (lambda attains its sup at finite n)."""
    case = classify(kernel)
    if case is KernelCase.I:
        return True
    if case is KernelCase.II:
        return discrete_lambda_argmax(kernel).bounded
    return False


def _argmin(values: np.ndarray, largest: bool) -> int:
    lo = np.min(values)
    hits = np.flatnonzero(values <= lo + TIE_RTOL * abs(lo))
    return int(hits[-1] if largest else hits[0])


def _params(kernel, omega, truncation_m=DEFAULT_TRUNCATION, gamma=0.0):
    return EnergyParams(gamma=gamma, omega=omega, kernel=kernel, truncation_m=truncation_m)


def n_tilde(params: EnergyParams, scan_cap: int | None = None) -> int | None:
    """Smallest integer global minimiser of ``F``, or None when it is not attained."""
    kernel = params.kernel
    if not kernel_bounded(kernel):
        return None
    cap = max(scan_cap or default_scan_cap(kernel), math.ceil(4 * math.pi / kernel.delta))
    if cap < 2:
        raise ParameterError("scan_cap must be >= 2")
    values, _ = integer_repulsion_table(_params(kernel, params.omega, params.truncation_m), cap)
    i = _argmin(values, largest=False)
    lim = f_infinity(params)
    if not lim.vanishes and values[i] >= lim.value:
        return None
    return i + 1


def _resolve_cap(params: EnergyParams, scan_cap: int | None) -> tuple[int, bool, int | None]:
    cap = scan_cap if scan_cap is not None else default_scan_cap(params.kernel)
    if cap < 2:
        raise ParameterError("scan_cap must be >= 2")
    bounded = kernel_bounded(params.kernel)
    nt = n_tilde(params, scan_cap) if bounded else None
    if nt is not None:
        cap = max(cap, 2 * nt)
    return cap, bounded, nt


def _star_from_table(values: np.ndarray, gammas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(1, len(values) + 1, dtype=float)
    energies = 2.0 * n[None, :] + (2.0 * gammas[:, None] / math.pi) * values[None, :]
    idx = np.array([_argmin(row, largest=True) for row in energies])
    return idx + 1, energies[np.arange(len(gammas)), idx]


def n_star(params: EnergyParams, scan_cap: int | None = None) -> OptimalResult:
    """Largest integer minimiser of ``E_tot`` over ``1..scan_cap``.

    For kernels with a bounded optimum the cap is raised to at least
    ``2 * n_tilde``. For unbounded kernels an optimum on the cap itself is
    flagged with :class:`CapLimitedWarning`.
    """
    cap, bounded, nt = _resolve_cap(params, scan_cap)
    values, _ = integer_repulsion_table(_params(params.kernel, params.omega, params.truncation_m), cap)
    stars, energies = _star_from_table(values, np.array([params.gamma], dtype=float))
    ns = int(stars[0])
    # without an attained minimum of F the optimum can drift past any cap
    limited = nt is None and ns == cap
    if limited:
        warnings.warn(f"N* reached the scan cap {cap}; result is cap-limited", CapLimitedWarning)
    return OptimalResult(ns, nt, bounded, float(energies[0]), cap, limited)


def gamma_sweep(
    kernel: KernelSpec,
    omega: float,
    gamma_grid: Sequence[float],
    scan_cap: int | None = None,
    truncation_m: int = DEFAULT_TRUNCATION,
) -> SweepResult:
    """``N*(gamma)`` on an ascending grid; raises if the staircase ever decreases."""
    gammas = np.asarray(gamma_grid, dtype=float)
    if gammas.ndim != 1 or len(gammas) == 0 or np.any(gammas <= 0) or np.any(np.diff(gammas) <= 0):
        raise ParameterError("gamma_grid must be a nonempty, strictly ascending list of positive values")
    params = _params(kernel, omega, truncation_m)
    cap, bounded, nt = _resolve_cap(params, scan_cap)
    values, _ = integer_repulsion_table(params, cap)
    stars, _ = _star_from_table(values, gammas)
    if np.any(np.diff(stars) < 0):
        raise ConsistencyError(f"N*(gamma) decreased along the grid for {kernel.label()}")
    limited = (stars == cap) & (nt is None)
    if np.any(limited):
        warnings.warn(f"N* reached the scan cap {cap} for {kernel.label()}", CapLimitedWarning)
    return SweepResult(gammas, stars, kernel, omega, cap, bounded, limited)


def resolve_jobs(jobs: int | None) -> int:
    if jobs is None:
        env = os.environ.get("NOKLAB_JOBS")
        jobs = int(env) if env else (os.cpu_count() or 1)
    if jobs < 1:
        raise ParameterError("jobs must be >= 1")
    return jobs


def _parallel_map(fn, items, jobs):
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def delta_sweep(
    kernel: KernelSpec,
    omega: float,
    gamma_grid: Sequence[float],
    delta_grid: Sequence[float],
    scan_cap: int | None = None,
    truncation_m: int = DEFAULT_TRUNCATION,
    jobs: int | None = None,
) -> list[SweepResult]:
    """One gamma sweep per horizon value; ``delta = 0`` means the local baseline."""

    def one(delta):
        k = kernel.local_baseline() if delta == 0 else kernel.with_delta(delta)
        return gamma_sweep(k, omega, gamma_grid, scan_cap, truncation_m)

    return _parallel_map(one, list(delta_grid), jobs)


def _classify_signs(prev, at, promote: DeltaMode, demote: DeltaMode) -> DeltaMode:
    if prev is None:
        if at == 0:
            return DeltaMode.UNCHANGED
        return promote if at < 0 else demote
    if prev == 0 and at == 0:
        return DeltaMode.UNCHANGED
    if prev <= 0 and at <= 0:
        return promote
    if prev >= 0 and at >= 0:
        return demote
    if prev < 0 < at:
        return DeltaMode.UNCHANGED
    return DeltaMode.UNDETERMINED


def _aggregate(points: Sequence[DeltaPoint]) -> DeltaMode:
    instant = {p.instant_mode for p in points}
    cumulative = {p.cumulative_mode for p in points}
    for modes in (instant, cumulative):
        if len(modes) == 1:
            (m,) = modes
            if m not in (DeltaMode.UNCHANGED, DeltaMode.UNDETERMINED):
                return m
    if instant == {DeltaMode.UNCHANGED}:
        return DeltaMode.UNCHANGED
    return DeltaMode.UNDETERMINED


def delta_effect_report(
    kernel: KernelSpec,
    omega: float,
    gamma: float,
    delta_grid: Sequence[float],
    scan_cap: int | None = None,
    truncation_m: int = DEFAULT_TRUNCATION,
    jobs: int | None = None,
) -> DeltaEffectReport:
    """Promotion / demotion of bubble splitting as the horizon grows.

    At each delta the signs of ``d/d(delta) Delta_N F`` (instant) and of
    ``Delta_N F - Delta_N F|_{delta=0}`` (cumulative) are read at ``N* - 1``
    and ``N*``; only ``N*`` is used when ``N* = 1``.
    """
    deltas = [float(d) for d in delta_grid]
    if not deltas or any(d <= 0 for d in deltas) or any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise ParameterError("delta_grid must be strictly ascending and positive")
    local = n_star(_params(kernel.local_baseline(), omega, truncation_m, gamma), scan_cap)

    def one(delta):
        k = kernel.with_delta(delta)
        params = _params(k, omega, truncation_m, gamma)
        ns = n_star(params, scan_cap).n_star
        prev_i = d_delta_of_delta_n_f(ns - 1, params) if ns > 1 else None
        at_i = d_delta_of_delta_n_f(ns, params)
        prev_c = cumulative_delta_n_f(ns - 1, params) if ns > 1 else None
        at_c = cumulative_delta_n_f(ns, params)
        return DeltaPoint(
            delta=delta,
            n_star=ns,
            n_star_local=local.n_star,
            instant_prev=prev_i,
            instant_at=at_i,
            cumulative_prev=prev_c,
            cumulative_at=at_c,
            instant_mode=_classify_signs(prev_i, at_i, DeltaMode.INSTANT_PROMOTE, DeltaMode.INSTANT_DEMOTE),
            cumulative_mode=_classify_signs(
                prev_c, at_c, DeltaMode.CUMULATIVE_PROMOTE, DeltaMode.CUMULATIVE_DEMOTE
            ),
        )

    points = tuple(_parallel_map(one, deltas, jobs))
    return DeltaEffectReport(_aggregate(points), kernel, omega, gamma, points)


def upper_bound_check(
    kernel: KernelSpec,
    omega: float,
    gamma_max: float = 1e6,
    scan_cap: int | None = None,
    points: int = 61,
) -> UpperBoundCheck:
    """Compare the eigenvalue-based boundedness prediction with a gamma sweep.

    The sweep runs on a log grid from 1 to ``gamma_max``. It counts as
    saturated when the final ``N*`` is the largest minimiser of ``F`` over
    the scan (the large-gamma limit of the staircase) and sits in the lower
    half of the scan range, so that the cap plays no role.
    """
    if gamma_max <= 10:
        raise ParameterError("gamma_max must exceed 10")
    predicted = kernel_bounded(kernel)
    grid = np.logspace(0.0, math.log10(gamma_max), points)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CapLimitedWarning)
        sweep = gamma_sweep(kernel, omega, grid, scan_cap)
    values, _ = integer_repulsion_table(_params(kernel, omega), sweep.scan_cap)
    limit = _argmin(values, largest=True) + 1
    last = int(sweep.n_star_values[-1])
    saturated = last == limit and 2 * last <= sweep.scan_cap
    bound = last if saturated else None
    agree = predicted == saturated
    if agree:
        diagnostic = "eigenvalue criterion and gamma sweep agree"
    elif predicted and 2 * limit <= sweep.scan_cap:
        diagnostic = f"N* = {last} has not reached the minimiser {limit} of F; raise gamma_max"
    elif predicted:
        diagnostic = (
            f"lambda peaks at a finite mode but F keeps decreasing up to the cap "
            f"{sweep.scan_cap} (last N* = {last})"
        )
    else:
        diagnostic = f"expected unbounded growth but N* settled at {last}"
    return UpperBoundCheck(saturated, bound, predicted, agree, grid, sweep.n_star_values, diagnostic)
