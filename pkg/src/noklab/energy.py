"""Sharp-interface energy of the equal-size, equal-distance N-bubble state.

For ``U_N`` the repulsive energy collapses to the series::

    F(N) = sum_{m>=1} (sin(m pi omega) / m)^2 / lambda(m N)
    E_tot(N) = 2 N + (2 gamma / pi) F(N)

All series are truncated at ``M`` terms, summed with ``math.fsum`` in
ascending ``m``, and accompanied by a rigorous bound on the discarded tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import polygamma

from .errors import ParameterError, SingularModeError, ConsistencyError
from .kernels import (
    Family,
    KernelSpec,
    d_delta_inv_eigenvalue,
    eigenvalue,
    eigenvalue_limit,
)

DEFAULT_TRUNCATION = 500
_SINC_FIRST_MAX = 4.493409457909064  # first positive root of tan x = x


@dataclass(frozen=True)
class EnergyParams:
    """Parameters of ``E_tot(N)``: repulsion strength, volume fraction, kernel, cutoff."""

    gamma: float
    omega: float
    kernel: KernelSpec
    truncation_m: int = DEFAULT_TRUNCATION

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ParameterError(f"gamma must be finite and >= 0, got {self.gamma}")
        if not 0.0 < self.omega <= 0.5:
            raise ParameterError(f"omega must lie in (0, 1/2], got {self.omega}")
        if int(self.truncation_m) != self.truncation_m or self.truncation_m < 1:
            raise ParameterError(f"truncation_m must be a positive integer, got {self.truncation_m}")

    def with_kernel(self, kernel: KernelSpec) -> "EnergyParams":
        return replace(self, kernel=kernel)


class SeriesValue(NamedTuple):
    value: float
    tail_bound: float


class FLimit(NamedTuple):
    value: float
    vanishes: bool


class EnergyBreakdown(NamedTuple):
    attraction: float
    repulsion: float
    total: float
    truncation_tail_bound: float


def step_fourier_coeff_sq(n: int, big_n: int, omega: float) -> float:
    """``|u_hat_n|^2`` of the equal-size, equal-distance N-bubble step function."""
    if n < 1 or big_n < 1:
        raise ParameterError("n and N must be >= 1")
    if n % big_n:
        return 0.0
    return (big_n / n) ** 2 * math.sin(n * math.pi * omega / big_n) ** 2 / math.pi**2


def _weights(omega: float, m_count: int) -> np.ndarray:
    m = np.arange(1, m_count + 1, dtype=float)
    return (np.sin(m * math.pi * omega) / m) ** 2


def _sum_sq_sin(omega: float) -> float:
    """Closed form of sum_{m>=1} sin^2(m pi omega) / m^2."""
    x = math.pi * omega
    return x * (math.pi - x) / 2.0


def _lambda_lower_bound(kernel: KernelSpec, n0: np.ndarray) -> np.ndarray:
    """Lower bound on inf_{n >= n0} lambda(n) (elementwise; may be <= 0 = unknown)."""
    fam = kernel.family
    d = kernel.delta
    if fam is Family.CONSTANT:
        x0 = n0 * d
        with np.errstate(divide="ignore", invalid="ignore"):
            sinc0 = np.where(x0 > 0, np.sin(x0) / np.where(x0 > 0, x0, 1.0), 1.0)
        sup_sinc = np.where(
            x0 < _SINC_FIRST_MAX,
            np.maximum(sinc0, 1.0 / _SINC_FIRST_MAX),
            1.0 / np.maximum(x0, _SINC_FIRST_MAX),
        )
        return 6.0 / d**2 * (1.0 - sup_sinc)
    if fam is Family.POWER and kernel.alpha < 1.0:
        a = kernel.alpha
        x0 = n0 * d
        f_inf = gamma_fn(1.0 - a) * math.sin(math.pi * a / 2.0)
        lam_inf = eigenvalue_limit(kernel).value
        return lam_inf * (1.0 - (1.0 - a) * (f_inf * x0 ** (a - 1.0) + 2.0 / x0))
    # remaining families have lambda increasing in n
    return eigenvalue(kernel, n0)


def _tail_bounds(kernel: KernelSpec, big_n: np.ndarray, m_count: int) -> np.ndarray:
    rest = float(polygamma(1, m_count + 1))  # sum_{m > M} 1/m^2
    lam_min = _lambda_lower_bound(kernel, m_count * big_n)
    with np.errstate(divide="ignore"):
        return np.where(lam_min > 0, rest / np.where(lam_min > 0, lam_min, 1.0), np.inf)


def _check_n(big_n: np.ndarray):
    if np.any(big_n < 1) or not np.all(np.isfinite(big_n)):
        raise ParameterError("N must be finite and >= 1")


def _inv_lambda(kernel: KernelSpec, n: np.ndarray) -> np.ndarray:
    lam = eigenvalue(kernel, n)
    if np.any(lam <= 0):
        raise SingularModeError(f"zero eigenvalue met in the series for {kernel.label()}")
    return 1.0 / lam


def _rowwise_fsum(terms: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(row) for row in terms])


def repulsion_table(big_n, params: EnergyParams) -> tuple[np.ndarray, np.ndarray]:
    """``F(N)`` and its tail bound for every entry of ``big_n`` (real, >= 1)."""
    big_n = np.atleast_1d(np.asarray(big_n, dtype=float))
    _check_n(big_n)
    m_count = int(params.truncation_m)
    m = np.arange(1, m_count + 1, dtype=float)
    inv = _inv_lambda(params.kernel, np.outer(big_n, m))
    values = _rowwise_fsum(inv * _weights(params.omega, m_count))
    return values, _tail_bounds(params.kernel, big_n, m_count)


def repulsion_f(big_n: float, params: EnergyParams) -> SeriesValue:
    """Truncated series ``F(N; delta, omega)`` with a bound on the dropped tail.

    ``N`` may be any real >= 1; integer values give the bubble-count energy.
    """
    values, tails = repulsion_table([big_n], params)
    return SeriesValue(float(values[0]), float(tails[0]))


@lru_cache(maxsize=64)
def integer_repulsion_table(params: EnergyParams, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Cached ``F(1..n_max)`` and tail bounds; gamma does not enter."""
    params = replace(params, gamma=0.0)
    values, tails = repulsion_table(np.arange(1, n_max + 1), params)
    values.setflags(write=False)
    tails.setflags(write=False)
    return values, tails


def f_infinity(params: EnergyParams) -> FLimit:
    """``lim_{N -> inf} F(N)``: ``S / lambda(inf)`` or zero when lambda is unbounded."""
    lim = eigenvalue_limit(params.kernel)
    if not lim.finite:
        return FLimit(0.0, True)
    return FLimit(_sum_sq_sin(params.omega) / lim.value, False)


def total_energy(big_n: float, params: EnergyParams) -> EnergyBreakdown:
    f = repulsion_f(big_n, params)
    scale = 2.0 * params.gamma / math.pi
    att = 2.0 * big_n
    rep = scale * f.value
    return EnergyBreakdown(att, rep, att + rep, scale * f.tail_bound)


def _difference_terms(big_n: float, kernel: KernelSpec, omega: float, m_count: int) -> np.ndarray:
    m = np.arange(1, m_count + 1, dtype=float)
    diff = _inv_lambda(kernel, (big_n + 1) * m) - _inv_lambda(kernel, big_n * m)
    return diff * _weights(omega, m_count)


def delta_n_f(big_n: float, params: EnergyParams) -> float:
    """Forward difference ``F(N+1) - F(N)``, summed termwise."""
    _check_n(np.asarray(big_n, dtype=float))
    return math.fsum(_difference_terms(big_n, params.kernel, params.omega, params.truncation_m))


def _d_delta_terms_fd(big_n, params, h):
    k = params.kernel
    plus = _difference_terms(big_n, k.with_delta(k.delta + h), params.omega, params.truncation_m)
    minus = _difference_terms(big_n, k.with_delta(k.delta - h), params.omega, params.truncation_m)
    return (plus - minus) / (2.0 * h)


def _d_delta_terms_analytic(big_n, params):
    m = np.arange(1, params.truncation_m + 1, dtype=float)
    k = params.kernel
    diff = d_delta_inv_eigenvalue(k, (big_n + 1) * m) - d_delta_inv_eigenvalue(k, big_n * m)
    return diff * _weights(params.omega, params.truncation_m)


ANALYTIC_DELTA_FAMILIES = (Family.POWER, Family.GAUSS, Family.SCREENED, Family.LOCAL)


def d_delta_of_delta_n_f(
    big_n: float, params: EnergyParams, h: float | None = None, method: str = "fd"
) -> float:
    """``d/d(delta)`` of ``F(N+1) - F(N)``.

    ``method="fd"`` uses a central difference with step ``h`` (default
    ``1e-4 * delta``); for the power kernel the closed-form derivative is
    evaluated alongside and the two must agree to 1e-4 relative.
    ``method="analytic"`` returns the closed form where one exists.
    """
    _check_n(np.asarray(big_n, dtype=float))
    delta = params.kernel.delta
    if method == "analytic":
        if params.kernel.family not in ANALYTIC_DELTA_FAMILIES:
            raise ParameterError(f"no closed form for {params.kernel.family.value}; use method='fd'")
        return math.fsum(_d_delta_terms_analytic(big_n, params))
    if method != "fd":
        raise ParameterError(f"unknown method {method!r}")
    if params.kernel.family is Family.LOCAL:
        return 0.0
    if h is None:
        h = 1e-4 * delta
    if not h > 0 or delta - h <= 0:
        raise ParameterError(f"finite-difference step h={h} invalid for delta={delta}")
    fd_terms = _d_delta_terms_fd(big_n, params, h)
    value = math.fsum(fd_terms)
    if params.kernel.family is Family.POWER:
        an_terms = _d_delta_terms_analytic(big_n, params)
        exact = math.fsum(an_terms)
        scale = math.fsum(np.abs(an_terms))
        if abs(value - exact) > 1e-4 * max(abs(exact), scale * 1e-3):
            raise ConsistencyError(
                f"finite-difference and closed-form delta derivatives disagree: {value} vs {exact}"
            )
    return value


def cumulative_delta_n_f(big_n: float, params: EnergyParams) -> float:
    """``Delta_N F`` under the kernel minus ``Delta_N F`` under its delta = 0 baseline."""
    _check_n(np.asarray(big_n, dtype=float))
    k = params.kernel
    terms = _difference_terms(big_n, k, params.omega, params.truncation_m) - _difference_terms(
        big_n, k.local_baseline(), params.omega, params.truncation_m
    )
    return math.fsum(terms)
