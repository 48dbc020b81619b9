"""Nonlocal kernels on the periodic interval and their Fourier eigenvalues.

Each operator acts diagonally on ``e^{inx}`` with eigenvalue ``lambda(n)``.
The families are the power kernel ``rho(xi) = (3 - alpha) xi^-alpha``, the
constant kernel (the ``alpha -> 0`` member), a Gauss-type kernel, the screened
Poisson operator ``delta I - d^2/dx^2`` and the plain local Laplacian.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConsistencyError, ParameterError
from .quadrature import cos_power_integral, k_integral


class Family(str, enum.Enum):
    POWER = "power"
    CONSTANT = "constant"
    GAUSS = "gauss"
    SCREENED = "screened"
    LOCAL = "local"


NONLOCAL_FAMILIES = (Family.POWER, Family.CONSTANT, Family.GAUSS)


class KernelCase(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    MONOTONE_LOCAL = "MonotoneLocal"


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family together with its horizon.

    ``delta`` is the horizon for the nonlocal families, the screening constant
    for ``SCREENED`` and is ignored (stored as 0) for ``LOCAL``. ``alpha`` is
    used by ``POWER`` only.
    """

    family: Family
    delta: float = 0.0
    alpha: float | None = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        delta = float(self.delta)
        if fam is Family.POWER:
            if self.alpha is None:
                raise ParameterError("power kernel needs alpha")
            a = float(self.alpha)
            if not 0.0 < a < 3.0 or a == 1.0:
                raise ParameterError(f"power kernel needs alpha in (0, 1) or (1, 3), got {a}")
            object.__setattr__(self, "alpha", a)
        elif self.alpha is not None:
            raise ParameterError(f"alpha is only meaningful for the power kernel, not {fam.value}")
        if fam in NONLOCAL_FAMILIES:
            if not 0.0 < delta <= math.pi:
                raise ParameterError(f"horizon delta must lie in (0, pi], got {delta}")
        elif fam is Family.SCREENED:
            if not (delta >= 0.0 and math.isfinite(delta)):
                raise ParameterError(f"screening constant must be >= 0, got {delta}")
        else:
            delta = 0.0
        object.__setattr__(self, "delta", delta)

    @classmethod
    def power(cls, alpha: float, delta: float) -> "KernelSpec":
        return cls(Family.POWER, delta, alpha)

    @classmethod
    def constant(cls, delta: float) -> "KernelSpec":
        return cls(Family.CONSTANT, delta)

    @classmethod
    def gauss(cls, delta: float) -> "KernelSpec":
        return cls(Family.GAUSS, delta)

    @classmethod
    def screened(cls, delta: float) -> "KernelSpec":
        return cls(Family.SCREENED, delta)

    @classmethod
    def local(cls) -> "KernelSpec":
        return cls(Family.LOCAL)

    def with_delta(self, delta: float) -> "KernelSpec":
        return replace(self, delta=delta)

    def local_baseline(self) -> "KernelSpec":
        """The delta = 0 operator, i.e. eigenvalues n^2."""
        if self.family is Family.SCREENED:
            return KernelSpec.screened(0.0)
        return KernelSpec.local()

    def label(self) -> str:
        if self.family is Family.POWER:
            return f"power(alpha={self.alpha:g}, delta={self.delta:g})"
        if self.family is Family.LOCAL:
            return "local"
        return f"{self.family.value}(delta={self.delta:g})"


class EigenvalueLimit(NamedTuple):
    finite: bool
    value: float | None = None


class LambdaArgmax(NamedTuple):
    bounded: bool
    n_at_max: int | None = None


def _one_minus_sinc(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < 0.1
    xs2 = x[small] ** 2
    # 1 - sin(x)/x = sum_{k>=1} (-1)^(k+1) x^(2k) / (2k+1)!
    acc = np.zeros_like(xs2)
    for k in range(7, 0, -1):
        acc = xs2 * ((-1.0) ** (k + 1) / math.factorial(2 * k + 1) + acc)
    out[small] = acc
    xl = x[~small]
    out[~small] = 1.0 - np.sin(xl) / xl
    return out


def eigenvalue(kernel: KernelSpec, n):
    """Eigenvalue ``lambda_delta(n)`` for real ``n >= 0`` (scalar or array)."""
    scalar = np.ndim(n) == 0
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(n < 0):
        raise ParameterError("mode index n must be >= 0")
    fam, d = kernel.family, kernel.delta
    if fam is Family.POWER:
        a = kernel.alpha
        lam = 2.0 * (3.0 - a) / d**2 * k_integral(n * d, a)
    elif fam is Family.CONSTANT:
        lam = 6.0 / d**2 * _one_minus_sinc(n * d)
    elif fam is Family.GAUSS:
        lam = -4.0 / d**2 * np.expm1(-((n * d) ** 2) / 4.0)
    elif fam is Family.SCREENED:
        lam = d + n**2
    else:
        lam = n**2
    return float(lam[0]) if scalar else lam


def eigenvalue_limit(kernel: KernelSpec) -> EigenvalueLimit:
    """``lambda_delta(inf)``, finite only for alpha < 1 power, constant and Gauss."""
    d = kernel.delta
    if kernel.family is Family.POWER and kernel.alpha < 1.0:
        a = kernel.alpha
        return EigenvalueLimit(True, 2.0 * (3.0 - a) / (d**2 * (1.0 - a)))
    if kernel.family is Family.CONSTANT:
        return EigenvalueLimit(True, 6.0 / d**2)
    if kernel.family is Family.GAUSS:
        return EigenvalueLimit(True, 4.0 / d**2)
    return EigenvalueLimit(False)


ALPHA_STAR_BRACKET = (0.2, 0.4)
_THREE_HALF_PI = 1.5 * math.pi


def alpha_star_residual(alpha: float) -> float:
    """g(alpha) = int_0^{3 pi/2} cos t / t^alpha dt; its root is alpha*."""
    return cos_power_integral(_THREE_HALF_PI, alpha)


def alpha_star(tol: float = 1e-8) -> float:
    """Critical power exponent separating Cases II and III, by bisection.

    ``g`` increases with alpha, so bisection on the fixed bracket converges to
    the unique root. Iteration stops once the bracket is narrower than ``tol``
    and ``|g(mid)| <= tol``.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be > 0, got {tol}")
    lo, hi = ALPHA_STAR_BRACKET
    g_lo, g_hi = alpha_star_residual(lo), alpha_star_residual(hi)
    if not (g_lo < 0.0 < g_hi):
        raise ConsistencyError(f"bracket [{lo}, {hi}] does not straddle the root: g = {g_lo}, {g_hi}")
    while True:
        mid = 0.5 * (lo + hi)
        g_mid = alpha_star_residual(mid)
        if (hi - lo <= tol and abs(g_mid) <= tol) or hi - lo < 4 * np.finfo(float).eps:
            return mid
        if g_mid < 0.0:
            lo = mid
        else:
            hi = mid


_alpha_star_lock = threading.Lock()
_alpha_star_memo: float | None = None


def cached_alpha_star() -> float:
    """alpha* at tol 1e-8, computed once per process."""
    global _alpha_star_memo
    if _alpha_star_memo is None:
        with _alpha_star_lock:
            if _alpha_star_memo is None:
                _alpha_star_memo = alpha_star(1e-8)
    return _alpha_star_memo


def classify(kernel: KernelSpec) -> KernelCase:
    if kernel.family is Family.CONSTANT:
        return KernelCase.I
    if kernel.family is Family.POWER:
        a = kernel.alpha
        if a > 1.0:
            return KernelCase.IV
        return KernelCase.II if a < cached_alpha_star() else KernelCase.III
    return KernelCase.MONOTONE_LOCAL


def default_scan_modes(kernel: KernelSpec) -> int:
    d = kernel.delta
    return 500 if d <= 0 else max(500, math.ceil(20 * math.pi / d))


def discrete_lambda_argmax(kernel: KernelSpec, n_max: int | None = None) -> LambdaArgmax:
    """Does ``lambda(n)`` over positive integers attain its supremum?

    Bounded means some scanned integer strictly beats ``lambda(inf)``; the
    reported index is the first one attaining the scanned maximum.
    """
    if classify(kernel) in (KernelCase.IV, KernelCase.MONOTONE_LOCAL):
        return LambdaArgmax(False)
    if n_max is None:
        n_max = default_scan_modes(kernel)
    if n_max < 1:
        raise ParameterError("n_max must be >= 1")
    lam = eigenvalue(kernel, np.arange(1, n_max + 1))
    limit = eigenvalue_limit(kernel).value
    i = int(np.argmax(lam))
    if lam[i] > limit * (1.0 + 1e-13):
        return LambdaArgmax(True, i + 1)
    return LambdaArgmax(False)


def d_delta_inv_eigenvalue(kernel: KernelSpec, n):
    """Closed-form ``d/d(delta) [1 / lambda_delta(n)]`` for n >= 1.

    Available for power, Gauss, screened Poisson and local kernels.
    """
    n = np.asarray(n, dtype=float)
    d = kernel.delta
    fam = kernel.family
    if fam is Family.POWER:
        a = kernel.alpha
        lam = eigenvalue(kernel, n)
        one_minus_cos = 2.0 * np.sin(0.5 * n * d) ** 2
        return (3.0 - a) / d / lam - 2.0 * (3.0 - a) / d**3 * one_minus_cos / lam**2
    if fam is Family.GAUSS:
        v = (n * d) ** 2 / 4.0
        q = -np.expm1(-v)
        return d / (2.0 * q) - d * v * np.exp(-v) / (2.0 * q**2)
    if fam is Family.SCREENED:
        return -1.0 / (d + n**2) ** 2
    if fam is Family.LOCAL:
        return np.zeros_like(n)
    raise ParameterError(f"no closed-form delta derivative for the {fam.value} kernel")
