"""Weakly singular oscillatory integrals behind the power-kernel eigenvalues.

Two families are needed::

    J(x) = int_0^x (1 - cos t) t^(-alpha) dt      0 < alpha < 3
    f(x) = int_0^x cos(t) t^(-alpha) dt           0 < alpha < 1

Both are evaluated on three pieces of the half line:

* ``[0, 1]``: termwise-integrated Taylor series of the cosine, which handles
  the power singularity at the origin exactly;
* ``[1, X_ASYM]``: unit-length Gauss-Legendre panels; the integrand is
  analytic there with its only singularity at distance >= 1, so 24 nodes per
  panel reach machine precision. Full panels are tabulated once per alpha;
* ``[X_ASYM, inf)``: the asymptotic expansion of ``int_x^inf e^(it) t^(-alpha)``,
  truncated where it is accurate to ~1e-17 relative to ``x^-alpha``.

Every routine is vectorised over ``x``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .errors import ParameterError

X_ASYM = 50.0
_N_SERIES = 16
_N_ASYM = 40
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)

_FACT_2K = np.array([math.factorial(2 * k) for k in range(_N_SERIES + 1)], dtype=float)


def _integrand(t, alpha, kind):
    if kind == "cos":
        return np.cos(t) * t ** (-alpha)
    # 1 - cos t = 2 sin^2(t/2), free of cancellation for small t
    return 2.0 * np.sin(0.5 * t) ** 2 * t ** (-alpha)


def _head(x, alpha, kind):
    """Series value of the integral over [0, x] for 0 <= x <= 1."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    k0 = 0 if kind == "cos" else 1
    # sum from the smallest term upward
    for k in range(_N_SERIES, k0 - 1, -1):
        p = 2 * k + 1 - alpha
        sign = (-1.0) ** k if kind == "cos" else (-1.0) ** (k + 1)
        out += sign * x**p / (_FACT_2K[k] * p)
    return out


def _gauss_legendre(a, b, alpha, kind):
    """Integral over [a, b] (arrays, same shape) with one 24-point rule."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = mid[..., None] + half[..., None] * _GL_NODES
    return half * (_integrand(t, alpha, kind) @ _GL_WEIGHTS)


@lru_cache(maxsize=256)
def _panel_table(alpha: float, kind: str) -> np.ndarray:
    """Cumulative integral from 0 to each integer 1, 2, ..., X_ASYM."""
    m = int(X_ASYM)
    left = np.arange(1.0, m)
    panels = _gauss_legendre(left, left + 1.0, alpha, kind)
    table = np.empty(m)
    table[0] = _head(np.array(1.0), alpha, kind)
    table[1:] = table[0] + np.cumsum(panels)
    table.setflags(write=False)
    return table


def _cos_tail(x, alpha):
    """Re int_x^inf e^(it) t^(-alpha) dt for x >= X_ASYM (asymptotic series)."""
    x = np.asarray(x, dtype=float)
    s = np.zeros(x.shape, dtype=complex)
    term = np.ones(x.shape, dtype=complex)
    for k in range(_N_ASYM):
        s += term
        term = term * (-1j) * (alpha + k) / x
    return np.real(1j * np.exp(1j * x) * x ** (-alpha) * s)


def _power_piece(x, alpha):
    """int_X_ASYM^x t^(-alpha) dt."""
    r = np.log(x / X_ASYM)
    if abs(1.0 - alpha) < 1e-14:
        return r
    return X_ASYM ** (1.0 - alpha) * np.expm1((1.0 - alpha) * r) / (1.0 - alpha)


def singular_integral(x, alpha: float, kind: str):
    """``int_0^x g(t) t^(-alpha) dt`` with ``g = cos`` or ``g = 1 - cos``.

    ``kind`` is ``"cos"`` or ``"one_minus_cos"``. ``x`` may be a scalar or an
    array of nonnegative reals.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ParameterError("integration limit must be finite and >= 0")
    out = np.empty_like(x)

    small = x <= 1.0
    out[small] = _head(x[small], alpha, kind)

    table = _panel_table(float(alpha), kind)
    mid = (~small) & (x <= X_ASYM)
    if np.any(mid):
        xm = x[mid]
        j = np.minimum(np.floor(xm), X_ASYM - 1).astype(int)
        out[mid] = table[j - 1] + _gauss_legendre(j.astype(float), xm, alpha, kind)

    big = x > X_ASYM
    if np.any(big):
        xb = x[big]
        cos_part = _cos_tail(np.array(X_ASYM), alpha) - _cos_tail(xb, alpha)
        if kind == "cos":
            out[big] = table[-1] + cos_part
        else:
            out[big] = table[-1] + _power_piece(xb, alpha) - cos_part
    return float(out[0]) if scalar else out


def k_integral(x, alpha: float):
    """K(x) = int_0^1 (1 - cos(x xi)) / xi^alpha d(xi), for 0 < alpha < 3.

    The power-kernel eigenvalue is ``2 (3 - alpha) / delta^2 * K(n delta)``.
    """
    if not 0.0 < alpha < 3.0:
        raise ParameterError(f"alpha must lie in (0, 3), got {alpha}")
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ParameterError("x must be >= 0")
    out = np.empty_like(x)
    small = x <= 1.0
    # direct series avoids x^(alpha-1) * O(x^(3-alpha)) near the origin
    xs = x[small]
    acc = np.zeros_like(xs)
    for k in range(_N_SERIES, 0, -1):
        acc += (-1.0) ** (k + 1) * xs ** (2 * k) / (_FACT_2K[k] * (2 * k + 1 - alpha))
    out[small] = acc
    xl = x[~small]
    out[~small] = xl ** (alpha - 1.0) * singular_integral(xl, alpha, "one_minus_cos")
    return float(out[0]) if scalar else out


def cos_power_integral(x, alpha: float):
    """f(x) = int_0^x cos(t) / t^alpha dt for 0 < alpha < 1."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    return singular_integral(x, alpha, "cos")
