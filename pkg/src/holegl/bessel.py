"""Modified Bessel functions of order zero and one for real arguments.

``I0`` and ``I1`` are summed from their power series, which has only positive
terms and stays accurate for every argument used in this package.  ``K0`` and
``K1`` use the logarithmic series below :data:`K_SWITCH` and Steed's continued
fraction above it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.57721566490153286061
#: Argument at which ``K0`` and ``K1`` switch from the series to the continued fraction.
K_SWITCH = 2.0
_EPS = 1e-17
_MAX_TERMS = 500


@dataclass(frozen=True)
class BesselEval:
    """Values of I0, I1, K0, K1 at one positive argument."""

    x: float
    I0: float
    I1: float
    K0: float
    K1: float

    def wronskian_residual(self) -> float:
        """Return ``|I0 K1 + I1 K0 - 1/x| * x``."""
        return abs(self.I0 * self.K1 + self.I1 * self.K0 - 1.0 / self.x) * self.x


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _series_i(x: np.ndarray):
    """Power series for I0 and I1."""
    q = 0.25 * x * x
    term0 = np.ones_like(x)
    term1 = np.ones_like(x)
    s0 = term0.copy()
    s1 = term1.copy()
    for k in range(1, _MAX_TERMS):
        term0 = term0 * q / (k * k)
        term1 = term1 * q / (k * (k + 1))
        s0 += term0
        s1 += term1
        if np.all(term0 <= _EPS * s0):
            break
    return s0, 0.5 * x * s1


def _series_k(x: np.ndarray):
    """Logarithmic series for K0 and K1, accurate for small ``x``."""
    q = 0.25 * x * x
    log_half = np.log(0.5 * x)
    i0, i1 = _series_i(x)
    # sum_k H_k q^k/(k!)^2 and sum_k [psi(k+1)+psi(k+2)] q^k/(k!(k+1)!)
    harmonic = 0.0
    psi_sum = 1.0 - 2.0 * EULER_GAMMA  # psi(1) + psi(2)
    term0 = np.ones_like(x)
    term1 = np.ones_like(x)
    s0 = np.zeros_like(x)
    s1 = psi_sum * term1
    for k in range(1, _MAX_TERMS):
        harmonic += 1.0 / k
        psi_sum += 1.0 / k + 1.0 / (k + 1)
        term0 = term0 * q / (k * k)
        term1 = term1 * q / (k * (k + 1))
        s0 += harmonic * term0
        s1 += psi_sum * term1
        if np.all(term0 * (harmonic + 2.0) < 1e-20):
            break
    k0 = -(log_half + EULER_GAMMA) * i0 + s0
    k1 = 1.0 / x + log_half * i1 - 0.25 * x * s1
    return k0, k1


def _steed_k(x: np.ndarray):
    """Steed's continued fraction (Temme's form) for K0 and K1, for ``x`` above ~1."""
    k0 = np.empty_like(x)
    k1 = np.empty_like(x)
    for n, xv in enumerate(x.flat):
        b = 2.0 * (1.0 + xv)
        d = 1.0 / b
        h = delh = d
        q1, q2 = 0.0, 1.0
        a1 = 0.25
        q = c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, 100000):
            a -= 2 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1, q2 = q2, qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < 1e-17:
                break
        h = a1 * h
        val0 = np.sqrt(np.pi / (2.0 * xv)) * np.exp(-xv) / s
        k0.flat[n] = val0
        k1.flat[n] = val0 * (xv + 0.5 - h) / xv
    return k0, k1


def bessel_I(x):
    """Return ``(I0(x), I1(x))`` for ``x >= 0``.

    Accepts scalars or arrays; scalars give scalars back.
    """
    arr, scalar = _as_array(x)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("bessel_I requires finite x >= 0")
    i0, i1 = _series_i(arr.astype(float).copy())
    if scalar:
        return float(i0), float(i1)
    return i0, i1


def bessel_K(x):
    """Return ``(K0(x), K1(x))`` for ``x > 0``."""
    arr, scalar = _as_array(x)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise DomainError("bessel_K requires finite x > 0")
    flat = arr.reshape(-1)
    k0 = np.empty_like(flat)
    k1 = np.empty_like(flat)
    low = flat <= K_SWITCH
    if np.any(low):
        k0[low], k1[low] = _series_k(flat[low])
    if np.any(~low):
        k0[~low], k1[~low] = _steed_k(flat[~low])
    k0 = k0.reshape(arr.shape)
    k1 = k1.reshape(arr.shape)
    if scalar:
        return float(k0), float(k1)
    return k0, k1


def bessel_k_branches(x: float) -> tuple[float, float]:
    """Evaluate ``K0(x)`` through both branches; used to check their agreement."""
    xv = np.array([float(x)])
    return float(_series_k(xv)[0][0]), float(_steed_k(xv)[0][0])


def i0(x):
    return bessel_I(x)[0]


def i1(x):
    return bessel_I(x)[1]


def k0(x):
    return bessel_K(x)[0]


def k1(x):
    return bessel_K(x)[1]


def bessel(x: float) -> BesselEval:
    """Evaluate all four functions at a single positive argument.

    Raises
    ------
    DomainError
        If ``x <= 0``.
    """
    x = float(x)
    if not x > 0:
        raise DomainError(f"bessel requires x > 0, got {x}")
    a0, a1 = bessel_I(x)
    b0, b1 = bessel_K(x)
    return BesselEval(x=x, I0=a0, I1=a1, K0=b0, K1=b1)


def bessel_wronskian_residual(x: float) -> float:
    """Return ``|I0 K1 + I1 K0 - 1/x| * x``, which vanishes identically."""
    return bessel(x).wronskian_residual()
