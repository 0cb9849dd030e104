"""Holding-time marginalization for a fixed jump chain.

Given the holding rates along a path, the probability that the chain is
still sitting in the last state of the path at time ``T`` is the
``(0, n-1)`` entry of ``expm(T * Q)`` where ``Q`` is the pure-birth
generator built by :func:`build_auxiliary_matrix`.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np


class NumericalWarning(UserWarning):
    """Raised (as a warning) when a probability has to be clamped."""


CLAMP_TOLERANCE = 1e-9

# Higham (2005) Pade coefficients and backward-error thresholds.
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def build_auxiliary_matrix(rates) -> np.ndarray:
    """Pure-birth generator on ``len(rates) + 1`` states.

    Row ``i`` has ``-rates[i]`` on the diagonal and ``+rates[i]`` just to the
    right of it; the last row is all zero.
    """
    lam = np.asarray(rates, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ValueError("rates must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("rates must be finite and nonnegative")
    n = lam.size
    q = np.zeros((n + 1, n + 1))
    idx = np.arange(n)
    q[idx, idx] = -lam
    q[idx, idx + 1] = lam
    return q


def _pade(a: np.ndarray, m: int, ident: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE[m]
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
        return u, v
    powers = [ident, a2]
    for _ in range(2, m // 2 + 1):
        powers.append(powers[-1] @ a2)
    u = a @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
    v = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return u, v


def matrix_exponential(m) -> np.ndarray:
    """Scaling-and-squaring with a Pade approximant of degree at most 13.

    For upper-triangular input the scaling parameter is additionally raised
    until ``2**s`` exceeds the bandwidth of the matrix. The high-order
    superdiagonals of a single Pade factor are inaccurate in the relative
    sense; after enough squarings every entry of the result is assembled
    from well-resolved low-order terms, so tiny entries keep their relative
    accuracy.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix_exponential needs a square matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    n = a.shape[0]
    ident = np.eye(n)
    if n == 0:
        return ident
    if not a.any():
        return ident

    norm = np.linalg.norm(a, 1)
    triangular = not np.tril(a, -1).any()
    min_s = max(0, math.ceil(math.log2(n))) + 1 if triangular and n > 1 else 0

    if min_s == 0:
        for deg in (3, 5, 7, 9):
            if norm <= _THETA[deg]:
                u, v = _pade(a, deg, ident)
                return np.linalg.solve(v - u, v + u)

    s = max(min_s, math.ceil(math.log2(norm / _THETA[13])) if norm > _THETA[13] else 0)
    a = a / 2.0 ** s
    u, v = _pade(a, 13, ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def _clamp(value: float) -> float:
    if value < 0.0 or value > 1.0:
        excess = -value if value < 0.0 else value - 1.0
        if excess > CLAMP_TOLERANCE:
            warnings.warn(
                f"timing probability {value!r} clamped to [0, 1]",
                NumericalWarning,
                stacklevel=3,
            )
        return min(max(value, 0.0), 1.0)
    return value


@lru_cache(maxsize=1 << 16)
def _timing_cached(rates: tuple, horizon: float) -> float:
    q = build_auxiliary_matrix(rates)
    n = len(rates)
    return float(matrix_exponential(horizon * q)[0, n - 1])


def timing_probability(rates, horizon: float) -> float:
    """P(H_1 + ... + H_{n-1} <= T < H_1 + ... + H_n) for exponential H_i.

    ``rates[i]`` is the rate of ``H_{i+1}``. A zero final rate means the
    last state is absorbing, in which case this is ``P(H_1 + ... + H_{n-1} <= T)``.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    key = tuple(float(r) for r in rates)
    if not key:
        raise ValueError("rates must be nonempty")
    if any(r < 0 or not math.isfinite(r) for r in key):
        raise ValueError("rates must be finite and nonnegative")
    if horizon == 0:
        return 1.0 if len(key) == 1 else 0.0
    return _clamp(_timing_cached(key, float(horizon)))


def log_timing_probability(rates, horizon: float) -> float:
    p = timing_probability(rates, horizon)
    return math.log(p) if p > 0.0 else -math.inf


def hypoexponential_band_oracle(rates, horizon: float, digits: int = 40) -> float:
    """Closed-form P(S_{n-1} <= T < S_n) for pairwise distinct rates.

    Uses ``F_m(T) = 1 - sum_i prod_{j != i} l_j / (l_j - l_i) exp(-l_i T)``.
    The partial-fraction coefficients grow without bound as rates get close,
    so the sum is evaluated in multiprecision, raising the working precision
    until two successive evaluations agree.
    """
    import mpmath

    lam = [float(r) for r in rates]
    if not lam:
        raise ValueError("rates must be nonempty")
    if any(r <= 0 for r in lam):
        raise ValueError("rates must be positive")
    if len(set(lam)) != len(lam):
        raise ValueError("rates must be pairwise distinct")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")

    def band(dps: int):
        with mpmath.workdps(dps):
            ls = [mpmath.mpf(r) for r in lam]
            t = mpmath.mpf(horizon)

            def cdf(m):
                if m == 0:
                    return mpmath.mpf(1)
                total = mpmath.mpf(0)
                for i in range(m):
                    coef = mpmath.mpf(1)
                    for j in range(m):
                        if j != i:
                            coef *= ls[j] / (ls[j] - ls[i])
                    total += coef * mpmath.exp(-ls[i] * t)
                return 1 - total

            return cdf(len(ls) - 1) - cdf(len(ls))

    dps = digits
    previous = band(dps)
    while True:
        dps *= 2
        current = band(dps)
        if abs(current - previous) <= mpmath.mpf(10) ** (-digits // 2) * max(abs(current), mpmath.mpf(10) ** -300):
            return float(current)
        if dps > 2000:
            raise ArithmeticError("hypoexponential oracle failed to converge")
        previous = current
