"""DNA string evolution with substitutions, point indels and slipped-strand mispairing.

Holding rate::

    lambda(x) = m*theta_sub + lambda_pt + m*mu_pt + lambda_ssm + k(x)*mu_ssm

with ``m`` the length and ``k`` the number of SSM deletion locations. Global
rates (point and SSM insertion) are split uniformly over their candidate
moves; per-site rates apply to each site. Moves giving the same string are
merged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import CtmcModel, TargetSet
from .proposal import Potential

ALPHABET = "ACGT"


@dataclass(frozen=True)
class StringModelParams:
    theta_sub: float = 0.03
    lambda_pt: float = 0.05
    mu_pt: float = 0.2
    lambda_ssm: float = 2.0
    mu_ssm: float = 2.0
    ssm_max_len: int = 3

    def __post_init__(self):
        for name in ("theta_sub", "lambda_pt", "mu_pt", "lambda_ssm", "mu_ssm"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and nonnegative")
        if self.ssm_max_len < 1:
            raise ValueError("ssm_max_len must be >= 1")


def check_string(x: str) -> str:
    x = x.strip().upper()
    if set(x) - set(ALPHABET):
        raise ValueError(f"DNA string has characters outside ACGT: {x!r}")
    return x


def ssm_deletion_sites(x: str, max_len: int = 3) -> list:
    """``(j, L)`` with ``x[j:j+L] == x[j-L:j]``: a block right after an identical copy."""
    m = len(x)
    return [(j, n) for n in range(1, max_len + 1) for j in range(n, m - n + 1)
            if x[j:j + n] == x[j - n:j]]


def ssm_deletion_count(x: str, ssm_max_len: int = 3) -> int:
    return len(ssm_deletion_sites(x, ssm_max_len))


def ssm_insertion_sites(x: str, max_len: int = 3) -> list:
    """``(j, L)``: copy ``x[j-L:j]`` and insert it at ``j``."""
    return [(j, n) for j in range(1, len(x) + 1) for n in range(1, min(max_len, j) + 1)]


@lru_cache(maxsize=1 << 18)
def _deletion_count_cached(x: str, max_len: int) -> int:
    return ssm_deletion_count(x, max_len)


def string_rate(params: StringModelParams, x: str) -> float:
    m = len(x)
    k = _deletion_count_cached(x, params.ssm_max_len)
    return m * params.theta_sub + params.lambda_pt + m * params.mu_pt + params.lambda_ssm + k * params.mu_ssm


def exit_rate(params: StringModelParams, x: str) -> float:
    """Holding rate of the jump process: ``string_rate`` minus self-loop mass.

    The empty string has no block to copy, so its SSM insertion rate never
    moves the chain.
    """
    lam = string_rate(params, x)
    return lam - params.lambda_ssm if not x else lam


@lru_cache(maxsize=1 << 18)
def _move_classes(x: str, max_len: int) -> dict:
    m = len(x)
    return {
        "sub": tuple(x[:i] + c + x[i + 1:] for i in range(m) for c in ALPHABET if c != x[i]),
        "ins": tuple(x[:i] + c + x[i:] for i in range(m + 1) for c in ALPHABET),
        "del": tuple(x[:i] + x[i + 1:] for i in range(m)),
        "ssm_ins": tuple(x[:j] + x[j - n:j] + x[j:] for j, n in ssm_insertion_sites(x, max_len)),
        "ssm_del": tuple(x[:j] + x[j + n:] for j, n in ssm_deletion_sites(x, max_len)),
    }


def string_moves(params: StringModelParams, x: str) -> list:
    """Unmerged ``(class, result, rate)`` for every elementary move."""
    classes = _move_classes(x, params.ssm_max_len)
    unit = {
        "sub": params.theta_sub / 3.0,
        "ins": params.lambda_pt / (4 * (len(x) + 1)),
        "del": params.mu_pt,
        "ssm_ins": params.lambda_ssm / len(classes["ssm_ins"]) if classes["ssm_ins"] else 0.0,
        "ssm_del": params.mu_ssm,
    }
    return [(name, y, unit[name]) for name, ys in classes.items() for y in ys if unit[name] > 0]


_CLASSES = ("sub", "ins", "del", "ssm_ins", "ssm_del")


@lru_cache(maxsize=1 << 18)
def _neighbor_structure(x: str, max_len: int):
    """Sorted distinct results of all moves from ``x`` and, per result, move counts by class."""
    classes = _move_classes(x, max_len)
    counts: dict = {}
    for c, name in enumerate(_CLASSES):
        for y in classes[name]:
            if y != x:
                counts.setdefault(y, [0] * len(_CLASSES))[c] += 1
    states = tuple(sorted(counts))
    matrix = np.array([counts[y] for y in states], dtype=float).reshape(len(states), len(_CLASSES))
    return states, matrix, len(classes["ssm_ins"])


def _kernel_arrays(params: StringModelParams, x: str):
    states, matrix, n_ssm_ins = _neighbor_structure(x, params.ssm_max_len)
    if not states:
        return (), np.zeros(0)
    unit = np.array([
        params.theta_sub / 3.0,
        params.lambda_pt / (4 * (len(x) + 1)),
        params.mu_pt,
        params.lambda_ssm / n_ssm_ins if n_ssm_ins else 0.0,
        params.mu_ssm,
    ])
    rates = matrix @ unit
    total = rates.sum()
    if total <= 0:
        return (), np.zeros(0)
    if not rates.all():
        keep = rates > 0
        states = tuple(y for y, k in zip(states, keep) if k)
        rates = rates[keep]
    return states, rates / total


def string_neighbors(params: StringModelParams, x: str) -> list:
    """Jump kernel from ``x`` as ``(string, probability)`` pairs, sorted by string."""
    states, probs = _kernel_arrays(params, x)
    return list(zip(states, probs.tolist()))


@lru_cache(maxsize=1 << 20)
def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (Hyyro's bit-vector form of Myers' algorithm)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    peq: dict = {}
    for i, c in enumerate(a):
        peq[c] = peq.get(c, 0) | (1 << i)
    m = len(a)
    mask = (1 << m) - 1
    last = 1 << (m - 1)
    pv, mv, score = mask, 0, m
    for c in b:
        eq = peq.get(c, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & last:
            score += 1
        elif mh & last:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


def levenshtein_dp(a: str, b: str) -> int:
    """Textbook dynamic program; kept as a reference for the bit-vector version."""
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_potential(x: str, y: str) -> int:
    return levenshtein(x, y)


def _next_rows(rows: np.ndarray, chars: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Edit-distance rows after appending one character to each prefix.

    ``rows[..., j]`` is the distance from some prefix u to ``t[:j]``; the
    result holds the distances from ``u + c`` with ``c`` broadcast from
    ``chars``. The in-row recursion ``F[j] = min(base[j], F[j-1] + 1)`` is
    a running minimum after subtracting ``j``.
    """
    n = t.shape[0]
    ar = np.arange(n + 1)
    base = np.empty(np.broadcast_shapes(rows.shape, chars.shape[:-1] + (n + 1,)), dtype=np.int64)
    base[..., 0] = rows[..., 0] + 1
    base[..., 1:] = np.minimum(rows[..., 1:] + 1, rows[..., :-1] + (chars != t))
    return np.minimum.accumulate(base - ar, axis=-1) + ar


def _prefix_table(x: str, t: str) -> np.ndarray:
    """``d[i, j]`` = distance between ``x[:i]`` and ``t[:j]``."""
    prev = list(range(len(t) + 1))
    rows = [prev]
    for i, cx in enumerate(x, 1):
        cur = [i]
        for j, ct in enumerate(t, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (cx != ct)))
        rows.append(cur)
        prev = cur
    return np.array(rows, dtype=np.int64)


_CODES = np.frombuffer(ALPHABET.encode(), dtype=np.uint8).reshape(4, 1)


def point_edit_distances(x: str, t: str) -> dict:
    """Distance to ``t`` of every string one substitution, insertion or deletion from ``x``.

    Uses the split identity d(u + v, t) = min_j d(u, t[:j]) + d(v, t[j:])
    with prefix and suffix tables, so all 9m + 4 neighbors cost about two
    dynamic programs.
    """
    m = len(x)
    ta = np.frombuffer(t.encode(), dtype=np.uint8)
    pre = _prefix_table(x, t)
    suf = _prefix_table(x[::-1], t[::-1])[::-1, ::-1]  # suf[i, j] = d(x[i:], t[j:])
    out = {}
    if m:
        dels = (pre[:-1] + suf[1:]).min(axis=1)
        for i in range(m):
            out[x[:i] + x[i + 1:]] = int(dels[i])
    grown = _next_rows(pre[:, None, :], _CODES, ta)  # (m+1, 4, n+1): x[:i] + c vs t[:j]
    ins = (grown + suf[:, None, :]).min(axis=2)
    for i in range(m + 1):
        for c, ch in enumerate(ALPHABET):
            out[x[:i] + ch + x[i:]] = int(ins[i, c])
    if m:
        subs = (grown[:-1] + suf[1:, None, :]).min(axis=2)
        for i in range(m):
            for c, ch in enumerate(ALPHABET):
                if ch != x[i]:
                    out[x[:i] + ch + x[i + 1:]] = int(subs[i, c])
    return out


class LevenshteinPotential(Potential):
    """Levenshtein guidance with batched evaluation over point-edit neighborhoods."""

    def __init__(self):
        super().__init__(levenshtein_potential)

    def decreasing_mask(self, x, target, states) -> np.ndarray:
        key = (x, target)
        hit = self._masks.get(key)
        if hit is not None and (hit[0] is states or hit[0] == states):
            return hit[1]
        targets = target if isinstance(target, TargetSet) else (target,)
        best: dict = {}
        for y in targets:
            for s, d in point_edit_distances(x, y).items():
                if d < best.get(s, d + 1):
                    best[s] = d
        memo = self._memo
        if len(memo) + len(best) >= self.memo_limit:
            memo.clear()
        for s, d in best.items():
            memo.setdefault((s, target), d)
        rho = self(x, target)
        mask = np.fromiter((self(s, target) < rho for s in states), dtype=bool, count=len(states))
        if len(self._masks) >= self.memo_limit:
            self._masks.clear()
        self._masks[key] = (states, mask)
        return mask


def levenshtein_guide() -> Potential:
    return LevenshteinPotential()


def stationary_string_pmf(params: StringModelParams, x: str) -> float:
    """Poisson(lambda_pt / mu_pt) length times uniform characters.

    Only defined for the point-indel submodel (no SSM moves).
    """
    if params.lambda_ssm != 0 or params.mu_ssm != 0:
        raise NotImplementedError("stationary pmf needs lambda_ssm = mu_ssm = 0")
    if params.mu_pt <= 0:
        raise NotImplementedError("stationary pmf needs mu_pt > 0")
    return math.exp(log_stationary_string_pmf(params, x))


def log_stationary_string_pmf(params: StringModelParams, x: str) -> float:
    if params.lambda_ssm != 0 or params.mu_ssm != 0 or params.mu_pt <= 0:
        raise NotImplementedError("stationary pmf needs lambda_ssm = mu_ssm = 0 and mu_pt > 0")
    m = len(x)
    mean = params.lambda_pt / params.mu_pt
    log_len = -mean + (m * math.log(mean) if m else 0.0) - math.lgamma(m + 1)
    return log_len - m * math.log(4.0)


def sample_stationary_string(params: StringModelParams, gen: np.random.Generator) -> str:
    mean = params.lambda_pt / params.mu_pt
    m = int(gen.poisson(mean))
    return "".join(ALPHABET[i] for i in gen.integers(0, 4, size=m))


class StringModel(CtmcModel):
    def __init__(self, params: StringModelParams = StringModelParams()):
        super().__init__()
        self.params = params

    def rate(self, x) -> float:
        return exit_rate(self.params, x)

    def _compute_neighbors(self, x):
        return string_neighbors(self.params, x)

    def neighbor_arrays(self, x):
        entry = self._array_cache.get(x)
        if entry is None:
            entry = self._array_cache[x] = _kernel_arrays(self.params, x)
        return entry

    @property
    def has_stationary(self):
        p = self.params
        return p.lambda_ssm == 0 and p.mu_ssm == 0 and p.mu_pt > 0

    def stationary(self, x) -> float:
        return stationary_string_pmf(self.params, x)

    def log_stationary(self, x) -> float:
        return log_stationary_string_pmf(self.params, x)

    def parse(self, text):
        return check_string(text)
