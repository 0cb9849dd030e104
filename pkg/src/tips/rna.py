"""RNA secondary-structure folding kinetics.

States are pseudoknot-free secondary structures, stored as sorted tuples of
``(i, j)`` base pairs. Moves add or remove one pair. Rates follow the
Kawasaki rule ``exp((E(x) - E(x')) / (d * kT))`` with ``d = 1`` by default
(``d = 2`` gives the textbook symmetric variant).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import CtmcModel
from .proposal import Potential

PAIRS = frozenset({("C", "G"), ("G", "C"), ("A", "U"), ("U", "A"), ("G", "U"), ("U", "G")})
UNFOLDED: tuple = ()


@dataclass(frozen=True)
class RnaModelParams:
    energy_per_pair: float = 1.0
    kT_scale: float = 1.0
    hairpin_min: int = 3
    kawasaki_divisor: float = 1.0

    def __post_init__(self):
        if self.energy_per_pair <= 0 or self.kT_scale <= 0:
            raise ValueError("energy_per_pair and kT_scale must be positive")
        if self.hairpin_min < 0:
            raise ValueError("hairpin_min must be nonnegative")
        if self.kawasaki_divisor not in (1.0, 2.0):
            raise ValueError("kawasaki_divisor is 1 or 2")


def check_sequence(seq: str) -> str:
    seq = seq.strip().upper()
    if set(seq) - set("ACGU"):
        raise ValueError(f"RNA sequence has characters outside ACGU: {seq!r}")
    return seq


def parse_dot_bracket(text: str) -> tuple:
    stack, pairs = [], []
    for k, c in enumerate(text.strip()):
        if c == "(":
            stack.append(k)
        elif c == ")":
            if not stack:
                raise ValueError(f"unbalanced dot-bracket {text!r}")
            pairs.append((stack.pop(), k))
        elif c != ".":
            raise ValueError(f"bad dot-bracket character {c!r}")
    if stack:
        raise ValueError(f"unbalanced dot-bracket {text!r}")
    return tuple(sorted(pairs))


def to_dot_bracket(structure, length: int) -> str:
    chars = ["."] * length
    for i, j in structure:
        chars[i], chars[j] = "(", ")"
    return "".join(chars)


def crosses(a, b) -> bool:
    (i, j), (k, l) = a, b
    return i < k < j < l or k < i < l < j


def is_valid_structure(seq: str, structure, hairpin_min: int = 3) -> bool:
    used = set()
    for i, j in structure:
        if not (0 <= i < j < len(seq)) or i in used or j in used:
            return False
        used.update((i, j))
        if (seq[i], seq[j]) not in PAIRS or j - i - 1 < hairpin_min:
            return False
    return not any(crosses(a, b) for a in structure for b in structure if a < b)


def pair_energy(params: RnaModelParams, structure) -> float:
    return -params.energy_per_pair * len(structure)


def kawasaki_rate(params: RnaModelParams, energy_from: float, energy_to: float) -> float:
    return math.exp((energy_from - energy_to) / (params.kawasaki_divisor * params.kT_scale))


def hamming_potential(x, y) -> int:
    """Size of the symmetric difference of two pair sets."""
    return len(set(x).symmetric_difference(y))


def rna_tuning_schedule(horizon: float) -> tuple[float, float]:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return 2.0 / 3.0, max(0.25, 1.0 - horizon / 16.0)


class RnaModel(CtmcModel):
    """Folding CTMC for one sequence.

    ``energy`` overrides the pair-counting energy. ``allowed`` restricts the
    chain to an explicit set of structures; moves leaving the set are
    dropped.
    """

    def __init__(self, sequence: str, params: RnaModelParams = RnaModelParams(),
                 energy=None, allowed=None):
        super().__init__()
        self.sequence = check_sequence(sequence)
        self.params = params
        self._energy = energy
        self.allowed = None if allowed is None else frozenset(tuple(sorted(s)) for s in allowed)
        n = len(self.sequence)
        self.candidates = [(i, j) for i in range(n) for j in range(i + params.hairpin_min + 1, n)
                           if (self.sequence[i], self.sequence[j]) in PAIRS]
        self._rates: dict = {}

    def __getstate__(self):
        state = super().__getstate__()
        state["_rates"] = {}
        return state

    def energy(self, structure) -> float:
        if self._energy is not None:
            return self._energy(structure)
        return pair_energy(self.params, structure)

    def moves(self, structure) -> list:
        """Structures one pair away: all valid additions, then all removals."""
        used = {k for p in structure for k in p}
        out = []
        for cand in self.candidates:
            if cand[0] in used or cand[1] in used:
                continue
            if any(crosses(cand, p) for p in structure):
                continue
            out.append(tuple(sorted(structure + (cand,))))
        for p in structure:
            out.append(tuple(q for q in structure if q != p))
        if self.allowed is not None:
            out = [s for s in out if s in self.allowed]
        return out

    def _move_rates(self, x):
        e = self.energy(x)
        return [(y, kawasaki_rate(self.params, e, self.energy(y))) for y in self.moves(x)]

    def rate(self, x) -> float:
        lam = self._rates.get(x)
        if lam is None:
            lam = math.fsum(r for _, r in self._move_rates(x))
            self._rates[x] = lam
        return lam

    def _compute_neighbors(self, x):
        rates = self._move_rates(x)
        lam = math.fsum(r for _, r in rates)
        self._rates[x] = lam
        return [(y, r / lam) for y, r in rates]

    def render(self, x) -> str:
        return to_dot_bracket(x, len(self.sequence))

    def parse(self, text):
        s = parse_dot_bracket(text)
        if len(text.strip()) != len(self.sequence) or not is_valid_structure(
                self.sequence, s, self.params.hairpin_min):
            raise ValueError(f"{text!r} is not a valid structure for {self.sequence}")
        return s


def hamming() -> Potential:
    return Potential(hamming_potential)


def full_state_space(model: RnaModel) -> list:
    from .oracle import enumerate_reachable
    return enumerate_reachable(model, UNFOLDED).states


def minimum_energy_structures(model: RnaModel) -> list:
    states = full_state_space(model)
    best = min(model.energy(s) for s in states)
    return sorted(s for s in states if model.energy(s) == best)


def read_subset(path) -> list:
    """Structures listed one dot-bracket per line; blank lines and ``#`` comments skipped."""
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(parse_dot_bracket(line))
    return out
