"""Finitely supported measures on F_d and Z^k.

A :class:`SparseMeasure` maps group elements (:class:`~entropy_lab.groups.FreeWord`
or :class:`~entropy_lab.groups.LatticePoint`) to strictly positive masses.
Convolution follows ``(mu * nu)(x) = sum_g mu(g) nu(g^-1 x)`` and the left
action on measures is ``(g nu)(x) = nu(g^-1 x)``.
"""

from __future__ import annotations

import json
import math
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ValidationError
from .groups import (
    DEFAULT_BALL_CAP,
    FreeBall,
    FreeWord,
    LatticePoint,
    ball_size,
    code_to_letter,
    format_word,
    letter_to_code,
    parse_word,
)

# masses below this are discarded during convolution
MASS_FLOOR = 1e-300
PROB_TOL = 1e-12


class SparseMeasure:
    """Finitely supported nonnegative measure on a group.

    Zero masses are dropped at construction, so ``len(m)`` is the size of the
    support.  Instances should be treated as immutable.
    """

    __slots__ = ("_mass", "total", "group")

    def __init__(self, masses: Mapping | Iterable = ()):
        items = masses.items() if isinstance(masses, Mapping) else masses
        mass: dict = {}
        group = None
        for x, w in items:
            w = float(w)
            if not w >= 0.0 or math.isinf(w):
                raise ValidationError(f"mass at {x} must be finite and nonnegative, got {w}")
            if group is None:
                group = x.group
            elif x.group != group:
                raise ValidationError(f"mixed groups in measure: {group} vs {x.group}")
            if w > 0.0:
                mass[x] = mass.get(x, 0.0) + w
        self._mass = mass
        self.total = math.fsum(mass.values())
        self.group = group

    @classmethod
    def delta(cls, x, mass: float = 1.0) -> "SparseMeasure":
        return cls({x: mass})

    @classmethod
    def uniform(cls, points: Iterable) -> "SparseMeasure":
        pts = list(points)
        return cls({x: 1.0 / len(pts) for x in pts})

    def __getitem__(self, x) -> float:
        return self._mass.get(x, 0.0)

    def __contains__(self, x) -> bool:
        return x in self._mass

    def __len__(self) -> int:
        return len(self._mass)

    def __iter__(self):
        return iter(self._mass)

    def items(self):
        return self._mass.items()

    def support(self) -> list:
        return sorted(self._mass, key=lambda x: x.sort_key())

    def is_probability(self) -> bool:
        return abs(self.total - 1.0) <= PROB_TOL

    def scaled(self, c: float) -> "SparseMeasure":
        return SparseMeasure({x: c * w for x, w in self._mass.items()})

    def normalized(self) -> "SparseMeasure":
        return self.scaled(1.0 / self.total)

    def __add__(self, other: "SparseMeasure") -> "SparseMeasure":
        out = dict(self._mass)
        for x, w in other.items():
            out[x] = out.get(x, 0.0) + w
        return SparseMeasure(out)

    def pushforward(self, fn: Callable[[Hashable], Hashable]) -> "SparseMeasure":
        out: dict = {}
        for x, w in self._mass.items():
            y = fn(x)
            out[y] = out.get(y, 0.0) + w
        return SparseMeasure(out)

    def radius(self) -> int:
        return max((x.norm() for x in self._mass), default=0)

    def restrict(self, pred: Callable[[Hashable], bool]) -> "SparseMeasure":
        return SparseMeasure({x: w for x, w in self._mass.items() if pred(x)})

    def identity(self):
        if not self._mass:
            raise ValidationError("empty measure has no group")
        return next(iter(self._mass)).identity()

    def __eq__(self, other) -> bool:
        """Exact equality of supports and masses."""
        return isinstance(other, SparseMeasure) and self._mass == other._mass

    __hash__ = None

    def __repr__(self) -> str:
        return f"SparseMeasure(support={len(self)}, total={self.total:.15g})"

    def to_json(self) -> list[dict]:
        out = []
        for x in self.support():
            if isinstance(x, FreeWord):
                out.append({"word": format_word(x), "mass": self._mass[x]})
            else:
                out.append({"point": list(x.coords), "mass": self._mass[x]})
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, data: Sequence[Mapping], rank: int | None = None,
                  modulus: int | None = None) -> "SparseMeasure":
        masses = {}
        for row in data:
            if "word" in row:
                if rank is None:
                    raise ValidationError("rank required to parse free-group words")
                x = parse_word(row["word"], rank)
            elif "point" in row:
                x = LatticePoint(row["point"], modulus)
            else:
                raise ValidationError(f"entry {row} has neither 'word' nor 'point'")
            masses[x] = masses.get(x, 0.0) + float(row["mass"])
        return cls(masses)


class GeneratorMeasure:
    """Probability measure on the generators ``a_{+-1}, ..., a_{+-d}`` of F_d.

    ``p`` is stored in code order ``[p(a1), p(a1'), p(a2), p(a2'), ...]``.
    Passing ``d`` values instead of ``2d`` means a symmetric measure with
    ``p(a_i) = p(a_i') = values[i-1]``.
    """

    def __init__(self, p: Sequence[float], d: int | None = None, sum_tol: float = 1e-9):
        arr = np.asarray(p, dtype=float).ravel()
        if d is None:
            if len(arr) % 2:
                raise ValidationError("give 2d generator masses, or pass d for the symmetric shorthand")
            d = len(arr) // 2
        if len(arr) == d:
            arr = np.repeat(arr, 2)
        if len(arr) != 2 * d:
            raise ValidationError(f"expected {d} or {2 * d} masses for rank {d}, got {len(arr)}")
        if d < 1:
            raise ValidationError("rank must be positive")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValidationError("generator masses must be strictly positive")
        s = arr.sum()
        if abs(s - 1.0) > sum_tol:
            raise ValidationError(f"generator masses sum to {s!r}, not 1")
        self.d = d
        self.p = arr / s
        self.p.setflags(write=False)

    @classmethod
    def uniform(cls, d: int) -> "GeneratorMeasure":
        return cls(np.full(2 * d, 1.0 / (2 * d)), d)

    @classmethod
    def symmetric(cls, half: Sequence[float]) -> "GeneratorMeasure":
        """Symmetric measure from ``(p(a_{+-1}), ..., p(a_{+-d}))``."""
        return cls(np.asarray(half, float), len(half))

    @property
    def symmetric_flag(self) -> bool:
        return bool(np.all(self.p[0::2] == self.p[1::2]))

    def is_symmetric(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.p[0::2] - self.p[1::2]) <= tol))

    def half(self) -> np.ndarray:
        """Masses of ``a_1, ..., a_d`` (one side of a symmetric measure)."""
        return self.p[0::2].copy()

    def mass(self, letter: int) -> float:
        return float(self.p[letter_to_code(letter)])

    def as_measure(self) -> SparseMeasure:
        return SparseMeasure({FreeWord._trusted((code_to_letter(c),), self.d): float(w)
                              for c, w in enumerate(self.p)})

    def __eq__(self, other) -> bool:
        return isinstance(other, GeneratorMeasure) and self.d == other.d and np.array_equal(self.p, other.p)

    def __repr__(self) -> str:
        return f"GeneratorMeasure(d={self.d}, p={self.p.tolist()})"


def _check_same_group(mu: SparseMeasure, nu: SparseMeasure) -> None:
    if mu.group is not None and nu.group is not None and mu.group != nu.group:
        raise ValidationError(f"group mismatch: {mu.group} vs {nu.group}")


def convolve(mu: SparseMeasure, nu: SparseMeasure) -> SparseMeasure:
    """``(mu * nu)(x) = sum_g mu(g) nu(g^-1 x)``; total masses multiply."""
    _check_same_group(mu, nu)
    out: dict = {}
    if len(mu) <= len(nu):
        for g, wg in mu.items():
            for h, wh in nu.items():
                x = g * h
                out[x] = out.get(x, 0.0) + wg * wh
    else:
        for h, wh in nu.items():
            for g, wg in mu.items():
                x = g * h
                out[x] = out.get(x, 0.0) + wg * wh
    return SparseMeasure({x: w for x, w in out.items() if w >= MASS_FLOOR})


def convolve_power(mu: SparseMeasure, n: int, cap: int = DEFAULT_BALL_CAP) -> SparseMeasure:
    """n-fold convolution power; ``n = 0`` gives the point mass at the identity."""
    if n < 0:
        raise ValidationError("n must be >= 0")
    result = SparseMeasure.delta(mu.identity())
    if n and mu.group[0] == "free":
        size = ball_size(mu.group[1], n * mu.radius())
        if size > cap:
            raise CapacityError(f"support of the {n}-th power may reach {size} words (cap {cap})")
    for _ in range(n):
        result = convolve(result, mu)
    return result


def translate(g, nu: SparseMeasure) -> SparseMeasure:
    """Left translate ``(g nu)(x) = nu(g^-1 x)``: the mass at y moves to g y."""
    return SparseMeasure({g * y: w for y, w in nu.items()})


def tv_distance(m: SparseMeasure, nu: SparseMeasure) -> float:
    """l1 distance ``sum_x |m(x) - nu(x)|``."""
    _check_same_group(m, nu)
    keys = set(m) | set(nu)
    return math.fsum(abs(m[x] - nu[x]) for x in keys)


def shannon_entropy(kappa: SparseMeasure) -> float:
    if not kappa.is_probability():
        raise ValidationError(f"entropy needs a probability measure (total {kappa.total})")
    return max(0.0, -math.fsum(w * math.log(w) for _, w in kappa.items()))


def abel_truncation_index(a: float, eps: float) -> int:
    """Smallest N with ``a**(N+1) <= eps``."""
    if not 0.0 < a < 1.0:
        raise ValidationError(f"a must lie in (0, 1), got {a}")
    if not eps > 0.0:
        raise ValidationError("eps must be positive")
    if eps >= a:
        return 0
    n = max(0, math.ceil(math.log(eps) / math.log(a)) - 1)
    while a ** (n + 1) > eps:
        n += 1
    while n > 0 and a ** n <= eps:
        n -= 1
    return n


def abel_sum_truncated(mu: SparseMeasure, a: float, eps: float, radius: int | None = None,
                       cap: int = DEFAULT_BALL_CAP) -> SparseMeasure:
    """Truncated Abel sum ``(1-a) sum_{n<=N} a^n mu^{*n}`` with tail ``a^(N+1) <= eps``.

    With ``radius`` given, only the part of the sum supported on elements of
    norm <= radius is returned.  Intermediate powers are then pruned at norm
    ``radius + (N - n)``; mass beyond that can not come back inside the
    window within the remaining steps, provided ``mu`` is supported on
    elements of norm <= 1.  The returned masses on the window are therefore
    exactly those of the full truncated sum.
    """
    if not mu.is_probability():
        raise ValidationError("abel sums need a probability measure")
    N = abel_truncation_index(a, eps)
    step = mu.radius()
    window = N * step if radius is None else radius
    if radius is not None and step > 1:
        raise ValidationError("windowed abel sums need a measure supported on norm <= 1")
    if mu.group[0] == "free" and step <= 1:
        return _abel_free_dense(mu, a, N, window, cap)
    if mu.group[0] == "free":
        size = ball_size(mu.group[1], window)
        if size > cap:
            raise CapacityError(f"abel sum support may reach {size} words (cap {cap}); "
                                "use the closed form in entropy_lab.green")
    e = mu.identity()
    acc: dict = {}
    power = SparseMeasure.delta(e)
    for n in range(N + 1):
        coef = (1.0 - a) * a ** n
        for x, w in power.items():
            if x.norm() <= window:
                acc[x] = acc.get(x, 0.0) + coef * w
        if n < N:
            power = convolve(power, mu)
            if radius is not None:
                keep = radius + (N - n - 1)
                power = power.restrict(lambda x: x.norm() <= keep)
    return SparseMeasure(acc)


def _abel_free_dense(mu: SparseMeasure, a: float, N: int, window: int, cap: int) -> SparseMeasure:
    d = mu.group[1]
    peak = max(min(n, window + N - n) for n in range(N + 1))
    ball = FreeBall(d, max(peak, window), cap=cap)
    codes = []
    hold = 0.0
    for x, w in mu.items():
        if x.is_identity():
            hold = w
        else:
            codes.append((letter_to_code(x.letters[0]), w))
    power = np.zeros(ball.size)
    power[0] = 1.0
    acc = np.zeros(ball.size)
    win = int(ball.offsets[window + 1])
    for n in range(N + 1):
        acc[:win] += (1.0 - a) * a ** n * power[:win]
        if n == N:
            break
        keep = min(n + 1, window + N - n - 1)
        top = int(ball.offsets[min(n, window + N - n) + 1])
        new = hold * power
        src = power[:top]
        for c, w in codes:
            dst = ball.right[:top, c]
            ok = dst >= 0
            new[dst[ok]] += w * src[ok]
        new[int(ball.offsets[keep + 1]):] = 0.0
        new[new < MASS_FLOOR] = 0.0
        power = new
    words = ball.words() if window == ball.radius else None
    nz = np.flatnonzero(acc[:win])
    if words is None:
        sub = FreeBall(d, window)
        words = sub.words()
    return SparseMeasure({words[i]: float(acc[i]) for i in nz})
