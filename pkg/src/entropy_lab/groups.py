"""Exact group arithmetic: reduced words in the free group F_d and points of Z^k.

Letters of a free word are nonzero signed integers; ``i`` stands for the
generator ``a_i`` and ``-i`` for its inverse.  The identity is the empty word.

Internally, letters are also addressed by a *code* in ``range(2*d)``::

    code 0 -> a1, code 1 -> a1', code 2 -> a2, code 3 -> a2', ...

so that the inverse of a letter with code ``c`` has code ``c ^ 1``.  Every
vector indexed by generators (walk measures, hitting probabilities, cylinder
masses) uses this order.
"""

from __future__ import annotations

import re
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import CapacityError, ValidationError

DEFAULT_BALL_CAP = 10**8


def letter_to_code(letter: int) -> int:
    return 2 * (abs(letter) - 1) + (letter < 0)


def code_to_letter(code: int) -> int:
    return (code // 2 + 1) * (-1 if code % 2 else 1)


def letter_order(d: int) -> list[int]:
    """Generators in canonical order: ``[1, -1, 2, -2, ..., d, -d]``."""
    return [code_to_letter(c) for c in range(2 * d)]


def _lex_key(letter: int) -> tuple[int, bool]:
    return (abs(letter), letter < 0)


class FreeWord:
    """A reduced word in the free group of rank ``rank``.

    Instances are immutable and hashable.  The constructor checks that the
    letters are in range and already reduced; use :func:`reduce_letters` or
    :func:`parse_word` to build a word from an unreduced sequence.
    """

    __slots__ = ("letters", "rank")

    letters: tuple[int, ...]
    rank: int

    def __init__(self, letters: Iterable[int] = (), rank: int = 2):
        letters = tuple(int(x) for x in letters)
        if rank < 1:
            raise ValidationError(f"rank must be positive, got {rank}")
        prev = 0
        for x in letters:
            if x == 0 or abs(x) > rank:
                raise ValidationError(f"letter {x} out of range for rank {rank}")
            if x == -prev:
                raise ValidationError(f"word {letters} is not reduced")
            prev = x
        object.__setattr__(self, "letters", letters)
        object.__setattr__(self, "rank", rank)

    @classmethod
    def _trusted(cls, letters: tuple[int, ...], rank: int) -> "FreeWord":
        # skips validation; callers guarantee a reduced, in-range tuple
        w = object.__new__(cls)
        object.__setattr__(w, "letters", letters)
        object.__setattr__(w, "rank", rank)
        return w

    @classmethod
    def identity_of(cls, rank: int) -> "FreeWord":
        return cls._trusted((), rank)

    @classmethod
    def generator(cls, letter: int, rank: int) -> "FreeWord":
        return cls((letter,), rank)

    def __setattr__(self, name, value):
        raise AttributeError("FreeWord is immutable")

    def identity(self) -> "FreeWord":
        return FreeWord._trusted((), self.rank)

    def is_identity(self) -> bool:
        return not self.letters

    @property
    def group(self) -> tuple:
        return ("free", self.rank)

    def norm(self) -> int:
        """Word length |w|."""
        return len(self.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __iter__(self) -> Iterator[int]:
        return iter(self.letters)

    def __mul__(self, other: "FreeWord") -> "FreeWord":
        return reduce_concat(self, other)

    def inverse(self) -> "FreeWord":
        return invert(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FreeWord):
            return NotImplemented
        return self.rank == other.rank and self.letters == other.letters

    def __hash__(self) -> int:
        return hash((self.rank, self.letters))

    def sort_key(self) -> tuple:
        return (len(self.letters), tuple(_lex_key(x) for x in self.letters))

    def __lt__(self, other: "FreeWord") -> bool:
        return self.sort_key() < other.sort_key()

    def __repr__(self) -> str:
        return f"FreeWord({format_word(self)!r}, rank={self.rank})"

    def __str__(self) -> str:
        return format_word(self)

    def __reduce__(self):
        return (FreeWord, (self.letters, self.rank))


def reduce_letters(letters: Iterable[int], rank: int) -> FreeWord:
    """Free reduction of an arbitrary letter sequence."""
    out: list[int] = []
    for x in letters:
        x = int(x)
        if x == 0 or abs(x) > rank:
            raise ValidationError(f"letter {x} out of range for rank {rank}")
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return FreeWord._trusted(tuple(out), rank)


def reduce_concat(w1: FreeWord, w2: FreeWord) -> FreeWord:
    """Reduced form of the concatenation ``w1 w2`` (the group law)."""
    if w1.rank != w2.rank:
        raise ValidationError(f"rank mismatch: {w1.rank} vs {w2.rank}")
    a, b = w1.letters, w2.letters
    k = 0
    n = min(len(a), len(b))
    while k < n and a[len(a) - 1 - k] == -b[k]:
        k += 1
    return FreeWord._trusted(a[: len(a) - k] + b[k:], w1.rank)


def invert(w: FreeWord) -> FreeWord:
    return FreeWord._trusted(tuple(-x for x in reversed(w.letters)), w.rank)


def sphere_size(d: int, k: int) -> int:
    """Number of reduced words of length exactly ``k`` in F_d."""
    if k < 0:
        raise ValidationError("k must be nonnegative")
    return 1 if k == 0 else 2 * d * (2 * d - 1) ** (k - 1)


def ball_size(d: int, R: int) -> int:
    return sum(sphere_size(d, k) for k in range(R + 1))


def enumerate_ball(d: int, R: int, cap: int = DEFAULT_BALL_CAP) -> list[FreeWord]:
    """All reduced words of length <= R, ordered by length and then lexicographically.

    Letters compare in the order a1 < a1' < a2 < a2' < ...
    """
    if d < 2:
        raise ValidationError("free group rank must be >= 2")
    if R < 0:
        raise ValidationError("radius must be >= 0")
    count = ball_size(d, R)
    if count > cap:
        raise CapacityError(f"ball of radius {R} in F_{d} has {count} words (cap {cap})")
    return FreeBall(d, R, cap=cap).words()


_TOKEN = re.compile(r"^a(\d+)('?)$")


def parse_word(text: str, rank: int) -> FreeWord:
    """Parse ``"a1.a2'.a1"`` (apostrophe = inverse, ``"e"`` = identity) and reduce."""
    s = text.strip()
    if s in ("e", ""):
        return FreeWord.identity_of(rank)
    letters = []
    for tok in s.split("."):
        m = _TOKEN.match(tok.strip())
        if m is None:
            raise ValidationError(f"malformed token {tok!r} in {text!r}")
        i = int(m.group(1))
        if i < 1 or i > rank:
            raise ValidationError(f"generator index {i} out of range for rank {rank}")
        letters.append(-i if m.group(2) else i)
    return reduce_letters(letters, rank)


def format_word(w: FreeWord) -> str:
    if not w.letters:
        return "e"
    return ".".join(f"a{abs(x)}'" if x < 0 else f"a{x}" for x in w.letters)


class LatticePoint:
    """A point of Z^k, or of the torus (Z/nZ)^k when ``modulus`` is given.

    The torus variant gives finite groups on which every measure of full
    support is in the same measure class as all of its translates.
    """

    __slots__ = ("coords", "modulus")

    coords: tuple[int, ...]
    modulus: int | None

    def __init__(self, coords: Iterable[int], modulus: int | None = None):
        coords = tuple(int(c) for c in coords)
        if not coords:
            raise ValidationError("lattice points need at least one coordinate")
        if modulus is not None:
            if modulus < 1:
                raise ValidationError("modulus must be positive")
            coords = tuple(c % modulus for c in coords)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "modulus", modulus)

    def __setattr__(self, name, value):
        raise AttributeError("LatticePoint is immutable")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def group(self) -> tuple:
        return ("lattice", len(self.coords), self.modulus)

    def identity(self) -> "LatticePoint":
        return LatticePoint((0,) * len(self.coords), self.modulus)

    def is_identity(self) -> bool:
        return not any(self.coords)

    def norm(self) -> int:
        """L1 norm (word length for the standard generators of Z^k)."""
        if self.modulus is None:
            return sum(abs(c) for c in self.coords)
        n = self.modulus
        return sum(min(c, n - c) for c in self.coords)

    def __mul__(self, other: "LatticePoint") -> "LatticePoint":
        if self.group != other.group:
            raise ValidationError(f"group mismatch: {self.group} vs {other.group}")
        return LatticePoint(tuple(a + b for a, b in zip(self.coords, other.coords)), self.modulus)

    __add__ = __mul__

    def inverse(self) -> "LatticePoint":
        return LatticePoint(tuple(-c for c in self.coords), self.modulus)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatticePoint):
            return NotImplemented
        return self.coords == other.coords and self.modulus == other.modulus

    def __hash__(self) -> int:
        return hash((self.coords, self.modulus))

    def sort_key(self) -> tuple:
        return (self.norm(), self.coords)

    def __lt__(self, other: "LatticePoint") -> bool:
        return self.sort_key() < other.sort_key()

    def __repr__(self) -> str:
        if self.modulus is None:
            return f"LatticePoint({self.coords})"
        return f"LatticePoint({self.coords}, modulus={self.modulus})"

    def __str__(self) -> str:
        return "(" + ",".join(str(c) for c in self.coords) + ")"

    def __reduce__(self):
        return (LatticePoint, (self.coords, self.modulus))


class FreeBall:
    """Array-indexed ball of radius ``radius`` in F_d.

    Words are numbered in the same order as :func:`enumerate_ball`.  Because
    the order is length-then-lexicographic, the one-letter extensions
    ``w.a_c`` of a word occupy a contiguous block of the next level, which
    lets every table here be built with vectorized numpy operations.

    Attributes
    ----------
    offsets : ndarray
        ``offsets[k]`` is the index of the first word of length ``k``;
        ``offsets[radius + 1]`` is the total size.
    parent : ndarray
        Index of ``w`` with its last letter removed (-1 for the identity).
    last : ndarray
        Code of the last letter (-1 for the identity).
    right : ndarray, shape (size, 2d)
        ``right[i, c]`` is the index of ``w_i . a_c`` or -1 if that word lies
        outside the ball.
    """

    def __init__(self, d: int, radius: int, cap: int = DEFAULT_BALL_CAP):
        if d < 2:
            raise ValidationError("free group rank must be >= 2")
        if radius < 0:
            raise ValidationError("radius must be >= 0")
        size = ball_size(d, radius)
        if size > cap:
            raise CapacityError(f"ball of radius {radius} in F_{d} has {size} words (cap {cap})")
        self.d = d
        self.radius = radius
        self.size = size
        n_codes = 2 * d
        offsets = [0, 1]
        parent = np.full(size, -1, dtype=np.int64)
        last = np.full(size, -1, dtype=np.int64)
        right = np.full((size, n_codes), -1, dtype=np.int64)
        for k in range(radius):
            lvl = np.arange(offsets[k], offsets[k + 1])
            par = np.repeat(lvl, n_codes)
            codes = np.tile(np.arange(n_codes), len(lvl))
            keep = codes != (last[par] ^ 1)
            par, codes = par[keep], codes[keep]
            start = offsets[k + 1]
            idx = np.arange(start, start + len(par))
            parent[idx] = par
            last[idx] = codes
            right[par, codes] = idx
            offsets.append(start + len(par))
        nonroot = np.arange(1, size)
        right[nonroot, last[nonroot] ^ 1] = parent[nonroot]
        self.offsets = np.array(offsets, dtype=np.int64)
        self.parent = parent
        self.last = last
        self.right = right
        self._letters: np.ndarray | None = None

    def level(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def lengths(self) -> np.ndarray:
        out = np.empty(self.size, dtype=np.int64)
        for k in range(self.radius + 1):
            out[self.level(k)] = k
        return out

    def letter_codes(self) -> np.ndarray:
        """Matrix of letter codes, row ``i`` padded with -1 beyond ``|w_i|``."""
        if self._letters is None:
            mat = np.full((self.size, max(self.radius, 1)), -1, dtype=np.int64)
            for k in range(1, self.radius + 1):
                sl = self.level(k)
                mat[sl, : k - 1] = mat[self.parent[sl], : k - 1]
                mat[sl, k - 1] = self.last[sl]
            self._letters = mat
        return self._letters

    def first(self) -> np.ndarray:
        """Code of the first letter of each word (-1 for the identity)."""
        return self.letter_codes()[:, 0] if self.radius else np.full(1, -1)

    def words(self, level: int | None = None) -> list[FreeWord]:
        mat = self.letter_codes()
        rng = range(self.size) if level is None else range(*self.level(level).indices(self.size))
        lens = self.lengths()
        table = np.array([code_to_letter(c) for c in range(2 * self.d)] + [0], dtype=np.int64)
        out = []
        for i in rng:
            n = int(lens[i])
            out.append(FreeWord._trusted(tuple(int(x) for x in table[mat[i, :n]]), self.d))
        return out

    def index_of(self, w: FreeWord) -> int:
        if w.rank != self.d:
            raise ValidationError("rank mismatch")
        if len(w) > self.radius:
            raise ValidationError(f"{w} lies outside the ball of radius {self.radius}")
        i = 0
        for x in w.letters:
            i = int(self.right[i, letter_to_code(x)])
        return i


def words_of_length(d: int, k: int, cap: int = DEFAULT_BALL_CAP) -> list[FreeWord]:
    """Reduced words of length exactly ``k`` in canonical order."""
    return FreeBall(d, k, cap=cap).words(level=k)


def random_word(rng: np.random.Generator, d: int, length: int) -> FreeWord:
    """Uniformly random reduced word of the given length."""
    letters: list[int] = []
    for _ in range(length):
        choices = [x for x in letter_order(d) if not letters or x != -letters[-1]]
        letters.append(int(choices[rng.integers(len(choices))]))
    return FreeWord._trusted(tuple(letters), d)


def lattice_generators(k: int) -> Sequence[LatticePoint]:
    """The 2k unit vectors +-e_i of Z^k."""
    out = []
    for i in range(k):
        for s in (1, -1):
            c = [0] * k
            c[i] = s
            out.append(LatticePoint(c))
    return out
