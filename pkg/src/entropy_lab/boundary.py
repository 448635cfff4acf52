"""Harmonic measure on the boundary of F_d for nearest-neighbour walks.

The boundary is the space of infinite reduced words; ``X_g`` denotes the
cylinder of boundary points beginning with the reduced word ``g``.  For a
walk measure ``p`` on the generators, everything here is built from

* ``q_j``: probability that the walk ever visits ``a_j``,
* ``v_j``: harmonic mass of the cylinder ``X_{a_j}``.

Vectors are indexed by generator code (see :mod:`entropy_lab.groups`).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .divergence import FDivergence, psi
from .errors import CapacityError, NumericalError, ValidationError
from .groups import FreeBall, FreeWord, ball_size, code_to_letter, letter_to_code, words_of_length
from .measures import GeneratorMeasure, SparseMeasure

DEPTH_CAP = 12
BISECTION_MAX_ITER = 200


@dataclass(frozen=True, eq=False)
class BoundaryParams:
    d: int
    p: np.ndarray
    x_root: float
    q: np.ndarray
    v: np.ndarray
    residual: float

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "p": self.p.tolist(),
            "x_root": self.x_root,
            "q": self.q.tolist(),
            "v": self.v.tolist(),
            "residual": self.residual,
        }

    @classmethod
    def from_q(cls, p: GeneratorMeasure, q: Sequence[float]) -> "BoundaryParams":
        """Parameters built from arbitrary ``q`` (no solve); used for sensitivity probes."""
        q = np.asarray(q, float)
        qi = q[_inv_codes(p.d)]
        x = 1.0 - float(np.dot(p.p, qi))
        v = q * (1.0 - qi) / (1.0 - qi * q)
        return cls(p.d, p.p.copy(), x, q, v, float(np.max(np.abs(q_residuals(p.p, q)))))


def _inv_codes(d: int) -> np.ndarray:
    return np.arange(2 * d) ^ 1


def q_residuals(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``q_j - p_j - q_j sum_{i != j} p_i q_{-i}`` for every generator j."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    pq = p * q[np.arange(len(p)) ^ 1]
    return q - p - q * (pq.sum() - pq)


def _root_function(p: np.ndarray, x: float) -> float:
    d = len(p) // 2
    prod = p[0::2] * p[1::2]
    return (d - 1) * x + 1.0 - math.fsum(np.sqrt(x * x + 4.0 * prod))


def solve_q(p: GeneratorMeasure, tol: float = 1e-12) -> BoundaryParams:
    """Hitting probabilities ``q`` and cylinder masses ``v`` for the walk ``p``.

    Reduces the system ``q_j = p_j + q_j sum_{i != j} p_i q_{-i}`` to the
    concave scalar equation
    ``(d-1) x + 1 - sum_j sqrt(x^2 + 4 p_j p_{-j}) = 0`` on (0, 1), solved by
    bisection.  For symmetric ``p``, ``x = 0`` is a spurious root, so the
    bracket starts at the first dyadic ``2^-k`` where the function is positive.
    """
    if not isinstance(p, GeneratorMeasure):
        p = GeneratorMeasure(p)
    pv = p.p
    d = p.d
    hi = 1.0
    if _root_function(pv, hi) >= 0:
        raise NumericalError("no sign change at x = 1; invalid walk measure")
    lo = None
    t = 0.5
    for _ in range(1100):
        if _root_function(pv, t) > 0:
            lo = t
            break
        t *= 0.5
    if lo is None:
        raise NumericalError("no positive bracket found near 0; invalid walk measure")
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _root_function(pv, mid) > 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    inv = _inv_codes(d)
    q = (-x + np.sqrt(x * x + 4.0 * pv * pv[inv])) / (2.0 * pv[inv])
    qi = q[inv]
    v = q * (1.0 - qi) / (1.0 - qi * q)
    res = float(np.max(np.abs(q_residuals(pv, q))))
    if res >= tol:
        raise NumericalError(f"q residual {res:.3e} above tolerance {tol:.1e}")
    if not np.all((q > 0) & (q < 1)):
        raise NumericalError(f"hitting probabilities out of (0,1): {q}")
    if abs(v.sum() - 1.0) > 1e-12:
        raise NumericalError(f"cylinder masses sum to {v.sum()!r}")
    return BoundaryParams(d, pv.copy(), float(x), q, v, res)


def harmonic_cylinder(bp: BoundaryParams, gamma: FreeWord) -> float:
    """Harmonic mass of the cylinder ``X_gamma``; 1 for the identity."""
    if gamma.rank != bp.d:
        raise ValidationError("rank mismatch")
    if not gamma.letters:
        return 1.0
    codes = [letter_to_code(x) for x in gamma.letters]
    val = bp.v[codes[0]]
    for prev, cur in zip(codes, codes[1:]):
        val *= bp.v[cur] / (1.0 - bp.v[prev ^ 1])
    return float(val)


def cylinder_masses(bp: BoundaryParams, ball: FreeBall) -> np.ndarray:
    """Harmonic masses of all cylinders ``X_w`` for ``w`` in ``ball``."""
    nu = np.empty(ball.size)
    nu[0] = 1.0
    if ball.radius:
        sl = ball.level(1)
        nu[sl] = bp.v[ball.last[sl]]
    for k in range(2, ball.radius + 1):
        sl = ball.level(k)
        par = ball.parent[sl]
        nu[sl] = nu[par] * bp.v[ball.last[sl]] / (1.0 - bp.v[ball.last[par] ^ 1])
    return nu


def _generator_rn(bp: BoundaryParams, code: int, first: int) -> float:
    # d(a_c nu)/d nu on cylinders whose first letter has code `first`
    return 1.0 / bp.q[code] if first == code else bp.q[code ^ 1]


def rn_derivative(bp: BoundaryParams, g: FreeWord, gamma: FreeWord) -> float:
    """Value of ``d(g nu)/d nu`` on the cylinder ``X_gamma``.

    Uses the cocycle rule ``R(g_1 h)(xi) = R(g_1)(xi) R(h)(g_1^-1 xi)`` letter
    by letter.  Raises if ``gamma`` is too short for the value to be constant.
    """
    if g.rank != bp.d or gamma.rank != bp.d:
        raise ValidationError("rank mismatch")
    cyl = list(gamma.letters)
    val = 1.0
    for x in g.letters:
        if not cyl:
            raise ValidationError(f"cylinder {gamma} too shallow for a constant value of d({g} nu)/d nu")
        c = letter_to_code(x)
        val *= _generator_rn(bp, c, letter_to_code(cyl[0]))
        if cyl[0] == x:
            cyl.pop(0)
        else:
            cyl.insert(0, -x)
    return float(val)


def _lam_vector(lam, d: int) -> np.ndarray:
    if isinstance(lam, GeneratorMeasure):
        if lam.d != d:
            raise ValidationError(f"weight measure has rank {lam.d}, expected {d}")
        return lam.p
    arr = np.asarray(lam, float)
    if arr.shape != (2 * d,):
        raise ValidationError(f"expected {2 * d} generator weights")
    return arr


def boundary_entropy(bp: BoundaryParams, lam, f: FDivergence) -> float:
    """``h_{lam,f}`` of the harmonic measure.

    ``sum_j lam_j [(1 - v_{-j}) f(q_j) + v_{-j} f(1/q_{-j})]``, the integral of
    ``f(d(a_j^-1 nu)/d nu)`` against ``nu`` averaged over ``lam``.
    """
    lv = _lam_vector(lam, bp.d)
    inv = _inv_codes(bp.d)
    vi, qi = bp.v[inv], bp.q[inv]
    terms = (1.0 - vi) * f(bp.q) + vi * f(1.0 / qi)
    return float(math.fsum(lv * terms))


def criterion_values(bp: BoundaryParams, lam, f: FDivergence) -> np.ndarray:
    """Values of ``sum_i lam_i Psi_f(d(a_i nu)/d nu)`` on each cylinder ``X_{a_j}``.

    The harmonic measure minimizes ``h_{lam,f}`` in its measure class exactly
    when all ``2d`` values coincide.
    """
    if isinstance(lam, GeneratorMeasure):
        if not lam.is_symmetric(1e-15):
            raise ValidationError("criterion_values needs a symmetric weight measure")
    lv = _lam_vector(lam, bp.d)
    if np.any(np.abs(lv[0::2] - lv[1::2]) > 1e-15):
        raise ValidationError("criterion_values needs a symmetric weight measure")
    inv = _inv_codes(bp.d)
    off = lv * psi(f, bp.q[inv])  # contribution of a_i off X_{a_i}
    on = lv * psi(f, 1.0 / bp.q)  # contribution of a_j on X_{a_j}
    return math.fsum(off) - off + on


def _translated_cylinder_mass(bp: BoundaryParams, code: int, gamma: FreeWord) -> float:
    """``nu(a_code X_gamma)`` for a nonempty ``gamma``.

    Usually ``a_code X_gamma`` is the cylinder of the reduced product, except
    when ``gamma`` is the single letter ``a_code^-1``: then the image is the
    complement of ``X_{a_code^-1}``.
    """
    letter = code_to_letter(code)
    if gamma.letters == (-letter,):
        return 1.0 - bp.v[code ^ 1]
    return harmonic_cylinder(bp, FreeWord._trusted((letter,), bp.d) * gamma)


def stationarity_residual(bp: BoundaryParams, depth: int) -> float:
    """``max_gamma |sum_i p_i nu(a_i^-1 X_gamma) - nu(X_gamma)|`` over cylinders of length ``depth``."""
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    worst = 0.0
    for gamma in words_of_length(bp.d, depth):
        lhs = 0.0
        for c in range(2 * bp.d):
            lhs += bp.p[c] * _translated_cylinder_mass(bp, c ^ 1, gamma)
        worst = max(worst, abs(lhs - harmonic_cylinder(bp, gamma)))
    return worst


@dataclass(frozen=True, eq=False)
class CylinderDensity:
    """Measure ``m`` on the boundary with ``dm/dnu`` constant on depth-``depth`` cylinders.

    ``weights[i]`` is the density on ``X_{w_i}`` where ``w_i`` runs over
    :func:`~entropy_lab.groups.words_of_length` ``(d, depth)``.
    """

    bp: BoundaryParams
    depth: int
    weights: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.depth < 1:
            raise ValidationError("depth must be >= 1")
        if self.depth > DEPTH_CAP:
            raise CapacityError(f"cylinder depth {self.depth} exceeds cap {DEPTH_CAP}")
        w = np.asarray(self.weights, float)
        object.__setattr__(self, "weights", w)
        n = 2 * self.bp.d * (2 * self.bp.d - 1) ** (self.depth - 1)
        if w.shape != (n,):
            raise ValidationError(f"expected {n} weights for depth {self.depth}")
        if self.check:
            if not np.all(w > 0):
                raise ValidationError("density weights must be strictly positive")
            mass = self.mass()
            if abs(mass - 1.0) > 1e-10:
                raise ValidationError(f"density integrates to {mass!r}, not 1")

    @classmethod
    def unit(cls, bp: BoundaryParams, depth: int) -> "CylinderDensity":
        n = 2 * bp.d * (2 * bp.d - 1) ** (depth - 1)
        return cls(bp, depth, np.ones(n))

    @classmethod
    def from_weights(cls, bp: BoundaryParams, depth: int, weights, normalize: bool = True) -> "CylinderDensity":
        w = np.asarray(weights, float)
        if normalize:
            w = w / float(np.dot(w, _class_masses(bp, depth)))
        return cls(bp, depth, w)

    @classmethod
    def random(cls, bp: BoundaryParams, depth: int, rng: np.random.Generator,
               sigma: float = 0.5) -> "CylinderDensity":
        """Log-normal random density, normalized."""
        n = 2 * bp.d * (2 * bp.d - 1) ** (depth - 1)
        return cls.from_weights(bp, depth, np.exp(sigma * rng.standard_normal(n)))

    def mass(self) -> float:
        return float(math.fsum(self.weights * _class_masses(self.bp, self.depth)))

    def words(self) -> list[FreeWord]:
        return words_of_length(self.bp.d, self.depth)

    def __getitem__(self, gamma: FreeWord) -> float:
        if len(gamma) < self.depth:
            raise ValidationError(f"density is not constant on the shallower cylinder {gamma}")
        ball = FreeBall(self.bp.d, self.depth)
        i = ball.index_of(FreeWord._trusted(gamma.letters[: self.depth], gamma.rank))
        return float(self.weights[i - ball.offsets[self.depth]])


class _DensityKernel:
    """Precomputed index maps for evaluating ``h_{lam,f}`` of cylinder densities.

    Densities constant on depth-K cylinders are integrated over depth-(K+1)
    cylinders, the coarsest level on which every ``d(a_j^-1 m)/dm`` is constant.
    """

    def __init__(self, bp: BoundaryParams, depth: int):
        if depth > DEPTH_CAP - 1:
            raise CapacityError(f"density depth {depth} needs cylinders of depth {depth + 1} (cap {DEPTH_CAP})")
        d = bp.d
        K = depth
        self.ball = ball = FreeBall(d, K + 1)
        nu = cylinder_masses(bp, ball)
        lvK, lvK1 = ball.level(K), ball.level(K + 1)
        self.nu_class = nu[lvK]
        self.nu = nu[lvK1]
        off = ball.offsets[K]
        self.cls = ball.parent[lvK1] - off
        codes = ball.letter_codes()[lvK1]
        first = codes[:, 0]
        self.shift = np.empty((2 * d, len(self.cls)), dtype=np.int64)
        self.rn = np.empty((2 * d, len(self.cls)))
        for c in range(2 * d):
            # class of a_c gamma, and d(a_c^-1 nu)/d nu on gamma
            back = first == (c ^ 1)
            idx_drop = np.zeros(len(first), dtype=np.int64)
            for pos in range(1, K + 1):
                idx_drop = ball.right[idx_drop, codes[:, pos]]
            idx_push = np.full(len(first), ball.right[0, c], dtype=np.int64)
            for pos in range(0, K - 1):
                idx_push = ball.right[idx_push, codes[:, pos]]
            self.shift[c] = np.where(back, idx_drop, idx_push) - off
            self.rn[c] = np.where(back, 1.0 / bp.q[c ^ 1], bp.q[c])

    def entropy(self, weights: np.ndarray, lam: np.ndarray, f: FDivergence) -> np.ndarray:
        w = np.atleast_2d(weights)
        wc = w[:, self.cls]
        out = np.zeros(w.shape[0])
        for c, lc in enumerate(lam):
            if lc == 0:
                continue
            ratio = w[:, self.shift[c]] / wc * self.rn[c]
            out += lc * np.sum(self.nu * wc * f(ratio), axis=1)
        return out


@lru_cache(maxsize=32)
def _class_masses(bp: BoundaryParams, depth: int) -> np.ndarray:
    ball = FreeBall(bp.d, depth)
    return cylinder_masses(bp, ball)[ball.level(depth)]


@lru_cache(maxsize=32)
def _kernel(bp: BoundaryParams, depth: int) -> _DensityKernel:
    return _DensityKernel(bp, depth)


def density_entropy(m: CylinderDensity, lam, f: FDivergence) -> float:
    """``h_{lam,f}(m)`` evaluated exactly as a finite sum over cylinders."""
    lv = _lam_vector(lam, m.bp.d)
    return float(_kernel(m.bp, m.depth).entropy(m.weights, lv, f)[0])


def density_entropy_batch(bp: BoundaryParams, depth: int, weights: np.ndarray, lam, f: FDivergence) -> np.ndarray:
    """Vectorized :func:`density_entropy` for a stack of normalized weight vectors."""
    return _kernel(bp, depth).entropy(np.asarray(weights, float), _lam_vector(lam, bp.d), f)


def push_convolve(kappa: SparseMeasure, bp: BoundaryParams) -> CylinderDensity:
    """Density of ``kappa * nu`` with respect to ``nu``: ``sum_g kappa(g) d(g nu)/d nu``."""
    if kappa.group != ("free", bp.d):
        raise ValidationError("kappa must live on the same free group")
    if not kappa.is_probability():
        raise ValidationError("kappa must be a probability measure")
    depth = max(1, kappa.radius())
    if depth > DEPTH_CAP:
        raise CapacityError(f"depth {depth} exceeds cap {DEPTH_CAP}")
    cyls = words_of_length(bp.d, depth)
    w = np.zeros(len(cyls))
    for g, kg in kappa.items():
        w += kg * np.array([rn_derivative(bp, g, gamma) for gamma in cyls])
    return CylinderDensity(bp, depth, w)


@dataclass
class HittingSample:
    """Outcome of :func:`simulate_hitting`: counts of limit prefixes."""

    d: int
    depth: int
    paths: int
    excluded: int
    seed: int
    counts: dict[FreeWord, int]

    @property
    def n(self) -> int:
        return self.paths - self.excluded

    def marginal(self, depth: int) -> dict[FreeWord, int]:
        if depth > self.depth:
            raise ValidationError("cannot refine a sample beyond its simulated depth")
        out: dict[FreeWord, int] = {}
        for w, c in self.counts.items():
            key = FreeWord._trusted(w.letters[:depth], self.d)
            out[key] = out.get(key, 0) + c
        return out


BLOCK_PATHS = 1 << 16


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ENTROPY_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _simulate_block(p: np.ndarray, n: int, depth: int, patience: int, step_cap: int,
                    seed: int, block: int) -> tuple[np.ndarray, int]:
    # Philox is counter-based: block b draws from key (seed, b) regardless of scheduling
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    cum = np.cumsum(p)
    cum[-1] = 1.0
    target = depth + patience
    word = np.zeros((n, target), dtype=np.int8)
    length = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    steps = 0
    while active.size and steps < step_cap:
        c = np.searchsorted(cum, rng.random(active.size), side="right").astype(np.int8)
        L = length[active]
        lastc = np.where(L > 0, word[active, np.maximum(L - 1, 0)], -1)
        back = (L > 0) & (c == (lastc ^ 1))
        fwd = ~back
        length[active[back]] -= 1
        fa = active[fwd]
        word[fa, length[fa]] = c[fwd]
        length[fa] += 1
        active = active[length[active] < target]
        steps += 1
    done = np.ones(n, dtype=bool)
    done[active] = False
    prefix = word[done, :depth]
    return prefix, int(active.size)


def simulate_hitting(p: GeneratorMeasure, paths: int, depth: int, seed: int,
                     patience: int = 40, step_cap: int = 1_000_000) -> HittingSample:
    """Monte Carlo estimate of the harmonic measure of depth-``depth`` cylinders.

    Each path multiplies i.i.d. generator steps until the reduced word has
    length ``depth + patience``; its first ``depth`` letters are recorded.
    Paths still running after ``step_cap`` steps are excluded and counted.
    Paths are split into fixed blocks of 65536, each with its own Philox
    stream, so the result does not depend on ``ENTROPY_LAB_THREADS``.
    """
    if paths < 1:
        raise ValidationError("paths must be >= 1")
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    if not isinstance(p, GeneratorMeasure):
        p = GeneratorMeasure(p)
    sizes = [min(BLOCK_PATHS, paths - s) for s in range(0, paths, BLOCK_PATHS)]
    args = [(p.p, n, depth, patience, step_cap, seed, b) for b, n in enumerate(sizes)]
    workers = min(_threads(), len(args))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda a: _simulate_block(*a), args))
    else:
        results = [_simulate_block(*a) for a in args]
    ball = FreeBall(p.d, depth)
    counts_arr = np.zeros(ball.size, dtype=np.int64)
    excluded = 0
    for prefix, exc in results:
        excluded += exc
        idx = np.zeros(prefix.shape[0], dtype=np.int64)
        for pos in range(depth):
            idx = ball.right[idx, prefix[:, pos].astype(np.int64)]
        counts_arr += np.bincount(idx, minlength=ball.size)
    words = ball.words(level=depth)
    off = ball.offsets[depth]
    counts = {w: int(counts_arr[off + i]) for i, w in enumerate(words) if counts_arr[off + i]}
    return HittingSample(p.d, depth, paths, excluded, seed, counts)


def cylinder_table(bp: BoundaryParams, sample: HittingSample, depth: int | None = None) -> list[dict]:
    """Rows ``word, nu_mass, empirical_freq, z_score`` for every cylinder of a depth."""
    depth = sample.depth if depth is None else depth
    counts = sample.marginal(depth)
    n = sample.n
    rows = []
    for w in words_of_length(bp.d, depth):
        nu = harmonic_cylinder(bp, w)
        freq = counts.get(w, 0) / n
        sigma = math.sqrt(nu * (1.0 - nu) / n)
        rows.append({"word": str(w), "nu_mass": nu, "empirical_freq": freq,
                     "z_score": (freq - nu) / sigma if sigma > 0 else 0.0})
    return rows


def monte_carlo_entropy(bp: BoundaryParams, lam, f: FDivergence, sample: HittingSample) -> tuple[float, float]:
    """Monte Carlo ``h_{lam,f}(nu)`` from simulated boundary points; returns (estimate, std. error).

    Each sampled limit point ``xi`` contributes ``sum_j lam_j f(d(a_j^-1 nu)/d nu (xi))``,
    which depends only on the first letter of ``xi``.
    """
    lv = _lam_vector(lam, bp.d)
    first = sample.marginal(1)
    n = sample.n
    vals, wts = [], []
    for w, cnt in first.items():
        fc = letter_to_code(w.letters[0])
        val = sum(lv[c] * f(_generator_rn(bp, c ^ 1, fc)) for c in range(2 * bp.d))
        vals.append(float(val))
        wts.append(cnt / n)
    vals_a, wts_a = np.array(vals), np.array(wts)
    mean = float(np.dot(vals_a, wts_a))
    var = float(np.dot(wts_a, (vals_a - mean) ** 2))
    return mean, math.sqrt(var / n)
