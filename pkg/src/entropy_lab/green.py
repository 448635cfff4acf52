"""Closed-form Abel measures ``mu_a = (1-a) sum_n a^n mu^{*n}`` on F_d.

For a nearest-neighbour walk the Green function is multiplicative along
reduced words: with first-passage generating functions ``F_j(a)``,

    mu_a(x) = (1 - a) G_e(a) prod_l F_{x_l}(a),

so ``mu_a`` and its f-entropy are available exactly, without truncation.
Also here: radial dynamic-programming oracles for the uniform walk, the
``a -> 1`` sweep, and Abel measures of walks on Z^k.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .boundary import _inv_codes, _lam_vector, boundary_entropy, solve_q
from .divergence import FDivergence
from .errors import CapacityError, NumericalError, ValidationError
from .groups import FreeWord, LatticePoint, letter_to_code
from .measures import GeneratorMeasure, SparseMeasure, abel_truncation_index


@dataclass(frozen=True, eq=False)
class GreenParams:
    d: int
    p: np.ndarray
    a: float
    F: np.ndarray
    G_e: float
    B: np.ndarray
    T_total: float
    residual: float
    iterations: int

    @property
    def mass_identity_residual(self) -> float:
        """``|(1-a) G_e T - 1|``: total mass of the closed-form ``mu_a`` minus one."""
        return abs((1.0 - self.a) * self.G_e * self.T_total - 1.0)

    @property
    def branch_masses(self) -> np.ndarray:
        """``W_i``: ``mu_a``-mass of the words starting with ``a_i``."""
        return (1.0 - self.a) * self.G_e * self.B

    def to_json(self) -> dict:
        return {"d": self.d, "p": self.p.tolist(), "a": self.a, "F": self.F.tolist(),
                "G_e": self.G_e, "B": self.B.tolist(), "T_total": self.T_total,
                "residual": self.residual, "mass_identity_residual": self.mass_identity_residual}


def first_passage_residual(p: np.ndarray, a: float, F: np.ndarray) -> np.ndarray:
    """``F_j - a p_j - a sum_{i != j} p_i F_{-i} F_j``."""
    pf = p * F[np.arange(len(p)) ^ 1]
    return F - a * p - a * F * (pf.sum() - pf)


def solve_first_passage(p: GeneratorMeasure, a: float, tol: float = 1e-13,
                        max_iter: int = 10_000_000) -> GreenParams:
    """First-passage values ``F_j(a)`` and branch sums for ``0 < a < 1``.

    ``F`` is the minimal solution of ``F_j = a p_j + a sum_{i != j} p_i F_{-i} F_j``,
    reached by the monotone iteration ``F_j <- a p_j / (1 - a sum_{i != j} p_i F_{-i})``
    started from zero.  The branch sums ``B_j`` (sum of ``prod F`` over words
    starting with ``a_j``) and ``T = 1 + sum B`` solve a small linear system.
    """
    if not isinstance(p, GeneratorMeasure):
        p = GeneratorMeasure(p)
    if not 0.0 < a < 1.0:
        raise ValidationError(f"a must lie in (0, 1), got {a}")
    pv = p.p
    d = p.d
    inv = _inv_codes(d)
    F = np.zeros(2 * d)
    it = 0
    for it in range(1, max_iter + 1):
        pf = pv * F[inv]
        new = a * pv / (1.0 - a * (pf.sum() - pf))
        if np.all(new <= F):
            F = np.maximum(new, F)
            break
        F = new
        if it % 64 == 0 and np.max(np.abs(first_passage_residual(pv, a, F))) < 0.1 * tol:
            break
    else:
        raise NumericalError(f"first-passage iteration did not settle in {max_iter} steps")
    res = float(np.max(np.abs(first_passage_residual(pv, a, F))))
    if res >= tol:
        raise NumericalError(f"first-passage residual {res:.3e} above {tol:.1e}")
    G_e = 1.0 / (1.0 - a * float(np.dot(pv, F[inv])))
    n = 2 * d
    M = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    for j in range(n):
        M[j, j] = 1.0
        M[j, j ^ 1] += F[j]
        M[j, n] = -F[j]
    M[n, :n] = -1.0
    M[n, n] = 1.0
    rhs[n] = 1.0
    try:
        sol = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"branch-sum system is singular: {exc}") from None
    return GreenParams(d, pv.copy(), float(a), F, G_e, sol[:n], float(sol[n]), res, it)


def mu_a_mass(gp: GreenParams, x: FreeWord) -> float:
    """``mu_a(x) = (1-a) G_e prod_l F_{x_l}(a)``."""
    if x.rank != gp.d:
        raise ValidationError("rank mismatch")
    val = (1.0 - gp.a) * gp.G_e
    for letter in x.letters:
        val *= gp.F[letter_to_code(letter)]
    return float(val)


def abel_entropy(gp: GreenParams, lam, f: FDivergence) -> float:
    """Exact ``h_{lam,f}(mu_a)`` on F_d.

    ``mu_a(a_j x) / mu_a(x)`` is ``1/F_{-j}`` when ``x`` starts with ``a_{-j}``
    and ``F_j`` otherwise, so the entropy reduces to
    ``sum_j lam_j [W_{-j} f(1/F_{-j}) + (1 - W_{-j}) f(F_j)]``.
    """
    lv = _lam_vector(lam, gp.d)
    inv = _inv_codes(gp.d)
    W = gp.branch_masses
    terms = W[inv] * f(1.0 / gp.F[inv]) + (1.0 - W[inv]) * f(gp.F)
    return float(math.fsum(lv * terms))


def radial_distribution(d: int, n: int) -> np.ndarray:
    """``P(|R_n| = k)``, k = 0..n, for the uniform walk on F_d.

    The distance to the identity is a birth-death chain: from 0 it always
    moves up, from k >= 1 it moves up with probability (2d-1)/(2d).
    """
    if n < 0:
        raise ValidationError("n must be >= 0")
    up = (2 * d - 1) / (2 * d)
    down = 1.0 / (2 * d)
    P = np.zeros(n + 2)
    P[0] = 1.0
    for _ in range(n):
        P = _radial_step(P, up, down)
    return P[: n + 1]


def _radial_step(P: np.ndarray, up: float, down: float) -> np.ndarray:
    Q = np.zeros_like(P)
    Q[1] += P[0]
    Q[2:] += up * P[1:-1]
    Q[:-1] += down * P[1:]
    return Q


def radial_abel_masses(d: int, a: float, kmax: int, tail: float = 1e-12) -> np.ndarray:
    """``(1-a) sum_n a^n P(|R_n| = k)`` for k = 0..kmax, summed until ``a^(n+1) <= tail``."""
    N = abel_truncation_index(a, tail)
    up = (2 * d - 1) / (2 * d)
    down = 1.0 / (2 * d)
    P = np.zeros(N + 2)
    P[0] = 1.0
    acc = np.zeros(N + 2)
    for n in range(N + 1):
        acc += (1.0 - a) * a ** n * P
        P = _radial_step(P, up, down)
    out = np.zeros(kmax + 1)
    m = min(kmax + 1, len(acc))
    out[:m] = acc[:m]
    return out


def _log_sphere(d: int, k: np.ndarray) -> np.ndarray:
    return np.where(k == 0, 0.0, math.log(2 * d) + (k - 1) * math.log(2 * d - 1))


def kv_entropy_rate(d: int, n: int) -> float:
    """``H(mu^{*n}) / n`` for the uniform walk on F_d.

    ``mu^{*n}`` is uniform on each sphere, so
    ``H = sum_k P_k [ln S_k - ln P_k]`` with ``S_k`` the sphere size.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    P = radial_distribution(d, n)
    k = np.arange(n + 1)
    nz = P > 0
    H = math.fsum(P[nz] * (_log_sphere(d, k[nz]) - np.log(P[nz])))
    return H / n


@dataclass(frozen=True)
class SweepRow:
    a: float
    h_group: float
    h_boundary: float
    gap: float
    residual_mass_identity: float
    h_min: float | None = None


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ENTROPY_LAB_THREADS", "1")))
    except ValueError:
        return 1


def sweep_a(p: GeneratorMeasure, lam, f: FDivergence, a_list: Iterable[float]) -> list[SweepRow]:
    """Group entropy ``h_{lam,f}(mu_a)`` against the boundary value as ``a -> 1``.

    ``h_min`` is the minimal entropy ``I_{lam,f}(F_d)``, i.e. the boundary
    entropy for the walk ``T^-1(lam)``; it is filled in when ``lam`` is
    symmetric and ``f`` strictly convex and smooth, and every ``h_group``
    should lie above it.
    """
    from .tmap import t_inverse

    if not isinstance(p, GeneratorMeasure):
        p = GeneratorMeasure(p)
    lam_m = lam if isinstance(lam, GeneratorMeasure) else GeneratorMeasure(lam, p.d)
    bp = solve_q(p)
    h_b = boundary_entropy(bp, lam_m, f)
    h_min = None
    if lam_m.is_symmetric(1e-15) and f.strictly_convex and f.smooth:
        h_min = boundary_entropy(solve_q(t_inverse(lam_m, f)), lam_m, f)
    a_sorted = sorted(float(a) for a in a_list)

    def row(a: float) -> SweepRow:
        gp = solve_first_passage(p, a)
        h_g = abel_entropy(gp, lam_m, f)
        return SweepRow(a, h_g, h_b, h_g - h_b, gp.mass_identity_residual, h_min)

    workers = min(_threads(), max(1, len(a_sorted)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(row, a_sorted))
    return [row(a) for a in a_sorted]


@dataclass(frozen=True)
class LatticeEntropy:
    """Entropy of a truncated Abel measure on Z^k, restricted to the interior."""

    value: float
    a: float
    N: int
    tail: float
    interior_mass: float
    shell_mass: float
    bias_bound: float
    grid_radius: int


def lazy_walk(k: int = 1) -> SparseMeasure:
    """Lazy simple walk on Z^k: stay with probability 1/2, else a uniform unit step."""
    out = {LatticePoint((0,) * k): 0.5}
    for i in range(k):
        for s in (1, -1):
            c = [0] * k
            c[i] = s
            out[LatticePoint(c)] = 0.25 / k
    return SparseMeasure(out)


def simple_walk(k: int = 1) -> SparseMeasure:
    out = {}
    for i in range(k):
        for s in (1, -1):
            c = [0] * k
            c[i] = s
            out[LatticePoint(c)] = 0.5 / k
    return SparseMeasure(out)


def _shift_slices(o: Sequence[int], lo: int, hi: int):
    dst, src = [], []
    for c in o:
        dst.append(slice(lo + max(0, c), hi + min(0, c)))
        src.append(slice(lo + max(0, -c), hi - max(0, c)))
    return tuple(dst), tuple(src)


def lattice_abel_entropy(mu: SparseMeasure, lam: SparseMeasure, f: FDivergence, a: float,
                         eps: float = 1e-6, max_work: float = 2e9) -> LatticeEntropy:
    """``h_{lam,f}`` of the truncated Abel measure of a walk on Z^k.

    The truncated sum ``(1-a) sum_{n<=N} a^n mu^{*n}`` is built on a dense
    grid.  The entropy sum runs over interior points, whose ``lam``-translates
    stay on the grid with positive mass.  ``bias_bound`` is the mass outside
    the interior (including the tail ``a^(N+1)``) times the largest ``|f|``
    over the ratios that occur.
    """
    if mu.group is None or mu.group[0] != "lattice" or mu.group[2] is not None:
        raise ValidationError("mu must be a measure on Z^k")
    if lam.group != mu.group:
        raise ValidationError("lam and mu must live on the same lattice")
    if not mu.is_probability():
        raise ValidationError("mu must be a probability measure")
    k = mu.group[1]
    N = abel_truncation_index(a, eps)
    steps = [(x.coords, w) for x, w in mu.items()]
    s = max(max(abs(c) for c in o) for o, _ in steps)
    R = N * s
    L = 2 * R + 1
    work = float(L) ** k * N * len(steps)
    if work > max_work:
        raise CapacityError(f"truncation N={N} on Z^{k} needs ~{work:.2e} grid updates "
                            f"(cap {max_work:.1e}); lower a or raise eps")
    P = np.zeros((L,) * k)
    center = (R,) * k
    P[center] = 1.0
    acc = (1.0 - a) * P.copy()
    coef = 1.0 - a
    for n in range(1, N + 1):
        lo, hi = R - n * s, R + n * s + 1
        win = tuple(slice(lo, hi) for _ in range(k))
        new = np.zeros_like(P)
        prev_lo, prev_hi = R - (n - 1) * s, R + (n - 1) * s + 1
        for o, w in steps:
            dst = tuple(slice(prev_lo + c, prev_hi + c) for c in o)
            src = tuple(slice(prev_lo, prev_hi) for _ in o)
            new[dst] += w * P[src]
        P = new
        coef *= a
        acc[win] += coef * P[win]
    trans = [(x.coords, w) for x, w in lam.items()]
    t = max(max(abs(c) for c in o) for o, _ in trans)
    inner = tuple(slice(t, L - t) for _ in range(k))
    base = acc[inner]
    mask = base > 0
    shifted = []
    for o, w in trans:
        sl = tuple(slice(t + c, L - t + c) for c in o)
        sh = acc[sl]
        mask &= sh > 0
        shifted.append((w, sh))
    value = 0.0
    fmax = 0.0
    for w, sh in shifted:
        r = sh[mask] / base[mask]
        fr = f(r)
        value += w * math.fsum(base[mask] * fr)
        if fr.size:
            fmax = max(fmax, float(np.max(np.abs(fr))))
    interior = float(math.fsum(base[mask].ravel()))
    shell = max(0.0, 1.0 - interior)
    return LatticeEntropy(float(value), float(a), N, a ** (N + 1), interior, shell, shell * fmax, R)
