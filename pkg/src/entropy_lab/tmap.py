"""The map ``T`` from a symmetric walk ``mu`` to the weights ``lam`` it is optimal for.

``T(mu)_j`` is proportional to ``1 / phi(q_j)`` with
``phi(q) = Psi_f(q) - Psi_f(1/q)``, a positive decreasing function on (0, 1).
Because ``lam`` depends on ``q`` alone and ``q -> p`` is a linear solve,
the inverse is computed in ``q``-coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .boundary import solve_q
from .divergence import FDivergence, psi
from .errors import NumericalError, ValidationError
from .measures import GeneratorMeasure

INVERSE_MAX_ITER = 500


def _require_smooth(f: FDivergence) -> None:
    if not (f.smooth and f.strictly_convex and f.f_prime is not None):
        raise ValidationError(f"{f.name}: T needs a smooth strictly convex f with a derivative")


def phi(f: FDivergence, q):
    """``Psi_f(q) - Psi_f(1/q)``."""
    q = np.asarray(q, float)
    out = np.asarray(psi(f, q)) - np.asarray(psi(f, 1.0 / q))
    return float(out) if out.ndim == 0 else out


def phi_inverse(f: FDivergence, y: float) -> float:
    """The ``q`` in (0, 1) with ``phi(q) = y`` for ``y > 0``."""
    if not y > 0:
        raise ValidationError(f"phi takes only positive values on (0, 1); got target {y}")
    lo = 0.5
    for _ in range(1070):
        if phi(f, lo) > y:
            break
        lo *= 0.5
    else:
        raise NumericalError(f"{f.name}: phi stays below {y} near 0")
    return brentq(lambda q: phi(f, q) - y, lo, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                  maxiter=INVERSE_MAX_ITER)


def _require_symmetric(m: GeneratorMeasure, what: str) -> None:
    if not m.is_symmetric(1e-15):
        raise ValidationError(f"{what} must be symmetric")


def t_forward(p: GeneratorMeasure, f: FDivergence) -> GeneratorMeasure:
    """``T(p)``: the weights for which the harmonic measure of ``p`` is the entropy minimizer."""
    if not isinstance(p, GeneratorMeasure):
        p = GeneratorMeasure(p)
    _require_symmetric(p, "walk measure")
    _require_smooth(f)
    bp = solve_q(p)
    ph = phi(f, bp.q[0::2])
    if np.any(ph <= 0):
        raise NumericalError(f"{f.name}: phi is not positive at q = {bp.q[0::2]}")
    w = 1.0 / ph
    return GeneratorMeasure(w / (2.0 * w.sum()), p.d)


def q_matrix(q) -> np.ndarray:
    """Matrix with ``1/q_j + q_j`` on the diagonal and ``2 q_i`` in column ``i`` elsewhere."""
    q = np.asarray(q, float)
    M = np.tile(2.0 * q, (len(q), 1))
    np.fill_diagonal(M, 1.0 / q + q)
    return M


def q_to_p(q, d: int | None = None, sum_tol: float = 1e-9) -> GeneratorMeasure:
    """The symmetric walk whose hitting probabilities are ``q``.

    ``q`` holds one value per generator (``d`` values), or ``2d`` values in
    code order with ``q(a_i) = q(a_i^-1)``.  The solved masses must be
    positive and add up to 1 within ``sum_tol``; rounded inputs need a looser
    ``sum_tol`` and are renormalized.
    """
    q = np.asarray(q, float).ravel()
    if d is None:
        d = len(q)
    if len(q) == 2 * d:
        if np.any(np.abs(q[0::2] - q[1::2]) > 1e-15):
            raise ValidationError("q must be symmetric")
        q = q[0::2]
    if len(q) != d:
        raise ValidationError(f"expected {d} hitting probabilities")
    if np.any(~((q > 0) & (q < 1))):
        raise ValidationError("hitting probabilities must lie in (0, 1)")
    half = np.linalg.solve(q_matrix(q), np.ones(d))
    total = 2.0 * half.sum()
    if np.any(half <= 0) or abs(total - 1.0) > sum_tol:
        raise ValidationError(f"q not realizable: solved masses {half.tolist()} sum to {total!r}")
    return GeneratorMeasure(half / half.sum() / 2.0, d, sum_tol=sum_tol)


@dataclass(frozen=True)
class InverseResult:
    p: GeneratorMeasure
    q: np.ndarray
    residual: float
    iterations: int


def invert_weights(lam: GeneratorMeasure, f: FDivergence, tol: float = 1e-12) -> InverseResult:
    """Solve ``T(p) = lam`` for ``p``, with diagnostics.

    For a scale ``c > 0`` put ``q_j(c) = phi^-1(c / lam_j)``; every ``q_j``
    decreases in ``c``.  A symmetric ``q`` comes from a walk exactly when
    ``sum_j 2 q_j / (1 + q_j) = 1`` (the cylinder masses add up), so ``c`` is
    the root of a monotone scalar function, found by bracketing in ``ln c``.
    Any residual ``|T(p) - lam|`` above ``tol`` is raised, never returned.
    """
    if not isinstance(lam, GeneratorMeasure):
        lam = GeneratorMeasure(lam)
    _require_symmetric(lam, "weight measure")
    _require_smooth(f)
    d = lam.d
    if d < 2:
        raise ValidationError("T is defined for rank d >= 2")
    half = lam.half()

    def qs(s: float) -> np.ndarray:
        c = math.exp(s)
        return np.array([phi_inverse(f, c / w) for w in half])

    def excess(s: float) -> float:
        q = qs(s)
        return math.fsum(2.0 * q / (1.0 + q)) - 1.0

    s0 = math.log(float(phi(f, 1.0 / (2 * d - 1))) / (2 * d))
    lo, hi = s0 - 1.0, s0 + 1.0
    for _ in range(200):
        if excess(lo) > 0:
            break
        lo -= 2.0 * (hi - lo)
    else:
        raise NumericalError("could not bracket the scale from below")
    for _ in range(200):
        if excess(hi) < 0:
            break
        hi += 2.0 * (hi - lo)
    else:
        raise NumericalError("could not bracket the scale from above")
    s, info = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                     maxiter=INVERSE_MAX_ITER, full_output=True, disp=False)
    if not info.converged:
        raise NumericalError(f"scale search did not converge in {INVERSE_MAX_ITER} iterations")
    q = qs(s)
    p = q_to_p(q, d)
    back = t_forward(p, f)
    residual = float(np.max(np.abs(back.p - lam.p)))
    if residual >= tol:
        raise NumericalError(f"T^-1 residual {residual:.3e} above tolerance {tol:.1e}")
    return InverseResult(p, np.repeat(q, 2), residual, info.iterations)


def t_inverse(lam: GeneratorMeasure, f: FDivergence, tol: float = 1e-12) -> GeneratorMeasure:
    """The symmetric walk ``p`` with ``T(p) = lam``."""
    return invert_weights(lam, f, tol).p
