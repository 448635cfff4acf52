"""f-divergences and Furstenberg f-entropy of measures on a group.

KL convention: the built-in ``kl`` divergence uses ``f(z) = -ln z``, so that
``D_kl(m || nu) = sum_x nu(x) * -ln(m(x)/nu(x))``.  This is the usual
Kullback-Leibler divergence with its arguments swapped.  All formulas in the
package are written for that orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .errors import ValidationError
from .measures import GeneratorMeasure, SparseMeasure, convolve


class Divergent(float):
    """Tagged +infinity returned when a divergence or entropy is not finite.

    Compares and adds like ``float('inf')``; ``reason`` records why (for
    example a support mismatch), so callers can tell it apart from overflow.
    """

    def __new__(cls, reason: str = "support mismatch"):
        obj = super().__new__(cls, math.inf)
        obj.reason = reason
        return obj

    def __repr__(self) -> str:
        return f"Divergent({self.reason!r})"


def is_divergent(x) -> bool:
    return isinstance(x, Divergent)


@dataclass(frozen=True)
class FDivergence:
    """A convex ``f`` on (0, inf) with ``f(1) = 0`` and (optionally) its derivative.

    ``f`` and ``f_prime`` must accept numpy arrays.  Construction runs three
    spot checks: ``f(1) == 0``, midpoint convexity on a grid, and agreement
    of ``f_prime`` with central differences on ``[1e-3, 1e3]``.
    """

    name: str
    f: Callable
    f_prime: Callable | None = None
    strictly_convex: bool = True
    smooth: bool = True
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        if not self.check:
            return
        if abs(float(self.f(1.0))) > 1e-15:
            raise ValidationError(f"{self.name}: f(1) = {self.f(1.0)!r}, must be 0")
        xs = np.logspace(-3, 3, 25)
        xx, yy = np.meshgrid(xs, xs)
        mid = self.f((xx + yy) / 2)
        avg = (self.f(xx) + self.f(yy)) / 2
        if np.any(mid > avg + 1e-9 * (1 + np.abs(avg))):
            raise ValidationError(f"{self.name}: f fails the midpoint convexity check")
        if self.f_prime is not None:
            z = np.logspace(-3, 3, 41)
            h = 1e-5 * z
            fd = (self.f(z + h) - self.f(z - h)) / (2 * h)
            an = self.f_prime(z)
            if not np.allclose(fd, an, rtol=1e-6, atol=1e-8):
                raise ValidationError(f"{self.name}: f_prime disagrees with finite differences")

    def __call__(self, z):
        return self.f(z)

    def F(self, x, y):
        """Homogeneous form ``F(x, y) = y f(x / y)``."""
        return y * self.f(x / y)

    def dF_dx(self, x, y):
        return self.fp(x / y)

    def dF_dy(self, x, y):
        r = x / y
        return self.f(r) - r * self.fp(r)

    def fp(self, z):
        if self.f_prime is None:
            raise ValidationError(f"{self.name}: derivative required but not supplied")
        return self.f_prime(z)


def _kl(z):
    return -np.log(z)


def _kl_p(z):
    return -1.0 / np.asarray(z, float)


def _rkl(z):
    z = np.asarray(z, float)
    return z * np.log(z)


def _rkl_p(z):
    return np.log(z) + 1.0


def _chi2(z):
    return (np.asarray(z, float) - 1.0) ** 2


def _chi2_p(z):
    return 2.0 * (np.asarray(z, float) - 1.0)


def _hel(z):
    return (np.sqrt(z) - 1.0) ** 2


def _hel_p(z):
    return 1.0 - 1.0 / np.sqrt(z)


def _lin(z):
    return np.asarray(z, float) - 1.0


def _lin_p(z):
    return np.ones_like(np.asarray(z, float))


KL = FDivergence("kl", _kl, _kl_p)
REVERSE_KL = FDivergence("reverse_kl", _rkl, _rkl_p)
CHI2 = FDivergence("chi2", _chi2, _chi2_p)
HELLINGER2 = FDivergence("hellinger2", _hel, _hel_p)
LINEAR = FDivergence("linear", _lin, _lin_p, strictly_convex=False)

BUILTINS: dict[str, FDivergence] = {d.name: d for d in (KL, REVERSE_KL, CHI2, HELLINGER2, LINEAR)}


def get_divergence(name: str | FDivergence) -> FDivergence:
    if isinstance(name, FDivergence):
        return name
    try:
        return BUILTINS[name]
    except KeyError:
        raise ValidationError(f"unknown divergence {name!r}; choose from {sorted(BUILTINS)}") from None


def f_divergence(f: FDivergence, eta: SparseMeasure, m: SparseMeasure) -> float:
    """``D_f(eta || m) = sum_x m(x) f(eta(x) / m(x))``.

    Returns :class:`Divergent` unless ``eta`` and ``m`` have the same support.
    """
    if set(eta) != set(m):
        return Divergent("support mismatch")
    if not len(m):
        return 0.0
    keys = list(m)
    mw = np.fromiter((m[x] for x in keys), float, len(keys))
    ew = np.fromiter((eta[x] for x in keys), float, len(keys))
    return float(math.fsum(mw * f(ew / mw)))


Weights = Union[GeneratorMeasure, SparseMeasure, Mapping]


def _weight_items(lam: Weights) -> list[tuple[object, float]]:
    if isinstance(lam, GeneratorMeasure):
        lam = lam.as_measure()
    return [(g, float(w)) for g, w in lam.items() if w > 0]


def _ratios(g, kappa: SparseMeasure, keys: list) -> np.ndarray:
    return np.array([kappa[g * x] for x in keys]) / np.array([kappa[x] for x in keys])


def furstenberg_entropy_group(f: FDivergence, lam: Weights, kappa: SparseMeasure,
                              interior: bool = False) -> float:
    """``h_{lam,f}(kappa) = sum_g lam(g) D_f(g^-1 kappa || kappa)``.

    Since ``(g^-1 kappa)(x) = kappa(g x)``, this equals
    ``sum_g lam(g) sum_x kappa(x) f(kappa(g x) / kappa(x))``.

    With ``interior=True`` the inner sum runs only over points ``x`` whose
    translates ``g x`` (g in the support of ``lam``) all stay in the support
    of ``kappa``; this is the partial sum used for truncated measures.
    Otherwise a translate leaving the support gives :class:`Divergent`.
    """
    gens = _weight_items(lam)
    if interior:
        keys = [x for x in kappa if all((g * x) in kappa for g, _ in gens)]
    else:
        keys = list(kappa)
        for g, _ in gens:
            if any((g * x) not in kappa for x in keys):
                return Divergent("translate leaves the support")
    if not keys:
        return 0.0
    kw = np.array([kappa[x] for x in keys])
    total = 0.0
    for g, lw in gens:
        total += lw * math.fsum(kw * f(_ratios(g, kappa, keys)))
    return float(total)


def psi(f: FDivergence, z):
    """``Psi_f(z) = f(z) - z f'(z) + f'(1/z)`` (scalar or array)."""
    if not f.smooth or f.f_prime is None:
        raise ValidationError(f"{f.name}: Psi needs a smooth f with a supplied derivative")
    z = np.asarray(z, float)
    out = f.f(z) - z * f.f_prime(z) + f.f_prime(1.0 / z)
    return float(out) if out.ndim == 0 else out


def first_order_bound(f: FDivergence, nu: SparseMeasure, m: SparseMeasure, g) -> float:
    """Lower bound for ``D_f(g m || m)`` from convexity of ``F(x, y) = y f(x/y)``.

    Returns ``D_f(g nu || nu) + sum_x [F_x(1, r_-(x)) + F_y(r_+(x), 1)] (m - nu)(x)``
    with ``r_+ = d(g nu)/d nu`` and ``r_- = d(g^-1 nu)/d nu``.
    """
    if set(nu) != set(m):
        raise ValidationError("first_order_bound needs nu and m with a common support")
    keys = list(nu)
    ginv = g.inverse()
    nw = np.array([nu[x] for x in keys])
    plus = np.array([nu[ginv * x] for x in keys]) / nw
    minus = np.array([nu[g * x] for x in keys]) / nw
    if np.any(plus == 0) or np.any(minus == 0):
        raise ValidationError("translates of nu leave its support")
    base = math.fsum(nw * f(plus))
    grad = f.fp(1.0 / minus) + (f(plus) - plus * f.fp(plus))
    diff = np.array([m[x] for x in keys]) - nw
    return float(base + math.fsum(grad * diff))


def kl_lower_bound(mu: Weights, nu: SparseMeasure, m: SparseMeasure) -> float:
    """``sum_x m(x) [1 - (mu*nu)(x)/nu(x) - sum_g mu(g) ln(nu(g x)/nu(x))]``.

    A lower bound for ``h_mu(m)`` with the ``kl`` divergence, valid for
    every ``m`` in the measure class of ``nu``.
    """
    if set(nu) != set(m):
        raise ValidationError("kl_lower_bound needs nu and m with a common support")
    gens = _weight_items(mu)
    mu_sparse = SparseMeasure(dict(gens))
    conv = convolve(mu_sparse, nu)
    keys = list(nu)
    nw = np.array([nu[x] for x in keys])
    integrand = 1.0 - np.array([conv[x] for x in keys]) / nw
    for g, w in gens:
        r = _ratios(g, nu, keys)
        if np.any(r == 0):
            raise ValidationError("translates of nu leave its support")
        integrand -= w * np.log(r)
    return float(math.fsum(np.array([m[x] for x in keys]) * integrand))
