import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entropy_lab.boundary import boundary_entropy, solve_q
from entropy_lab.divergence import CHI2, KL, LINEAR, furstenberg_entropy_group
from entropy_lab.errors import CapacityError, ValidationError
from entropy_lab.green import (abel_entropy, first_passage_residual, kv_entropy_rate,
                               lattice_abel_entropy, lazy_walk, mu_a_mass, radial_abel_masses,
                               radial_distribution, simple_walk, solve_first_passage, sweep_a)
from entropy_lab.groups import FreeWord, LatticePoint, random_word, sphere_size, words_of_length
from entropy_lab.measures import GeneratorMeasure, SparseMeasure, abel_sum_truncated
from entropy_lab.tmap import t_forward, t_inverse

U2 = GeneratorMeasure.uniform(2)
EXAMPLE = GeneratorMeasure.symmetric([1 / 3, 1 / 6])


@st.composite
def walks(draw):
    d = draw(st.integers(2, 3))
    raw = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=2 * d, max_size=2 * d)))
    return GeneratorMeasure(raw / raw.sum(), d)


def uniform_F(a):
    # F = a/4 + (3a/4) F^2, smaller root
    return (1 - math.sqrt(1 - 0.75 * a * a)) / (1.5 * a)


@pytest.mark.parametrize("a", [0.1, 0.5, 0.9, 0.99, 0.999])
def test_uniform_first_passage_quadratic(a):
    gp = solve_first_passage(U2, a)
    assert np.allclose(gp.F, uniform_F(a), rtol=1e-12)
    assert gp.mass_identity_residual < 1e-11


def test_first_passage_limit_is_hitting_probability():
    for p in (U2, EXAMPLE):
        q = solve_q(p).q
        F = [solve_first_passage(p, 1 - 10.0 ** -k).F for k in (6, 7)]
        # F(1) - F(1 - h) grows like sqrt(h); Richardson on sqrt(h) steps
        r = math.sqrt(10)
        extrapolated = (r * F[1] - F[0]) / (r - 1)
        assert np.max(np.abs(extrapolated - q)) < 1e-6


@given(walks(), st.floats(0.05, 0.995))
def test_green_invariants(p, a):
    gp = solve_first_passage(p, a)
    assert np.max(np.abs(first_passage_residual(p.p, a, gp.F))) < 1e-13
    q = solve_q(p).q
    assert np.all((gp.F > 0) & (gp.F < q))
    assert gp.G_e > 1
    inv = np.arange(2 * p.d) ^ 1
    assert np.allclose(gp.B, gp.F * (gp.T_total - gp.B[inv]), rtol=1e-12)
    assert gp.T_total == pytest.approx(1 + gp.B.sum(), rel=1e-14)
    assert gp.mass_identity_residual < 1e-11


@given(walks())
def test_first_passage_increasing_in_a(p):
    Fs = np.array([solve_first_passage(p, a).F for a in np.linspace(0.1, 0.99, 12)])
    assert np.all(np.diff(Fs, axis=0) > 0)


def test_mu_a_examples():
    gp = solve_first_passage(U2, 0.4)
    e = FreeWord((), 2)
    assert mu_a_mass(gp, e) == pytest.approx((1 - 0.4) * gp.G_e)
    assert mu_a_mass(gp, e) >= 1 - 0.4
    x = FreeWord([2, -1], 2)
    assert mu_a_mass(gp, FreeWord([1], 2) * x) / mu_a_mass(gp, x) == pytest.approx(gp.F[0])
    y = FreeWord([-1, 2], 2)
    assert mu_a_mass(gp, FreeWord([1], 2) * y) / mu_a_mass(gp, y) == pytest.approx(1 / gp.F[1])
    with pytest.raises(ValidationError):
        solve_first_passage(U2, 1.0)


@given(walks(), st.sampled_from([0.5, 0.9, 0.99]), st.integers(0, 10**6))
def test_stationarity_identity(p, a, seed):
    rng = np.random.default_rng(seed)
    gp = solve_first_passage(p, a)
    x = random_word(rng, p.d, int(rng.integers(1, 12)))
    lhs = sum(p.p[c] * mu_a_mass(gp, FreeWord([-(c // 2 + 1) if c % 2 == 0 else c // 2 + 1], p.d) * x)
              for c in range(2 * p.d))
    assert lhs == pytest.approx(mu_a_mass(gp, x) / a, rel=1e-11)
    e = FreeWord((), p.d)
    lhs_e = sum(p.p[c] * mu_a_mass(gp, FreeWord([-(c // 2 + 1) if c % 2 == 0 else c // 2 + 1], p.d))
                for c in range(2 * p.d))
    assert lhs_e == pytest.approx(mu_a_mass(gp, e) / a - (1 - a) / a, rel=1e-11)


def test_abel_entropy_examples():
    gp = solve_first_passage(EXAMPLE, 0.7)
    assert abel_entropy(gp, EXAMPLE, LINEAR) == pytest.approx(0, abs=1e-14)
    vals = [abel_entropy(solve_first_passage(U2, a), U2, KL) for a in (0.9, 0.99, 0.999)]
    assert all(v > 0.5 * math.log(3) for v in vals)
    assert vals[0] > vals[1] > vals[2]


def test_abel_entropy_matches_direct_sum_over_ball():
    # direct sum of mu_a(x) f(mu_a(g x)/mu_a(x)) over a large ball
    a = 0.3
    gp = solve_first_passage(EXAMPLE, a)
    total = 0.0
    gens = [FreeWord([l], 2) for l in (1, -1, 2, -2)]
    for k in range(0, 9):
        for x in words_of_length(2, k):
            mx = mu_a_mass(gp, x)
            for c, g in enumerate(gens):
                total += EXAMPLE.p[c] * mx * KL(mu_a_mass(gp, g.inverse() * x) / mx)
    assert total == pytest.approx(abel_entropy(gp, EXAMPLE, KL), abs=1e-5)


def test_radial_distribution_examples():
    assert radial_distribution(2, 1).tolist() == [0.0, 1.0]
    assert np.allclose(radial_distribution(2, 2), [0.25, 0.0, 0.75])
    assert math.fsum(radial_distribution(2, 5000)) == pytest.approx(1, abs=1e-12)


@given(st.floats(0.05, 0.9), st.integers(0, 10**6))
def test_radial_oracle(a, seed):
    rng = np.random.default_rng(seed)
    gp = solve_first_passage(U2, a)
    radial = radial_abel_masses(2, a, 30)
    for _ in range(10):
        x = random_word(rng, 2, int(rng.integers(0, 31)))
        assert mu_a_mass(gp, x) == pytest.approx(radial[len(x)] / sphere_size(2, len(x)), abs=1e-9)


def test_kv_examples():
    assert kv_entropy_rate(2, 1) == pytest.approx(math.log(4))
    big, small = kv_entropy_rate(2, 4000), kv_entropy_rate(2, 40)
    assert 0.5 * math.log(3) < big <= small


def test_sweep_rows():
    rows = sweep_a(U2, U2, KL, [0.999, 0.5, 0.9, 0.99])
    assert [r.a for r in rows] == [0.5, 0.9, 0.99, 0.999]
    assert rows[-1].gap < 0.01
    assert all(r.residual_mass_identity < 1e-11 for r in rows)
    assert rows[0].h_min == pytest.approx(0.5 * math.log(3), abs=1e-12)
    lam = t_forward(EXAMPLE, KL)
    assert all(r.h_group >= r.h_boundary for r in sweep_a(EXAMPLE, lam, KL, [0.3, 0.6, 0.9, 0.99, 0.999]))


def test_sweep_parallel_matches_serial(monkeypatch):
    a_list = [0.2, 0.4, 0.6, 0.8]
    serial = sweep_a(EXAMPLE, EXAMPLE, CHI2, a_list)
    monkeypatch.setenv("ENTROPY_LAB_THREADS", "4")
    assert sweep_a(EXAMPLE, EXAMPLE, CHI2, a_list) == serial


@given(st.floats(0.05, 0.99), st.sampled_from([KL, CHI2]), st.integers(0, 10**6))
def test_abel_entropy_above_minimum(a, f, seed):
    rng = np.random.default_rng(seed)
    lam = GeneratorMeasure.symmetric(rng.dirichlet([1, 1]) / 2)
    floor = boundary_entropy(solve_q(t_inverse(lam, f)), lam, f)
    for p in (t_inverse(lam, f), U2, EXAMPLE):
        assert abel_entropy(solve_first_passage(p, a), lam, f) >= floor - 1e-12


def test_lattice_lazy_walk_matches_geometric_closed_form():
    # lazy walk Green function is exactly geometric: mu_a(x) = mu_a(0) r^|x|
    for a in (0.9, 0.99):
        r = (2 - a - 2 * math.sqrt(1 - a)) / a
        exact = -math.log(r) * (1 - r) / (1 + r)
        out = lattice_abel_entropy(lazy_walk(1), simple_walk(1), KL, a)
        assert out.value == pytest.approx(exact, rel=1e-4)
        assert out.bias_bound < 1e-5
        assert out.interior_mass > 1 - 2e-6


def test_lattice_linear_and_errors():
    assert lattice_abel_entropy(lazy_walk(1), simple_walk(1), LINEAR, 0.9).value == pytest.approx(0, abs=1e-12)
    with pytest.raises(CapacityError):
        lattice_abel_entropy(lazy_walk(2), simple_walk(2), KL, 0.999)
    with pytest.raises(ValidationError):
        lattice_abel_entropy(U2.as_measure(), U2.as_measure(), KL, 0.5)


@pytest.mark.parametrize("k,a", [(1, 0.9), (2, 0.8)])
def test_lattice_grid_matches_sparse_oracle(k, a):
    eps = 1e-4
    grid = lattice_abel_entropy(lazy_walk(k), simple_walk(k), KL, a, eps=eps)
    sparse = abel_sum_truncated(lazy_walk(k), a, eps)
    oracle = furstenberg_entropy_group(KL, simple_walk(k), sparse, interior=True)
    assert grid.value == pytest.approx(oracle, rel=1e-11)
