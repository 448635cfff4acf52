import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entropy_lab.boundary import criterion_values, solve_q
from entropy_lab.divergence import CHI2, HELLINGER2, KL, LINEAR, REVERSE_KL
from entropy_lab.errors import ValidationError
from entropy_lab.measures import GeneratorMeasure
from entropy_lab.tmap import (invert_weights, phi, phi_inverse, q_matrix, q_to_p, t_forward,
                              t_inverse)

SMOOTH = [KL, REVERSE_KL, CHI2, HELLINGER2]
EXAMPLE = GeneratorMeasure.symmetric([1 / 3, 1 / 6])


@st.composite
def symmetric_walks(draw, dmax=3):
    d = draw(st.integers(2, dmax))
    raw = np.array(draw(st.lists(st.floats(0.02, 1.0), min_size=d, max_size=d)))
    return GeneratorMeasure(raw / raw.sum() / 2, d)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("f", SMOOTH, ids=lambda f: f.name)
def test_uniform_is_fixed(d, f):
    u = GeneratorMeasure.uniform(d)
    assert np.allclose(t_forward(u, f).p, u.p, atol=1e-15)
    assert np.allclose(t_inverse(u, f).p, u.p, atol=1e-13)


def test_example_weights():
    lam = t_forward(EXAMPLE, KL)
    assert lam.p[0] == pytest.approx(0.32378, abs=5e-4)
    # oracle: q from the monotone fixed-point iteration, lam_j proportional to 1/(2 ln(1/q) + 1/q - q)
    assert lam.p[0] == pytest.approx(0.32378234292549124, abs=1e-13)
    vals = criterion_values(solve_q(EXAMPLE), lam, KL)
    assert vals.max() - vals.min() < 1e-10


def test_inverse_of_rounded_example():
    p = t_inverse(GeneratorMeasure.symmetric([0.32378, 0.5 - 0.32378]), KL)
    assert np.allclose(p.half(), [1 / 3, 1 / 6], atol=1e-3)


def test_q_to_p_examples():
    assert np.allclose(q_to_p([1 / 3, 1 / 3]).p, 0.25, atol=1e-15)
    with pytest.raises(ValidationError):
        q_to_p([0.4308, 0.2481])
    assert np.allclose(q_to_p([0.4308, 0.2481], sum_tol=1e-3).half(), [1 / 3, 1 / 6], atol=1e-3)
    with pytest.raises(ValidationError):
        q_to_p([0.5, 0.5])
    with pytest.raises(ValidationError):
        q_to_p([0.9, 0.1, 0.3, 0.3], 2)


def test_phi_inverse_round_trip():
    for f in SMOOTH:
        for q in (1e-6, 0.1, 0.5, 0.9, 0.999):
            assert phi_inverse(f, phi(f, q)) == pytest.approx(q, rel=1e-10)
    with pytest.raises(ValidationError):
        phi_inverse(KL, -1.0)


def test_rejections():
    with pytest.raises(ValidationError):
        t_forward(GeneratorMeasure([0.4, 0.1, 0.25, 0.25]), KL)
    with pytest.raises(ValidationError):
        t_forward(EXAMPLE, LINEAR)
    with pytest.raises(ValidationError):
        t_inverse(GeneratorMeasure([0.4, 0.1, 0.25, 0.25]), KL)


@given(symmetric_walks(), st.sampled_from([KL, CHI2]))
def test_round_trip(p, f):
    back = invert_weights(t_forward(p, f), f)
    assert np.max(np.abs(back.p.p - p.p)) < 1e-9
    assert back.residual < 1e-12


@given(symmetric_walks(), st.sampled_from(SMOOTH))
def test_forward_output_is_minimizing_weight(p, f):
    lam = t_forward(p, f)
    assert lam.is_symmetric() and np.all(lam.p > 0)
    assert lam.p.sum() == pytest.approx(1, abs=1e-15)
    vals = criterion_values(solve_q(p), lam, f)
    assert vals.max() - vals.min() < 1e-10


@given(symmetric_walks(), symmetric_walks())
def test_injectivity_probe(p, p2):
    if p.d != p2.d or np.max(np.abs(p.p - p2.p)) <= 1e-3:
        return
    assert np.max(np.abs(t_forward(p, KL).p - t_forward(p2, KL).p)) > 0


@given(st.integers(2, 5), st.integers(0, 10**6))
def test_q_matrix_determinant_positive(d, seed):
    q = np.random.default_rng(seed).uniform(1e-3, 1 - 1e-3, d)
    assert np.linalg.det(q_matrix(q)) > 0


@given(symmetric_walks())
def test_q_to_p_inverts_solve_q(p):
    bp = solve_q(p)
    back = q_to_p(bp.q, p.d)
    assert np.allclose(back.p, p.p, atol=1e-12)
    assert np.allclose(solve_q(back).q, bp.q, atol=1e-10)
