import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexlab.errors import ConfigError, ConvexityError, DomainError
from vortexlab.potentials import BUILTINS, make_W, make_Wt


def test_half_square_values():
    W = make_W("half-square")
    t = np.linspace(-2, 1, 7)
    assert np.allclose(W.value(t), t * t / 2)
    assert W.slope_at_one == 1.0


def test_zero_potential():
    W = make_W("zero")
    assert W.is_zero and W.slope_at_one == 0.0
    assert np.all(W.value(np.linspace(-3, 1, 5)) == 0)


def test_linear_tilde():
    Wt = make_Wt("linear")
    assert Wt.slope_at_zero == 1.0
    assert np.allclose(Wt.value([0.0, 0.5, 2.0]), [0.0, 0.5, 2.0])


CASES = [(k, "Wt") for k in sorted(BUILTINS)] + \
    [(k, "W") for k in sorted(BUILTINS) if k != "linear"]  # W'(0) must vanish on (-inf, 1]


@pytest.mark.parametrize("kind,domain", CASES)
def test_derivatives_match_central_differences(kind, domain):
    if domain == "W":
        model, t = make_W(kind), np.linspace(-2.0, 0.9, 20)
    else:
        model, t = make_Wt(kind), np.linspace(0.1, 3.0, 20)
    h = 1e-5
    fd = (model.value(t + h) - model.value(t - h)) / (2 * h)
    assert np.max(np.abs(fd - model.d1(t))) <= 1e-8
    fd2 = (model.d1(t + h) - model.d1(t - h)) / (2 * h)
    assert np.max(np.abs(fd2 - model.d2(t))) <= 1e-8


def test_nonconvex_polynomial_rejected_with_location():
    with pytest.raises(ConvexityError) as info:
        make_Wt("polynomial", [0.0, 1.0, 0.0, -1.0])
    assert info.value.t is not None and info.value.value < 0


def test_gl_potential_needs_flat_origin():
    with pytest.raises(ConvexityError):
        make_W("linear")


def test_out_of_domain_raises():
    with pytest.raises(DomainError):
        make_W("half-square").value(1.5)
    with pytest.raises(DomainError):
        make_Wt("linear").d1(-0.1)


def test_unknown_kind_and_stray_coefficients():
    with pytest.raises(ConfigError):
        make_W("cubic")
    with pytest.raises(ConfigError):
        make_W("half-square", [1.0])
    with pytest.raises(ConfigError):
        make_W("polynomial", [])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=1, max_size=4))
def test_even_convex_polynomials_certify(c):
    # sum c_n t^{2n} with c_n >= 0 is convex with W'(0) = 0
    coeffs = [0.0]
    for a in c:
        coeffs += [0.0, a]
    W = make_W("polynomial", coeffs)
    t = np.linspace(-3, 1, 50)
    assert np.all(W.d2(t) >= -1e-12)
    assert W.to_dict()["coeffs"][: len(coeffs)] == [float(x) for x in coeffs][: len(W.coeffs)]
