import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drs.experiments import case2_profile
from drs.space import damek_ricci, density, real_hyperbolic
from drs.spherical import NumericalFailure
from drs.transforms import (QuadratureGrid, RadialFunction, Smoothness, SpectralProfile,
                            TailDominanceError, analytic_inversion_constant, ball_grid,
                            correspondence_from_euclidean, correspondence_to_euclidean,
                            euclidean_constant, euclidean_propagate, euclidean_sobolev_norm,
                            forward_sft, gaussian_profile, interval_grid, inverse_sft,
                            inversion_constant, lambda_quadrature, lq_norm, radial_grid,
                            sobolev_norm, uniform_grid, weak_l2_quasinorm)

DR21 = damek_ricci(2, 1)
H3 = real_hyperbolic(3)

# C_cal * int_1^2 l^3 psi(l) dl with psi = e exp(-1/(1-(2l-3)^2)) and C_cal = 1/pi,
# mpmath quadrature at 30 digits
CASE2_N1_AT_ZERO = 0.682451527689353819016032694105


def heat_profile():
    return SpectralProfile(lambda lam: np.exp(-lam ** 2), (0.0, 7.0), Smoothness.SCHWARTZ, 0.25)


# ---------------------------------------------------------------- quadrature


def test_quadrature_panels_and_exactness():
    q = lambda_quadrature(0.0, 3.0, s_max=4.0, t_max=0.5)
    width = np.diff(q.edges)
    right = q.edges[1:]
    assert np.all(width <= math.pi / (2 * (4.0 + 2 * 0.5 * right)) + 1e-12)
    assert q.integrate(q.nodes ** 11) == pytest.approx(3.0 ** 12 / 12, rel=1e-13)
    r = q.refined()
    assert r.panels == 2 * q.panels
    assert r.integrate(np.cos(r.nodes)) == pytest.approx(math.sin(3.0), abs=1e-14)


def test_quadrature_rejects_bad_edges():
    with pytest.raises(ValueError):
        QuadratureGrid(np.array([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        lambda_quadrature(2.0, 1.0)


def test_radial_grid_measure():
    g = radial_grid(DR21, 3.0, 512)
    assert g.nodes[0] > 0 and g.nodes[-1] < 3.0
    assert np.sum(g.quad_weights) == pytest.approx(3.0, rel=1e-13)
    # DR(2,1): A(s) = 8 sinh^3(s/2) cosh(s/2) integrates to 4 sinh^4(s/2)
    assert np.sum(g.weights) == pytest.approx(4 * math.sinh(1.5) ** 4, rel=1e-12)
    b = ball_grid(H3, 0.5, 32)
    assert np.sum(b.weights) == pytest.approx((math.sinh(1.0) / 2 - 0.5) / 2, rel=1e-13)
    i = interval_grid(H3, 1.0, 2.0, 32)
    assert np.all((i.nodes > 1.0) & (i.nodes < 2.0))


# ---------------------------------------------------------------- norms


@given(c=st.floats(0.1, 10.0), q=st.floats(1.0, 8.0))
@settings(max_examples=40, deadline=None)
def test_lq_constant_function(c, q):
    g = ball_grid(H3, 1.0, 64)
    f = RadialFunction.on(g, np.full(g.nodes.size, c))
    vol = (math.sinh(2.0) / 2 - 1.0) / 2
    assert lq_norm(H3, f, q) == pytest.approx(c * vol ** (1 / q), rel=1e-12)


@given(seed=st.integers(0, 10_000), p=st.floats(1.2, 5.0))
@settings(max_examples=30, deadline=None)
def test_lq_holder(seed, p):
    rng = np.random.default_rng(seed)
    g = radial_grid(DR21, 2.0, 128)
    u = RadialFunction.on(g, rng.normal(size=g.nodes.size))
    v = RadialFunction.on(g, rng.normal(size=g.nodes.size))
    p2 = p / (p - 1)
    uv = RadialFunction.on(g, u.values * v.values)
    assert lq_norm(DR21, uv, 1) <= lq_norm(DR21, u, p) * lq_norm(DR21, v, p2) * (1 + 1e-12)


def test_lq_region_and_errors():
    g = radial_grid(H3, 4.0, 256)
    f = RadialFunction.on(g, np.exp(-g.nodes))
    assert lq_norm(H3, f, np.inf, region=(1.0, 2.0)) == pytest.approx(
        np.exp(-g.nodes[g.nodes >= 1.0][0]))
    with pytest.raises(ValueError):
        lq_norm(H3, f, 0.5)
    with pytest.raises(ValueError):
        lq_norm(H3, f, 2, region=(5.0, 6.0))


def test_weak_l2_indicator_of_ball():
    g = radial_grid(H3, 3.0, 1024)
    f = RadialFunction.on(g, np.where(g.nodes <= 1.0, 1.0, 0.0))
    vol = float(np.sum(g.weights[g.nodes <= 1.0]))
    assert weak_l2_quasinorm(H3, f) == pytest.approx(math.sqrt(vol), rel=1e-14)
    assert vol == pytest.approx((math.sinh(2.0) / 2 - 1.0) / 2, rel=1e-3)


@given(c=st.floats(0.01, 100.0))
@settings(max_examples=25, deadline=None)
def test_weak_l2_homogeneous(c):
    g = radial_grid(DR21, 3.0, 256)
    f = RadialFunction.on(g, np.where(g.nodes < 1.5, 1.0 / (1 + g.nodes), 0.0))
    cf = RadialFunction.on(g, c * f.values)
    assert weak_l2_quasinorm(DR21, cf) == pytest.approx(c * weak_l2_quasinorm(DR21, f), rel=1e-12)


def test_weak_l2_rejects_truncated_tail():
    # t d_f(t)^(1/2) grows like e^{0.2 rho s} for e^{-0.8 rho s}, so the sup sits at the grid end
    g = radial_grid(DR21, 8.0, 512)
    f = RadialFunction.on(g, np.exp(-0.8 * DR21.rho * g.nodes))
    with pytest.raises(TailDominanceError):
        weak_l2_quasinorm(DR21, f)


# ---------------------------------------------------------------- transforms


def test_inversion_constants():
    assert inversion_constant(H3) == pytest.approx(2 / math.pi, rel=1e-12)
    assert inversion_constant(DR21) == pytest.approx(1 / math.pi, rel=1e-12)
    assert analytic_inversion_constant(H3) == pytest.approx(2 / math.pi, rel=1e-15)


def test_inverse_h3_closed_form():
    # f^ = e^{-l^2}: f(s) = C s e^{-s^2/4} sqrt(pi) / (4 sinh s)
    s = np.array([0.01, 0.3, 1.0, 2.5, 4.0, 6.0])
    f = inverse_sft(H3, heat_profile(), s)
    ref = (2 / math.pi) * math.sqrt(math.pi) * s * np.exp(-s ** 2 / 4) / (4 * np.sinh(s))
    assert np.max(np.abs(f.values - ref)) < 1e-12


def test_inverse_against_sine_transform_oracle():
    integrate = pytest.importorskip("scipy.integrate")
    s = 1.7
    val, _ = integrate.quad(lambda lam: lam * math.exp(-lam ** 2), 0, np.inf, weight="sin", wvar=s)
    ref = (2 / math.pi) * val / math.sinh(s)
    (v,) = inverse_sft(H3, heat_profile(), [s]).values
    assert v == pytest.approx(ref, abs=1e-12)


def test_forward_h3_closed_form():
    g = radial_grid(H3, 8.0, 1024)
    f = RadialFunction.on(g, np.exp(-g.nodes ** 2))
    lam = np.array([0.25, 0.5, 2.0, 5.0, 9.0])
    got = forward_sft(H3, f, lam)
    ref = math.sqrt(math.pi) / 2 * np.exp((1 - lam ** 2) / 4) * np.sin(lam / 2) / lam
    assert np.max(np.abs(got.values - ref)) < 1e-13
    assert got.tail_bound < 1e-20


def test_forward_tail_dominance():
    g = radial_grid(DR21, 3.0, 256)
    f = RadialFunction.on(g, np.exp(-0.5 * g.nodes))
    with pytest.raises(TailDominanceError):
        forward_sft(DR21, f, [1.0], tol=1e-6)


@pytest.mark.parametrize("params", [H3, DR21], ids=["H3", "DR21"])
def test_plancherel_and_round_trip(params):
    p = gaussian_profile(2.0, 0.5)
    g = radial_grid(params, 14.0, 2048)
    f = inverse_sft(params, p, g)
    assert lq_norm(params, f, 2) == pytest.approx(sobolev_norm(params, p, 0), rel=1e-9)
    lam = np.linspace(0.5, 4.0, 8)
    back = forward_sft(params, f, lam).values
    assert np.max(np.abs(back - p(lam))) < 1e-8


def test_case2_at_unit_frequency_value_at_origin():
    (v,) = inverse_sft(DR21, case2_profile(DR21, 1), [1e-5]).values
    assert v == pytest.approx(CASE2_N1_AT_ZERO, abs=1e-9)


def test_inverse_reports_nonconvergence():
    p = SpectralProfile(lambda lam: np.cos(40 * lam), (0.0, 30.0), Smoothness.COMPACT_BUMP, 10.0)
    with pytest.raises(NumericalFailure):
        inverse_sft(H3, p, [0.5, 1.0], max_refine=1, tol=1e-14)


def test_csv_round_trip():
    g = radial_grid(H3, 2.0, 64)
    f = RadialFunction.on(g, np.exp(-g.nodes) * (1 + 0.5j))
    text = f.to_csv(["space: RH(3)"])
    assert text.startswith("# space: RH(3)\ns_or_lambda,re,im,weight\n")
    back = RadialFunction.from_csv(text)
    assert np.array_equal(back.grid, f.grid)
    assert np.array_equal(back.values, f.values)
    assert np.array_equal(back.weights, f.weights)


# ---------------------------------------------------------------- Sobolev


def test_sobolev_closed_form_h3():
    # |c|^-2 = l^2 on H^3; int_0^inf l^2 e^{-2 l^2} dl = sqrt(2 pi) / 16
    assert sobolev_norm(H3, heat_profile(), 0) == pytest.approx(
        math.sqrt(2 / math.pi * math.sqrt(2 * math.pi) / 16), rel=1e-11)


@given(c=st.floats(0.1, 10.0), alpha=st.floats(0.0, 2.0), theta=st.floats(0, 2 * math.pi))
@settings(max_examples=25, deadline=None)
def test_sobolev_homogeneous_and_phase_invariant(c, alpha, theta):
    p = gaussian_profile(3.0, 0.4)
    base = sobolev_norm(DR21, p, alpha)
    assert sobolev_norm(DR21, p.scaled(c), alpha) == pytest.approx(c * base, rel=1e-10)
    assert sobolev_norm(DR21, p.scaled(np.exp(1j * theta)), alpha) == pytest.approx(base, rel=1e-10)


def test_sobolev_errors():
    with pytest.raises(ValueError):
        sobolev_norm(H3, heat_profile(), -0.1)
    slow = SpectralProfile(lambda lam: 1 / (1 + lam ** 2), (0.0, 50.0), Smoothness.SCHWARTZ, 1.0)
    with pytest.raises(ValueError):
        sobolev_norm(H3, slow, 1.0)


# ---------------------------------------------------------------- Euclidean side


def test_euclidean_constant():
    assert euclidean_constant(3) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert euclidean_constant(2) == pytest.approx(1 / math.pi ** 2, rel=1e-15)


def test_correspondence_is_identity_on_h3_and_round_trips():
    p = gaussian_profile(3.0, 0.3)
    lam = np.linspace(0.1, 5.5, 30)
    e = correspondence_to_euclidean(H3, p)
    assert np.max(np.abs(e(lam) - p(lam))) < 1e-15
    e = correspondence_to_euclidean(DR21, p)
    back = correspondence_from_euclidean(DR21, e)
    assert np.max(np.abs(back(lam) - p(lam))) < 1e-13
    with pytest.raises(ValueError):
        correspondence_to_euclidean(DR21, gaussian_profile(0.5, 0.5))


def test_euclidean_sobolev_h3_matches_alpha_zero():
    # both sides integrate |f^|^2 l^2 on H^3; the constants differ by C_cal / C_e = 4
    p = gaussian_profile(3.0, 0.3)
    e = correspondence_to_euclidean(H3, p)
    assert euclidean_sobolev_norm(3, e, 0) ** 2 * 4 == pytest.approx(
        sobolev_norm(H3, p, 0) ** 2, rel=1e-10)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
def test_euclidean_propagate_heat_oracle(t):
    # kernel 2 sin(x)/x, C_e = 1/(2 pi):
    # C_e int e^{-(1-it) l^2} 2 sin(l s)/(l s) l^2 dl = e^{-s^2/(4a)} / (4 sqrt(pi) a^{3/2}), a = 1 - it
    s = np.array([0.1, 0.8, 2.0, 3.5])
    got = euclidean_propagate(3, heat_profile(), t, s)
    a = 1 - 1j * t
    ref = np.exp(-s ** 2 / (4 * a)) / (4 * math.sqrt(math.pi) * a ** 1.5)
    assert np.max(np.abs(got.values - ref)) < 1e-11


def test_euclidean_propagate_weights():
    g = radial_grid(H3, 3.0, 128)
    f = euclidean_propagate(3, heat_profile(), 0.0, g)
    assert np.allclose(f.weights, g.quad_weights * g.nodes ** 2)
    assert np.sum(f.weights) == pytest.approx(9.0, rel=1e-12)


def test_uniform_grid_density_weights():
    s = np.linspace(0.5, 2.0, 7)
    g = uniform_grid(DR21, s)
    assert np.allclose(g.weights, g.quad_weights * density(DR21, s))
