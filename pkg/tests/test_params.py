import cmath
import json
import math

import numpy as np
import pytest

from newtonmating import params
from newtonmating.angles import Angle
from newtonmating.boettcher import Center, trace_center_rays
from newtonmating.maps import MapFamily
from newtonmating.puzzle import small_julia_member
from newtonmating.suites import brute_force_cusps

A_STAR = 1.0017397270698083 - 0.5193559013447667j
LAM_STAR = 0.33332128724197535j


@pytest.fixture(scope="module")
def centers():
    return params.center_in_copy("cubic", "2/3"), params.center_in_copy("newton", "2/3")


# ----------------------------------------------------------- symmetries


def test_reflect_cubic_lands_in_quadrant():
    for a in (1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j):
        assert params.reflect_cubic(a) == 1 - 1j


def test_reflect_newton_fixes_fundamental_domain_points():
    lam = -0.2 + 0.7j
    assert params.in_fundamental_domain(lam)
    assert params.reflect_newton(lam) == pytest.approx(lam)
    assert params.reflect_newton(lam.conjugate()) == pytest.approx(lam)


def test_reflect_newton_relabels_roots():
    # swapping the roles of the roots keeps the root set up to affine conjugacy
    lam = 0.9 + 0.3j
    rep = params.reflect_newton(lam)
    assert params.in_fundamental_domain(rep)
    r0 = sorted(MapFamily.newton(lam).roots(), key=abs)
    r1 = MapFamily.newton(rep).roots()

    def shape(rs):
        d = sorted(abs(x - y) for i, x in enumerate(rs) for y in rs[i + 1:])
        return np.array(d) / d[-1]

    assert shape(r0) == pytest.approx(shape(r1), abs=1e-12)


# ------------------------------------------------------ critical values


def test_critical_value_small_near_center():
    for a in (0.01, 0.02j, 0.015 - 0.01j):
        p = params.ParamPoint("cubic", a, "H0")
        assert abs(params.critical_value_position(p)) < 0.1


def test_newton_principal_component_near_minus_half():
    # 0 sits in the basin of -1/2 - lam when lam is close to -1/2
    lam = -0.45 + 0.05j
    v = params.critical_value_position(params.ParamPoint("newton", lam, "H-"))
    assert abs(v) < 1


def test_critical_value_grows_towards_boundary():
    t = 0.3
    radii = (0.3, 0.6, 0.9, 0.99)
    vals = [abs(params.phi0(params.inverse_phi("cubic", r * cmath.exp(2j * math.pi * t))))
            for r in radii]
    assert vals == pytest.approx(radii, abs=1e-9)
    assert all(x < y for x, y in zip(vals, vals[1:]))


def test_outside_component_raises():
    with pytest.raises(params.NotInComponent):
        params.critical_value_position(params.ParamPoint("cubic", A_STAR, "copy"))


# ------------------------------------------------------------ boundary


@pytest.mark.parametrize("family", ["cubic", "newton"])
@pytest.mark.parametrize("t", ["1/3", "2/3", "2/7", "1/5"])
def test_boundary_argument_consistency(family, t):
    inner = params.boundary_param(family, t, r_end=1 - 1e-4, refine=False)
    phi = params.phi0 if family == "cubic" else params.phi_minus
    w = phi(inner.value)
    assert abs(abs(w) - (1 - 1e-4)) < 1e-8
    diff = cmath.phase(w * cmath.exp(-2j * math.pi * Angle.of(t).as_fraction()))
    assert abs(diff) < 1e-5


def _period_two_multipliers(a):
    """Multipliers of the 2-cycles of ``z^3 + 1.5 a z^2``, from the polynomial ``f(f(z)) - z``."""
    f = np.array([1, 1.5 * a, 0, 0], dtype=complex)
    ff = np.polyval(f, np.poly1d(f)).coeffs.astype(complex)
    ff[-2] -= 1
    fix = np.polysub(f, [1, 0])
    quot, _ = np.polydiv(ff, fix)
    df = np.polyder(f)
    out = []
    for z in np.roots(quot):
        out.append(np.polyval(df, z) * np.polyval(df, np.polyval(f, z)))
    return out


def test_cubic_cusp_has_parabolic_two_cycle():
    a = params.boundary_param("cubic", "2/3")
    assert a.region == "cusp" and a.k == 2
    assert min(abs(m - 1) for m in _period_two_multipliers(a.value)) < 1e-5


def test_non_cusp_angle_is_plain_boundary():
    assert params.boundary_param("cubic", "1/3").region == "dH0"
    assert params.boundary_param("newton", "1/3").region == "dH-"


def test_newton_boundary_ray_lands_on_critical_point():
    # at lam(1/3) the critical point 0 is on the boundary of the principal basin
    lam = params.boundary_param("newton", "1/3").value
    assert lam.real == pytest.approx(0, abs=1e-12)
    m = MapFamily.newton(lam)
    ray = trace_center_rays(Center(m, -0.5 - lam), [Angle(1, 6)])[0]
    assert ray.landed and abs(ray.landing) < 1e-4


def test_excluded_copies_at_parabolic_fixed_point():
    for a in (4j / 3, -4j / 3):
        m = MapFamily.cubic(a)
        # z^2 + 3a z/2 - 1 has the double root -3a/4 exactly when a = +-4i/3
        z = -0.75 * a
        assert abs(m.f(z) - z) < 1e-15 and abs(m.df(z) - 1) < 1e-15
        with pytest.raises(params.UnsupportedParameter):
            params.correspondence(params.ParamPoint("cubic", a, "dH0", Angle(0)))


# ---------------------------------------------------------------- cusps


def test_cusp_angle_examples():
    table = dict(params.cusp_angles(7))
    assert table[Angle(2, 3)] == 2
    assert table[Angle(2, 7)] == 3
    assert Angle(0) not in table
    assert params.in_T("2/3") and not params.in_T("1/3")


def test_cusp_angles_match_brute_force():
    assert sorted(params.cusp_angles(2 ** 10 - 1)) == sorted(brute_force_cusps(2 ** 10 - 1))


# --------------------------------------------------------------- centers


def test_cubic_center_is_a_root_of_the_period_two_equation(centers):
    # f(-a) = a^3/2, f(a^3/2) = a^9/8 + 3a^7/8; setting that to -a gives a^8 + 3a^6 + 8 = 0
    a, _ = centers
    roots = np.roots([1, 0, 3, 0, 0, 0, 0, 0, 8])
    assert min(abs(roots - a.value)) < 1e-12
    assert a.value == pytest.approx(A_STAR, abs=1e-12)
    assert (a.k, a.m, a.region) == (2, 1, "copy")
    assert a.err < 1e-10


def test_newton_center_is_a_root_of_the_period_two_equation(centers):
    # N(0) = -q/p and N(w) = 0 iff 2w^3 = q, so 2 q^2 = -p^3 with u = lam^2
    _, lam = centers
    lhs = 2 * np.polymul([1, -0.25], [1, -0.25])
    rhs = np.polymul(np.polymul([1, 0.75], [1, 0.75]), [1, 0.75])
    u = np.roots(np.polysub(lhs, rhs))
    assert min(abs(u - lam.value ** 2)) < 1e-12
    assert lam.value == pytest.approx(LAM_STAR, abs=1e-12)
    assert lam.err < 1e-10


def test_centers_are_renormalizable(centers):
    a, lam = centers
    m = MapFamily.cubic(a.value)
    assert small_julia_member(m, 2, -a.value)
    m = MapFamily.newton(lam.value)
    assert small_julia_member(m, 2, 0j)


@pytest.mark.parametrize("family", ["cubic", "newton"])
@pytest.mark.parametrize("t,k", [("2/5", 4), ("2/7", 3), ("6/7", 3)])
def test_centers_near_slowly_repelling_roots(family, t, k):
    # the copy's root point is barely repelling at these centers
    c = params.center_in_copy(family, t)
    assert c.k == k and c.err < 1e-10
    assert abs(c.value - params.boundary_param(family, t).value) < 0.05
    m = MapFamily.cubic(c.value) if family == "cubic" else MapFamily.newton(c.value)
    orbit = [params.free_critical_point(m)]
    for _ in range(k):
        orbit.append(m.f(orbit[-1]))
    assert abs(orbit[-1] - orbit[0]) < 1e-10
    assert all(abs(z - orbit[0]) > 1e-6 for z in orbit[1:-1])


def test_center_rejects_non_cusp_angle():
    with pytest.raises(params.UnsupportedParameter):
        params.center_in_copy("cubic", "1/3")


# -------------------------------------------------------- correspondence


def test_correspondence_cusp_to_cusp():
    img = params.correspondence(params.boundary_param("cubic", "2/3"))
    ref = params.boundary_param("newton", "2/3")
    assert img.family == "newton" and img.region == "cuspN"
    assert img.value == pytest.approx(ref.value, abs=1e-12)


def test_correspondence_center_to_center(centers):
    a, lam = centers
    img = params.correspondence(a)
    assert img.value == pytest.approx(lam.value, abs=1e-12)
    assert (img.k, img.m) == (a.k, a.m) and not img.approximate


def test_correspondence_boundary_outside_cusp_set():
    img = params.correspondence(params.boundary_param("cubic", "1/3"))
    assert img.value == pytest.approx(0.16025668051905054j, abs=1e-10)


def test_correspondence_injective_on_cusps():
    imgs = [params.correspondence(params.boundary_param("cubic", t)).value
            for t, _ in params.cusp_angles(7)]
    for i, x in enumerate(imgs):
        for y in imgs[i + 1:]:
            assert abs(x - y) > 1e-8


def test_correspondence_rejects_newton_input():
    with pytest.raises(params.UnsupportedParameter):
        params.correspondence(params.ParamPoint("newton", LAM_STAR, "copyN"))


# --------------------------------------------------------------- tables


def test_tables_serialize():
    rows = params.center_table([("2/3", 1)])
    assert rows[0]["k"] == 2
    back = json.loads(params.rows_to_json(rows))
    assert back[0]["a"] == pytest.approx([A_STAR.real, A_STAR.imag], abs=1e-12)
    csv_text = params.rows_to_csv(rows)
    assert csv_text.splitlines()[0] == "t,m,k,a_re,a_im,lambda_re,lambda_im"
