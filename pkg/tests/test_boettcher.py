import cmath
import math

import numpy as np
import pytest

from newtonmating.angles import Angle
from newtonmating.boettcher import (
    Center,
    NotInBasin,
    UnresolvedLabeling,
    boettcher_internal,
    green_external,
    label_newton_basins,
    sphere_dist,
    trace_center_rays,
    trace_external_ray,
    trace_external_rays,
    trace_internal_ray,
)
from newtonmating.maps import INF, MapFamily

DBAS = MapFamily.dbas()
R2 = 1j / math.sqrt(2)


def _dist_to_polyline(z, pts):
    pts = np.asarray(pts)
    a, b = pts[:-1], pts[1:]
    ab = b - a
    s = np.clip(((z - a) * np.conj(ab)).real / np.maximum(np.abs(ab) ** 2, 1e-300), 0, 1)
    return float(np.min(np.abs(a + s * ab - z)))


# ------------------------------------------------------------ green / external


def test_green_asymptotics_and_bounded_points():
    z = 1e6 * cmath.exp(0.7j)
    assert green_external(DBAS, z) == pytest.approx(math.log(1e6), rel=1e-6)
    assert green_external(DBAS, 0) == 0.0
    a = 0.1 + 0.05j  # f_a^n(-a) -> 0 for small a
    assert green_external(MapFamily.cubic(a), -a) == 0.0


def test_green_functional_equation():
    rng = np.random.default_rng(0)
    for m in (DBAS, MapFamily.cubic(0.6 - 0.9j)):
        for z in rng.uniform(1.5, 3, 10) * np.exp(2j * np.pi * rng.uniform(size=10)):
            g = green_external(m, z)
            assert abs(green_external(m, m.f(z)) - 3 * g) < 1e-9


def test_green_rejects_newton():
    with pytest.raises(ValueError):
        green_external(MapFamily.newton(0.3j), 1.0)


def test_dbas_fixed_rays_land_at_zero():
    for t in (Angle(0), Angle(1, 2)):
        r = trace_external_ray(DBAS, t)
        assert r.landed and abs(r.landing) < 1e-6


def test_dbas_ray_one_third_lands_at_preimage_of_zero():
    # finite roots of z^3 + 3z/2 = 0, by numpy's polynomial solver
    pre = [z for z in np.roots([1, 0, 1.5, 0]) if abs(z) > 1e-9]
    for t in (Angle(1, 3), Angle(2, 3)):
        r = trace_external_ray(DBAS, t)
        assert r.landed
        assert min(abs(r.landing - z) for z in pre) < 1e-6
    assert trace_external_ray(DBAS, Angle(1, 3)).landing.imag > 0


def test_ray_potential_decreases():
    r = trace_external_ray(DBAS, Angle(1, 5))
    g = [green_external(DBAS, z) for z in r.points[:: max(len(r.points) // 20, 1)]]
    assert all(x > y for x, y in zip(g, g[1:]))


def test_ray_equivariance():
    m = MapFamily.cubic(0.6 - 0.9j)
    t = Angle(2, 7)
    r, r3 = trace_external_rays(m, [t, 3 * t])
    for z in r.points[8::8][:20]:
        assert _dist_to_polyline(complex(m.f(z)), r3.points) < 1e-6


def test_landing_stable_under_finer_steps():
    t = Angle(1, 9)
    a = trace_external_ray(DBAS, t)
    b = trace_external_ray(DBAS, t, substeps=16)
    assert abs(a.landing - b.landing) < max(a.err, 1e-6) * 10


def test_ray_json_fields():
    d = trace_external_ray(DBAS, Angle(1, 3)).to_json()
    assert set(d) == {"family", "basin", "angle", "points", "landing", "status", "err"}
    assert d["angle"] == "1/3" and d["status"] == "landed"


# ------------------------------------------------------------------ internal


@pytest.mark.parametrize("m,c", [(DBAS, R2), (MapFamily.cubic(0.6 - 0.9j), 0j),
                                  (MapFamily.newton(0.33j), 1 + 0j)])
def test_phi_vanishes_at_center(m, c):
    assert abs(Center(m, c).phi(c)) < 1e-15


def test_dbas_functional_equation():
    rng = np.random.default_rng(1)
    for z in R2 + 0.15 * rng.uniform(size=20) * np.exp(2j * np.pi * rng.uniform(size=20)):
        lhs = boettcher_internal(DBAS, "A2", DBAS.f(z))
        rhs = boettcher_internal(DBAS, "A2", z) ** 2
        assert abs(lhs - rhs) < 1e-9


def test_phi_inverse_round_trip():
    c = Center(DBAS, R2)
    for w in (0.05, 0.3 * cmath.exp(1j), 0.8 * cmath.exp(-2j), 0.95j):
        z = c.phi_inverse(w)
        assert abs(c.phi(z) - w) < 1e-9


def test_not_in_basin():
    with pytest.raises(NotInBasin):
        boettcher_internal(DBAS, "A2", 3.0)


def _local_series(m, c, order):
    """Taylor coefficients of phi at ``c`` from phi(F) = phi^2, solved order by order.

    With ``u = z - c``, ``F(c + u) - c = A u^2 g(u)`` and ``phi = A u psi(u)``,
    the equation becomes ``g(u) psi(A u^2 g(u)) = psi(u)^2``.
    """
    # Taylor coefficients of F at c by Cauchy integrals on a small circle
    n, rho = 64, 1e-2
    u = rho * np.exp(2j * np.pi * np.arange(n) / n)
    fc = np.fft.fft(m.f(c + u) - c) / n / rho ** np.arange(n)
    A = fc[2]
    g = (fc[2:2 + order + 1] / A)
    n1 = order + 1
    inner = np.convolve([0, 0, A], g)[:n1]

    def lhs(p):
        total, power = np.zeros(n1, complex), np.eye(1, n1, dtype=complex)[0]
        for j in range(n1):
            total += p[j] * power
            power = np.convolve(power, inner)[:n1]
        return np.convolve(g, total)[:n1]

    psi = np.zeros(n1, dtype=complex)
    psi[0] = 1
    for k in range(1, n1):
        # psi_k only enters the lhs at order >= k + 2, and psi^2 as 2 psi_k
        psi[k] = (lhs(psi)[k] - np.convolve(psi, psi)[k]) / 2
    return A, psi


def test_newton_root_basin_matches_local_series():
    m = MapFamily.newton(-0.2 + 0.7j)
    c = 1 + 0j
    A, psi = _local_series(m, c, 8)
    center = Center(m, c)
    assert center.A == pytest.approx(A, rel=1e-8)
    rng = np.random.default_rng(2)
    for u in 2e-3 * np.exp(2j * np.pi * rng.uniform(size=20)):
        series = A * u * np.polynomial.polynomial.polyval(u, psi)
        assert abs(center.phi(c + u) - series) < 1e-12 * abs(series) + 1e-15


def test_dbas_internal_ray_lands_at_zero():
    r = trace_internal_ray(DBAS, "A2", Angle(0))
    assert r.landed and abs(r.landing) < 1e-6


@pytest.mark.parametrize("lam", [-0.2 + 0.7j, 0.33332128724197535j])
def test_newton_ray_landing_pattern(lam):
    m = MapFamily.newton(lam)
    labels = label_newton_basins(lam)
    assert labels["B1"] == pytest.approx(-0.5 - lam)
    assert labels["B2"] == pytest.approx(-0.5 + lam)
    assert labels["B3"] == pytest.approx(1)
    zero = [trace_internal_ray(m, b, Angle(0), labels=labels) for b in ("B1", "B2", "B3")]
    assert all(r.landed and sphere_dist(r.landing, INF) < 1e-6 for r in zero)
    half = {b: trace_internal_ray(m, b, Angle(1, 2), labels=labels) for b in ("B1", "B2", "B3")}
    assert sphere_dist(half["B1"].landing, half["B2"].landing) < 1e-6
    assert sphere_dist(half["B3"].landing, half["B1"].landing) > 1e-3


def test_preimage_basin_ray_maps_to_parent_ray():
    m = MapFamily.newton(-0.2 + 0.7j)
    child = trace_internal_ray(m, "W3", Angle(1, 4))
    parent = trace_internal_ray(m, "B3", Angle(1, 4))
    for z in child.points[5::5][:10]:
        assert _dist_to_polyline(complex(m.f(z)), parent.points) < 1e-6


def test_labeling_is_stable_under_refinement():
    lam = -0.2 + 0.7j
    assert label_newton_basins(lam) == label_newton_basins(lam, npts=48)


def test_labeling_fails_outside_fundamental_domain():
    # at a real parameter the two co-landing 1/2 rays are not unique
    with pytest.raises(UnresolvedLabeling):
        label_newton_basins(0.1 + 0j)


def test_center_rays_batch():
    rays = trace_center_rays(Center(DBAS, R2), [Angle(0), Angle(1, 2)])
    assert [str(r.angle) for r in rays] == ["0/1", "1/2"]
    assert all(r.landed for r in rays)
