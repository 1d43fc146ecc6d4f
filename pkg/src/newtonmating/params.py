"""Parameter planes of the cubic family and of the Newton family.

Both principal hyperbolic components are parametrised by where the free
critical value sits in Böttcher coordinates of the basin it falls into:
``Phi0(a) = phi_a(f_a(-a))`` and ``Phi_minus(lam) = phi_B1(N(0))``. Their
boundaries are traced by continuation towards the unit circle; cusps of the
attached Mandelbrot copies sit at angles ``t`` whose half is periodic under
doubling.
"""
from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .angles import Angle, doubling_period
from .boettcher import Center, trace_center_rays
from .maps import MapFamily


class NotInComponent(ValueError):
    pass


class ContinuationFailure(RuntimeError):
    def __init__(self, msg, last_good=None):
        super().__init__(msg)
        self.last_good = last_good


class NoConvergence(RuntimeError):
    pass


class WrongBasin(RuntimeError):
    pass


class UnsupportedParameter(ValueError):
    pass


@dataclass(frozen=True)
class ParamPoint:
    family: str  # cubic | newton
    value: complex
    region: str = "other"  # H0, dH0, copy, H-, dH-, copyN, other
    t: Angle | None = None
    k: int | None = None
    m: int | None = None
    err: float = 0.0
    approximate: bool = False

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "value": [self.value.real, self.value.imag],
            "region": self.region,
            "t": None if self.t is None else str(self.t),
            "k": self.k,
            "m": self.m,
            "err": self.err,
            "approximate": self.approximate,
        }


# ------------------------------------------------------------- symmetries


def reflect_cubic(a: complex) -> complex:
    """Representative of ``a`` in the closed quadrant Re >= 0, Im <= 0.

    ``f_a`` and ``f_-a`` are affinely conjugate and ``f_conj(a)`` is the
    complex conjugate of ``f_a``.
    """
    a = complex(a)
    if a.real < 0:
        a = -a
    if a.imag > 0:
        a = a.conjugate()
    return a


def _newton_images(lam: complex):
    """All parameters giving maps conjugate to ``N_lam`` (Möbius or antiholomorphic)."""
    roots = MapFamily.newton(lam).roots()
    out = []
    for j in range(3):
        others = [roots[i] for i in range(3) if i != j]
        mid = (others[0] + others[1]) / 2
        alpha = 1.5 / (roots[j] - mid)
        for sign in (1, -1):
            new = sign * (alpha * (others[0] - mid))
            out.append(new)
            out.append(new.conjugate())
    return out


def in_fundamental_domain(lam: complex, slack: float = 1e-12) -> bool:
    lam = complex(lam)
    return (abs(lam - 0.5) < 1 + slack and abs(lam + 0.5) < 1 + slack
            and lam.imag > -slack and lam.real <= slack)


def reflect_newton(lam: complex) -> complex:
    """Representative of ``lam`` in the closure of the fundamental domain Omega_-."""
    cands = _newton_images(lam)
    inside = [c for c in cands if in_fundamental_domain(c)]
    if not inside:
        raise UnsupportedParameter(f"no representative of {lam} in the fundamental domain")
    return min(inside, key=lambda c: (round(-c.imag, 12), round(c.real, 12)))


# ------------------------------------------------------ Böttcher positions


def phi0(a: complex):
    """``phi_a(f_a(-a))`` in the basin of 0, or None if the orbit does not converge."""
    m = MapFamily.cubic(a)
    return Center(m, 0j).phi(m.f(-complex(a)))


def phi_minus(lam: complex):
    """``phi_B1(N(0))`` in the basin of ``-1/2 - lam``, or None."""
    m = MapFamily.newton(lam)
    return Center(m, -0.5 - complex(lam)).phi(m.f(0j))


def critical_value_position(p: ParamPoint) -> complex:
    val = phi0(p.value) if p.family == "cubic" else phi_minus(p.value)
    if val is None or abs(val) >= 1:
        raise NotInComponent(f"{p.family} parameter {p.value} is not in the principal component")
    return val


# ----------------------------------------------------------- boundaries


def _seed(family: str, r: float, t: float) -> complex:
    # leading terms: Phi0(a) ~ 3 a^4 / 4 and Phi_minus(-1/2 + e) ~ 3 e^4
    if family == "cubic":
        return (4 * r / 3) ** 0.25 * cmath.exp(1j * (2 * math.pi * t - 2 * math.pi) / 4)
    return -0.5 + (r / 3) ** 0.25 * cmath.exp(1j * 2 * math.pi * t / 4)


def _solve_phi(Phi, target: complex, q: complex, tol: float = 1e-13):
    for _ in range(40):
        v = Phi(q)
        if v is None:
            return None
        h = 1e-7 * max(abs(q), 1e-3)
        vp, vm = Phi(q + h), Phi(q - h)
        if vp is None or vm is None:
            return None
        dq = (v - target) / ((vp - vm) / (2 * h))
        q -= dq
        if abs(dq) < tol * max(1.0, abs(q)):
            return q
    return None


def inverse_phi(family: str, w: complex) -> complex:
    """The parameter in the principal component whose critical value sits at ``w``."""
    t = (cmath.phase(w) / (2 * math.pi)) % 1
    path = _continue(family, t, abs(w))
    return path[-1][1]


def _continue(family: str, t: float, r_end: float):
    Phi = phi0 if family == "cubic" else phi_minus
    r = 1e-3
    q = _seed(family, r, t)
    q = _solve_phi(Phi, r * cmath.exp(2j * math.pi * t), q)
    if q is None:
        raise ContinuationFailure("could not start continuation")
    path = [(r, q)]
    while r < r_end:
        rn = r * 1.3 if r < 0.5 else 1 - (1 - r) * 0.7
        rn = min(rn, r_end)
        qn = _solve_phi(Phi, rn * cmath.exp(2j * math.pi * t), q)
        if qn is None:
            break
        r, q = rn, qn
        path.append((r, q))
    return path


def boundary_param(family: str, t, r_end: float = 1 - 1e-9, refine: bool = True) -> ParamPoint:
    """Boundary point ``a(t)`` or ``lam(t)`` by continuation of ``Phi^{-1}(r e^{2 pi i t})``.

    The error estimate is the size of the last continuation step; when the
    continuation stalls before ``r_end`` the last good point is returned with
    that (larger) estimate. With ``refine`` the end point is polished by the
    exact equation the boundary point satisfies (see ``_polish_boundary``).
    """
    t = Angle.of(t)
    path = _continue(family, float(t), r_end)
    if len(path) < 2:
        raise ContinuationFailure("continuation collapsed at the first step",
                                  path[-1][1] if path else None)
    (_, q1), (_, q2) = path[-2], path[-1]
    err = abs(q2 - q1)
    region = "dH0" if family == "cubic" else "dH-"
    k = _cusp_period(t)
    if k is not None:
        region = "cusp" if family == "cubic" else "cuspN"
    if refine:
        polished = _polish_boundary(family, t, q2, k)
        if polished is not None and abs(polished - q2) < 100 * err + 1e-6:
            q2, err = polished, 1e-12
    return ParamPoint(family, q2, region, t, k, None, err)


def _map(family: str, x: complex) -> MapFamily:
    return MapFamily.cubic(x) if family == "cubic" else MapFamily.newton(x)


def _orbit(m: MapFamily, z, n: int):
    for _ in range(n):
        z = m.f(z)
    return z


def _polish_boundary(family: str, t: Angle, x0: complex, k):
    """Solve the exact equation satisfied by a boundary point.

    At a cusp (``t/2`` of period ``k``) the map has a parabolic ``k``-cycle of
    multiplier 1; otherwise the free critical point lands on the
    preperiodic ray of angle ``t/2`` and is therefore preperiodic itself.
    """
    try:
        if k is not None:
            return _polish_parabolic(family, x0, k)
        return _polish_misiurewicz(family, t, x0)
    except (ValueError, ZeroDivisionError, OverflowError, np.linalg.LinAlgError):
        return None


def _polish_parabolic(family: str, x0: complex, k: int):
    m = _map(family, x0)
    # the critical orbit lingers near the parabolic cycle just inside the component
    sinks = [0j] if family == "cubic" else m.roots()
    z = free_critical_point(m)
    best, best_d = z, math.inf
    for _ in range(2000):
        z = m.f(z)
        if min(abs(z - c) for c in sinks) < 0.05:
            break
        d = abs(_orbit(m, z, k) - z)
        if d < best_d:
            best, best_d = z, d
    def F(v):
        z, x = v
        mm = _map(family, x)
        w, d = z, 1
        for _ in range(k):
            d *= mm.df(w)
            w = mm.f(w)
        return np.array([w - z, d - 1])
    v = np.array([best, x0], dtype=complex)
    for _ in range(50):
        fv = F(v)
        J = np.empty((2, 2), dtype=complex)
        for j in range(2):
            h = np.zeros(2, dtype=complex)
            h[j] = 1e-7
            J[:, j] = (F(v + h) - F(v - h)) / 2e-7
        dv = np.linalg.solve(J, fv)
        v = v - dv
        if np.max(np.abs(dv)) < 1e-15:
            break
    if np.max(np.abs(F(v))) > 1e-9:
        return None
    return complex(v[1])


def _doubling_split(s: Angle):
    """Preperiod and period of ``s`` under doubling."""
    seen = {}
    x, i = s, 0
    while x not in seen:
        seen[x] = i
        x, i = x * 2, i + 1
    return seen[x], i - seen[x]


def _polish_misiurewicz(family: str, t: Angle, x0: complex):
    j, p = _doubling_split(t.half())
    hits_zero = p == 1 and (t.half() * 2 ** j) == Angle(0)
    def g(x):
        m = _map(family, x)
        if family == "newton" and hits_zero:
            # angle-0 rays land at infinity: the orbit must fall on a pole
            z = _orbit(m, 0j, j - 1)
            return 3 * z * z + m.p
        z = _orbit(m, free_critical_point(m), j)
        return _orbit(m, z, p) - z
    x = x0
    for _ in range(60):
        h = 1e-7
        dx = g(x) / ((g(x + h) - g(x - h)) / (2 * h))
        x -= dx
        if abs(dx) < 1e-15:
            break
    if abs(g(x)) > 1e-9:
        return None
    return x


def _cusp_period(t: Angle):
    """Doubling period of ``t/2`` if it is at least 2, else None."""
    s = t.half()
    k = doubling_period(s)
    if k is None or k < 2:
        return None
    return k


def in_T(t) -> bool:
    return _cusp_period(Angle.of(t)) is not None


def cusp_angles(max_den: int):
    """All ``(t, k)`` with denominator of ``t`` at most ``max_den`` and ``t/2`` of period ``k >= 2``.

    The two copies of the cubic plane rooted at the parabolic parameters
    ``+-4i/3`` sit at ``t = 0`` (a period-1 angle), so the condition
    ``k >= 2`` already removes them.
    """
    out = []
    for q in range(1, max_den + 1):
        for p in range(q):
            if math.gcd(p, q) != 1:
                continue
            t = Angle(p, q)
            k = _cusp_period(t)
            if k is not None:
                out.append((t, k))
    return out


# -------------------------------------------------------------- centers


def _critical_orbit_residual(family: str, x: complex, n: int) -> complex:
    if family == "cubic":
        m = MapFamily.cubic(x)
        z = -x
        for _ in range(n):
            z = m.f(z)
        return z + x
    m = MapFamily.newton(x)
    z = 0j
    for _ in range(n):
        z = m.f(z)
    return z


def _newton_param(family: str, x: complex, n: int):
    for _ in range(60):
        try:
            g = _critical_orbit_residual(family, x, n)
            h = 1e-7
            dg = (_critical_orbit_residual(family, x + h, n)
                  - _critical_orbit_residual(family, x - h, n)) / (2 * h)
        except ValueError:
            return None
        if not cmath.isfinite(g) or not cmath.isfinite(dg) or dg == 0:
            return None
        dx = g / dg
        x -= dx
        if abs(dx) < 1e-15 * max(1, abs(x)):
            break
    return x


def _exact_period(family: str, x: complex, n: int) -> int:
    """Smallest ``p`` with the critical point returning to itself within 1e-8."""
    for p in range(1, n + 1):
        if abs(_critical_orbit_residual(family, x, p)) < 1e-8:
            return p
    return 0


def free_critical_point(m: MapFamily) -> complex:
    return -m.param if m.tag == "cubic" else 0j


def _periodic_point_near(m: MapFamily, z: complex, k: int):
    """Newton's method for ``f^k(w) = w`` started at ``z``; None if it wanders off."""
    w = complex(z)
    for _ in range(50):
        v, dv = w, 1
        for _ in range(k):
            dv *= m.df(v)
            v = m.f(v)
        if not (cmath.isfinite(v) and cmath.isfinite(dv)) or dv == 1:
            return None
        step = (v - w) / (dv - 1)
        w -= step
        if abs(step) < 1e-14 * max(1, abs(w)):
            break
    return w if abs(w - z) < 1e-2 else None


def _attached_at(family: str, x: complex, t: Angle, k: int) -> bool:
    """Does the ray at angle ``t/2`` of the principal basin land on the critical cycle?

    Near a cusp the landing point is only weakly repelling and rays creep
    towards it, so both rays are followed as far as they go and their ends
    snapped onto the nearby point of period dividing ``k``. The snapped end
    of the ``t/2`` ray must lie on the orbit of the snapped end of the
    angle-0 internal ray of the free critical point's component.
    """
    m = MapFamily.cubic(x) if family == "cubic" else MapFamily.newton(x)
    base = 0j if family == "cubic" else -0.5 - x
    ray = trace_center_rays(Center(m, base), [t.half()])[0]
    comp = Center(m, free_critical_point(m), k)
    inner = trace_center_rays(comp, [Angle(0)])[0]
    if "crashed-on-precritical" in (ray.status, inner.status):
        return False
    beta = _periodic_point_near(m, ray.points[-1], k)
    root = _periodic_point_near(m, inner.points[-1], k)
    if beta is None or root is None:
        return False
    for _ in range(k):
        if abs(root - beta) < 1e-8:
            return True
        root = m.f(root)
    return False


def center_in_copy(family: str, t, m: int = 1, residual_tol: float = 1e-10) -> ParamPoint:
    """The center of period ``k*m`` nearest the cusp of the copy attached at angle ``t``.

    Seeds are spread on rings around the cusp, pushed away from the principal
    component; candidate roots are kept only if the free critical point has
    exact period ``k*m``, stays out of the principal basin and the copy's
    combinatorics (landing of the ray at angle ``t/2``) check out.
    """
    t = Angle.of(t)
    k = _cusp_period(t)
    if k is None:
        raise UnsupportedParameter(f"t = {t} is not a cusp angle")
    n = k * m
    cusp = boundary_param(family, t).value
    inner = inverse_phi(family, 0.98 * cmath.exp(2j * math.pi * float(t)))
    outward = (cusp - inner) / abs(cusp - inner)
    found = []
    for rho in (0.004, 0.01, 0.02, 0.04, 0.08):
        for j in range(12):
            seed = cusp + rho * outward * cmath.exp(1j * math.pi * (j / 12 - 0.5) * 0.9)
            x = _newton_param(family, seed, n)
            if x is None:
                continue
            if abs(_critical_orbit_residual(family, x, n)) > residual_tol:
                continue
            if any(abs(x - y) < 1e-9 for y in found):
                continue
            found.append(x)
        if found:
            break
    if not found:
        raise NoConvergence(f"no center of period {n} found near the cusp of {t}")
    found.sort(key=lambda x: abs(x - cusp))
    for x in found:
        if _exact_period(family, x, n) != n:
            continue
        if family == "cubic" and phi0(x) is not None:
            continue
        if family == "newton" and phi_minus(x) is not None:
            continue
        if not _attached_at(family, x, t, k):
            continue
        res = abs(_critical_orbit_residual(family, x, n))
        region = "copy" if family == "cubic" else "copyN"
        return ParamPoint(family, x, region, t, k, m, res)
    raise WrongBasin(f"roots near the cusp of {t} do not realize the copy's combinatorics")


# -------------------------------------------------------- correspondence


def _in_excluded_copy(a: complex) -> bool:
    """True when ``f_a`` has a non-repelling finite fixed point besides 0.

    That is the copy rooted at the parabolic parameters ``+-4i/3``.
    """
    a = complex(a)
    disc = cmath.sqrt(2.25 * a * a + 4)
    for x in ((-1.5 * a + disc) / 2, (-1.5 * a - disc) / 2):
        if abs(x * x + 2) <= 1 + 1e-9:
            return True
    return False


def correspondence(p: ParamPoint) -> ParamPoint:
    """Transport a cubic parameter on the computable skeleton to the Newton plane.

    Cusps go to cusps, centers to centers of the same ``(t, k, m)`` and
    boundary points ``a(t)`` with ``t`` outside the cusp set to ``lam(t)``.
    """
    if p.family != "cubic":
        raise UnsupportedParameter("correspondence takes cubic parameters")
    if _in_excluded_copy(p.value):
        raise UnsupportedParameter("parameter lies in a copy rooted at +-4i/3")
    if p.region in ("cusp", "dH0"):
        if p.t is None:
            raise UnsupportedParameter("boundary points need their angle")
        return boundary_param("newton", p.t)
    if p.region == "copy":
        if p.m != 1:
            # several centers share (t, k, m) once m > 1; matching them needs
            # the straightened combinatorics, which is not computed
            c = center_in_copy("newton", p.t, p.m)
            return replace(c, approximate=True)
        return center_in_copy("newton", p.t, p.m)
    raise UnsupportedParameter(f"region {p.region!r} is outside the supported skeleton")


# ---------------------------------------------------------------- tables


def cusp_table(max_den: int):
    rows = []
    for t, k in cusp_angles(max_den):
        a = boundary_param("cubic", t).value
        lam = boundary_param("newton", t).value
        rows.append({"t": str(t), "k": k, "a": [a.real, a.imag], "lambda": [lam.real, lam.imag]})
    return rows


def center_table(pairs):
    rows = []
    for t, m in pairs:
        a = center_in_copy("cubic", t, m)
        lam = center_in_copy("newton", t, m)
        rows.append({"t": str(Angle.of(t)), "m": m, "k": a.k,
                     "a": [a.value.real, a.value.imag],
                     "lambda": [lam.value.real, lam.value.imag]})
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    flat = []
    for r in rows:
        fr = {}
        for key, v in r.items():
            if isinstance(v, list):
                fr[key + "_re"], fr[key + "_im"] = v
            else:
                fr[key] = v
        flat.append(fr)
    w = csv.DictWriter(buf, fieldnames=list(flat[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(flat)
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps(rows, indent=2, sort_keys=True)
