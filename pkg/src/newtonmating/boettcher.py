"""Böttcher coordinates, Green's function and ray tracing.

External rays of the polynomial families are traced by potential-level
continuation: the point of potential ``g`` on the ray of angle ``t`` solves
``f^n(z) = phi^{-1}(exp(3^n g + 2 pi i 3^n t))`` with ``n`` large enough for
the right-hand side to sit where the Böttcher map is a near-identity.

Internal rays are traced level by level with inverse branches: the segment
of the ray of angle ``s`` between internal radii ``rho^(1/2)`` and
``rho^(1/4)`` is the lift of the segment of angle ``2s`` one level down.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .angles import Angle
from .maps import INF, MapFamily, SpherePoint, chordal

LANDING_TOL = 1e-7
PRECRITICAL_TOL = 1e-9
MAX_DEPTH = 60
ESCAPE_RADIUS_LOG = math.log(1e3)

DBAS_BASINS = ("A2", "A3", "inf")
CUBIC_BASINS = ("A1", "A1'", "inf")
NEWTON_BASINS = ("B1", "B2", "B3", "W1", "W2", "W3")


class NotInBasin(ValueError):
    pass


class BranchAmbiguity(RuntimeError):
    pass


class UnresolvedLabeling(RuntimeError):
    pass


def sphere_dist(z, w):
    """Half the chordal distance: Euclidean near 0, ``|1/z - 1/w|`` near infinity."""
    return chordal(z, w) / 2


@dataclass
class RayTrace:
    family: MapFamily
    basin: str  # "external" or a basin label
    angle: Angle
    points: np.ndarray  # complex, decreasing potential; inf encodes infinity
    landing: complex | None
    status: str  # landed | truncated | crashed-on-precritical
    err: float
    levels: list = field(default_factory=list)  # indices of level points in ``points``

    def sphere_points(self):
        return [SpherePoint.of(z) for z in self.points]

    @property
    def landed(self) -> bool:
        return self.status == "landed"

    def to_json(self) -> dict:
        pts = []
        for z in self.points:
            z = complex(z)
            pts.append([z.real, z.imag] if cmath.isfinite(z) else None)
        land = None
        if self.landing is not None:
            land = SpherePoint.of(self.landing).to_json()
        return {
            "family": self.family.label(),
            "basin": self.basin,
            "angle": str(self.angle),
            "points": pts,
            "landing": land,
            "status": self.status,
            "err": self.err,
        }


# ---------------------------------------------------------------- external


def _poly_coeffs(m: MapFamily):
    if not m.is_polynomial:
        raise ValueError("external rays exist for polynomial families only")
    return m._poly()


def green_external(m: MapFamily, z, max_iter: int = 200) -> float:
    """Escape rate ``lim log|f^n z| / 3^n``; 0 when the orbit stays bounded."""
    _poly_coeffs(m)
    z = SpherePoint.of(z).to_complex()
    if not cmath.isfinite(z):
        return math.inf
    scale = 1.0
    for _ in range(max_iter):
        az = abs(z)
        if az > 1e12:
            # log|f(z)| = 3 log|z| + O(1/|z|); use the asymptotic tail
            c2, c1 = m._poly()
            corr = math.log(abs(1 + c2 / z + c1 / (z * z)))
            return scale * (math.log(az) + corr / 2)
        z = m.f(z)
        scale /= 3
    return 0.0


def boettcher_external(m: MapFamily, z):
    """Böttcher coordinate at infinity, valid where ``|z|`` is large (vectorised)."""
    c2, c1 = _poly_coeffs(m)
    z = np.asarray(z, dtype=complex)
    out = z.copy()
    w = z.copy()
    k = 1 / 3
    for _ in range(60):
        fac = 1 + c2 / w + c1 / (w * w)
        out = out * fac ** k
        if np.all(np.abs(fac - 1) * k < 1e-17):
            break
        w = w ** 3 * fac
        k /= 3
        if np.all(np.abs(w) > 1e100):
            break
    return out if out.ndim else complex(out)


def _inverse_boettcher_external(m: MapFamily, w):
    """Solve ``phi(z) = w`` for ``|w|`` large (vectorised over ``w``)."""
    c2, _ = _poly_coeffs(m)
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    z = w - c2 / 3
    for _ in range(4):
        phi = boettcher_external(m, z)
        h = 1e-7 * np.abs(z)
        dphi = (boettcher_external(m, z + h) - phi) / h
        z = z - (phi - w) / dphi
    return z


def _finite_critical(m: MapFamily):
    if m.tag == "dbas":
        r = 1j / math.sqrt(2)
        return np.array([r, -r])
    if m.tag == "cubic":
        return np.array([0j, -m.param])
    return np.array(m.roots() + [0j])


def _iterate_with_derivative(m: MapFamily, z, n: int):
    z = np.array(z, dtype=complex)
    d = np.ones_like(z)
    crit = _finite_critical(m)
    near = np.full(z.shape, np.inf)
    for _ in range(n):
        near = np.minimum(near, np.min(np.abs(z[..., None] - crit), axis=-1))
        d = d * m.df(z)
        z = m.f(z)
    return z, d, near


def trace_external_rays(m: MapFamily, angles, target_potential: float = 0.0,
                        substeps: int = 8, landing_tol: float = LANDING_TOL,
                        max_depth: int = MAX_DEPTH):
    """Trace several external rays at once; returns a list of :class:`RayTrace`."""
    angles = [Angle.of(t) for t in angles]
    n_rays = len(angles)
    g0 = ESCAPE_RADIUS_LOG
    fr = [t.as_fraction() for t in angles]

    def target(n, g):
        ang = np.array([float((3 ** n * f) % 1) for f in fr])
        w = np.exp(3 ** n * g) * np.exp(2j * np.pi * ang)
        return _inverse_boettcher_external(m, w)

    z = target(0, g0)
    paths = [[complex(v)] for v in z]
    levels = [[0] for _ in range(n_rays)]
    status = ["truncated"] * n_rays
    landing = [None] * n_rays
    err = [math.inf] * n_rays
    active = np.ones(n_rays, dtype=bool)

    step = 0
    while active.any():
        step += 1
        n = -(-step // substeps)
        if n > max_depth:
            break
        g = g0 * 3.0 ** (-step / substeps)
        if g < target_potential:
            break
        idx = np.nonzero(active)[0]
        w = target(n, g)[idx]
        zz = z[idx].copy()
        ok = np.zeros(len(idx), dtype=bool)
        for _ in range(40):
            fz, dz, _ = _iterate_with_derivative(m, zz, n)
            with np.errstate(all="ignore"):
                delta = (fz - w) / dz
            delta = np.where(np.isfinite(delta), delta, 0)
            zz = zz - np.where(ok, 0, delta)
            ok |= np.abs(delta) <= 1e-15 * (1 + np.abs(zz))
            if ok.all():
                break
        _, _, near = _iterate_with_derivative(m, zz, n)
        for j, i in enumerate(idx):
            if near[j] < PRECRITICAL_TOL:
                status[i] = "crashed-on-precritical"
                active[i] = False
                continue
            z[i] = zz[j]
            paths[i].append(complex(zz[j]))
            if step % substeps == 0:
                levels[i].append(len(paths[i]) - 1)
                lv = [paths[i][k] for k in levels[i][-3:]]
                if len(lv) == 3:
                    e = max(sphere_dist(lv[0], lv[1]), sphere_dist(lv[0], lv[2]),
                            sphere_dist(lv[1], lv[2]))
                    if e < landing_tol:
                        status[i] = "landed"
                        landing[i] = lv[-1]
                        err[i] = float(e)
                        active[i] = False
    out = []
    for i, t in enumerate(angles):
        out.append(RayTrace(m, "external", t, np.array(paths[i]), landing[i], status[i],
                            err[i], levels[i]))
    return out


def trace_external_ray(m: MapFamily, t, target_potential: float = 0.0, **kw) -> RayTrace:
    """Trace the external ray of angle ``t`` down to ``target_potential``."""
    return trace_external_rays(m, [t], target_potential, **kw)[0]


# ---------------------------------------------------------------- internal


class Center:
    """A superattracting point ``c`` of period ``k`` with local degree 2.

    ``H`` satisfies ``F(z) - c = (z - c)^2 H(z)`` for ``F = f^k``, evaluated
    without cancellation so that the Böttcher product stays accurate.
    """

    def __init__(self, m: MapFamily, c: complex, k: int = 1):
        self.map = m
        self.c = complex(c)
        self.k = k
        self.cycle = [self.c]
        for _ in range(k - 1):
            self.cycle.append(complex(m.f(self.cycle[-1])))
        self.A = complex(self.H(np.array([self.c]))[0])

    def _first_factor(self, z):
        m, c = self.map, self.c
        if m.tag == "dbas":
            return z + 2 * c  # z^3 + 3z/2 - c = (z - c)^2 (z + 2c)
        if m.tag == "cubic":
            a = m.param
            if c == 0:
                return z + 1.5 * a
            if abs(c + a) < 1e-14:
                return z - a / 2  # f(z) - f(-a) = (z + a)^2 (z - a/2)
        if m.tag == "newton":
            p, q = m.p, m.q
            if c == 0:
                return (2 * p * z + 3 * q) / (p * (3 * z * z + p))
            others = [r for r in m.roots() if abs(r - c) > 1e-14]
            if len(others) == 2:
                return (2 * z - others[0] - others[1]) / (3 * z * z + p)
        raise ValueError("center is not a critical point of the map")

    def H(self, z):
        z = np.asarray(z, dtype=complex)
        out = self._first_factor(z)
        zj = self.map.f(z)
        for cj in self.cycle[1:]:
            out = out * _divided_difference(self.map, zj, cj)
            zj = self.map.f(zj)
        return out

    def F(self, z):
        z = np.asarray(z, dtype=complex)
        for _ in range(self.k):
            z = self.map.f(z)
        return z

    def preimages(self, z):
        """All ``3^k`` preimages under ``F``."""
        pts = np.atleast_1d(np.asarray(z, dtype=complex))[:, None]
        for _ in range(self.k):
            pts = self.map.preimages(pts.reshape(-1)).reshape(pts.shape[0], -1)
        return pts

    def phi(self, z, max_iter: int = 200):
        """Böttcher coordinate by the orbit product; None if the orbit does not converge."""
        d = complex(z) - self.c
        out = self.A * d
        k = 0.5
        for _ in range(max_iter):
            h = complex(self.H(np.array([self.c + d]))[0])
            fac = h / self.A
            out *= fac ** k
            if abs(fac - 1) * k < 1e-17 and abs(d * self.A) < 1e-3:
                return out
            d = d * d * h
            k /= 2
            if not cmath.isfinite(d) or abs(d) > 1e6:
                return None
        return None

    def phi_inverse(self, w: complex, seed=None):
        """Solve ``phi(z) = w`` for ``|w| < 1``.

        Small ``w`` is solved near the center; otherwise ``w`` is squared until
        small and the solution pulled back, choosing at each step the preimage
        whose coordinate matches the corresponding power of ``w``.
        """
        w = complex(w)
        if abs(w) >= 1:
            return None
        if seed is None and abs(w) <= 0.1:
            seed = self.c + w / self.A
        if seed is None:
            n = 0
            while abs(w) ** (2 ** n) > 0.1:
                n += 1
            z = self._newton_solve(w ** (2 ** n), self.c + w ** (2 ** n) / self.A)
            for j in range(n - 1, -1, -1):
                if z is None:
                    return None
                target = w ** (2 ** j)
                pre = self.preimages(z)[0]
                vals = [self.phi(x) for x in pre]
                errs = [abs(v - target) if v is not None else math.inf for v in vals]
                seed = complex(pre[int(np.argmin(errs))])
                z = self._newton_solve(target, seed) if min(errs) < math.inf else None
            return z
        return self._newton_solve(w, seed)

    def _newton_solve(self, w, z):
        for _ in range(50):
            v = self.phi(z)
            h = 1e-7 * max(abs(z - self.c), 1e-12)
            v2 = self.phi(z + h)
            if v is None or v2 is None:
                return z
            dv = (v2 - v) / h
            if dv == 0:
                return z
            dz = (v - w) / dv
            z -= dz
            if abs(dz) < 1e-15 * (1 + abs(z)):
                break
        return z


def _divided_difference(m: MapFamily, x, y):
    """``(f(x) - f(y)) / (x - y)`` evaluated without cancellation."""
    if m.tag == "newton":
        p, q = m.p, m.q
        num = 6 * x * x * y * y + 2 * p * (x * x + x * y + y * y) + 3 * q * (x + y)
        return num / ((3 * x * x + p) * (3 * y * y + p))
    c2, c1 = m._poly()
    return x * x + x * y + y * y + c2 * (x + y) + c1


def basin_center(m: MapFamily, basin: str, labels=None):
    """Center and parent data of a named basin: ``(center, parent_label or None)``."""
    if m.tag == "dbas":
        r = 1j / math.sqrt(2)
        table = {"A2": r, "A3": -r}
        if basin in table:
            return table[basin], None
    elif m.tag == "cubic":
        if basin == "A1":
            return 0j, None
        if basin == "A1'":
            return -1.5 * m.param, "A1"
    else:
        labels = labels or default_newton_labels(m.param)
        if basin in ("B1", "B2", "B3"):
            return labels[basin], None
        if basin in ("W1", "W2", "W3"):
            parent = "B" + basin[1]
            r = labels[parent]
            pre = m.preimages(np.array([r]))[0]
            other = pre[np.argmax(np.abs(pre - r))]
            return complex(other), parent
    raise ValueError(f"unknown basin {basin!r} for {m.tag}")


def default_newton_labels(lam) -> dict:
    """The labeling on the fundamental domain: B1, B2, B3 at -1/2-lam, -1/2+lam, 1."""
    lam = complex(lam)
    return {"B1": -0.5 - lam, "B2": -0.5 + lam, "B3": 1.0 + 0j}


def boettcher_internal(m: MapFamily, basin: str, z, labels=None) -> complex:
    """Internal Böttcher coordinate of ``z`` in ``basin``.

    Preimage basins (``A1'``, ``W_i``) use ``phi_parent(f(z))``.
    """
    c, parent = basin_center(m, basin, labels)
    z = SpherePoint.of(z).to_complex()
    if parent is not None:
        pc, _ = basin_center(m, parent, labels)
        val = Center(m, pc).phi(m.f(z))
    else:
        val = Center(m, c).phi(z)
    if val is None:
        raise NotInBasin(f"orbit of {z} does not converge to the center of {basin}")
    return val


def _doubling_orbit(t: Angle):
    orbit = [t]
    while True:
        nxt = orbit[-1] * 2
        if nxt in orbit:
            return orbit
        orbit.append(nxt)


def _lift_path(preimage_fn, start: complex, image_path, max_split: int = 12):
    """Continue ``start`` (a preimage of ``image_path[0]``) along the image path.

    Returns the lifted points, one per image point (the first is ``start``).
    Branches are followed by proximity on a path subdivided until the choice
    is unambiguous.
    """
    out = [complex(start)]
    cur = complex(start)
    cands = preimage_fn(np.asarray(image_path[1:], dtype=complex))
    for i in range(1, len(image_path)):
        w0, w1 = complex(image_path[i - 1]), complex(image_path[i])
        c = cands[i - 1]
        d = sphere_dist(c, cur)
        order = np.argsort(d)
        if d[order[1]] > 4 * d[order[0]] + 1e-12 and _spacing_ok(c, order):
            cur = complex(c[order[0]])
            out.append(cur)
            continue
        cur = _lift_segment(preimage_fn, cur, w0, w1, max_split)
        out.append(cur)
    return out


def _spacing_ok(c, order) -> bool:
    return sphere_dist(c[order[0]], c[order[1]]) > PRECRITICAL_TOL


def _lift_segment(preimage_fn, cur, w0, w1, max_split):
    for split in range(1, max_split + 1):
        n = 2 ** split
        if cmath.isfinite(w0) and cmath.isfinite(w1):
            ws = w0 + (w1 - w0) * np.arange(1, n + 1) / n
        else:
            # interpolate in the chart around infinity
            u0 = 0 if not cmath.isfinite(w0) else 1 / w0
            u1 = 0 if not cmath.isfinite(w1) else 1 / w1
            us = u0 + (u1 - u0) * np.arange(1, n + 1) / n
            with np.errstate(divide="ignore"):
                ws = np.where(us == 0, INF, 1 / np.where(us == 0, 1, us))
        cands = preimage_fn(ws)
        z = cur
        good = True
        for c in cands:
            d = sphere_dist(c, z)
            order = np.argsort(d)
            if sphere_dist(c[order[0]], c[order[1]]) < PRECRITICAL_TOL:
                raise BranchAmbiguity("path passes through a critical value")
            if d[order[1]] <= 4 * d[order[0]]:
                good = False
                break
            z = complex(c[order[0]])
        if good:
            return z
    raise BranchAmbiguity("inverse branch could not be continued unambiguously")


def _level0_segment(center: Center, s: Angle, rho0: float, npts: int):
    radii = rho0 ** (0.5 ** np.linspace(0, 1, npts))
    pts = []
    seed = None
    for r in radii:
        seed = center.phi_inverse(r * cmath.exp(2j * math.pi * float(s)), seed)
        pts.append(seed)
    return pts


def trace_center_rays(center: Center, angles, target_potential: float = 0.0,
                      rho0: float = 0.05, npts: int = 24,
                      landing_tol: float = LANDING_TOL, max_depth: int = MAX_DEPTH,
                      basin_label: str = "internal"):
    """Trace internal rays of a superattracting center (all given angles)."""
    m = center.map
    angles = [Angle.of(t) for t in angles]
    orbit: list = []
    for t in angles:
        for s in _doubling_orbit(t):
            if s not in orbit:
                orbit.append(s)
    seg = {s: _level0_segment(center, s, rho0, npts) for s in orbit}
    # rays curve at second order near the center: start the chord very close to it
    inner = rho0 * np.geomspace(1e-3, 1, 40)[:-1]
    paths = {s: [center.c] + [center.phi_inverse(r * cmath.exp(2j * math.pi * float(s)))
                              for r in inner] + list(seg[s]) for s in orbit}
    levels = {s: [len(inner) + 1, len(paths[s]) - 1] for s in orbit}
    status = {s: "truncated" for s in orbit}
    landing = {s: None for s in orbit}
    err = {s: math.inf for s in orbit}
    done = set()
    potential = -math.log(rho0) / 2
    for _level in range(1, max_depth + 1):
        potential /= 2
        if potential < target_potential:
            break
        new = {}
        crashed = False
        for s in orbit:
            try:
                new[s] = _lift_path(center.preimages, seg[s][-1], seg[s * 2])
            except BranchAmbiguity:
                status[s] = "crashed-on-precritical"
                done.add(s)
                crashed = True
        if crashed:
            # rays whose orbit passes a crashed angle cannot be continued either
            for s in orbit:
                if any(status[u] == "crashed-on-precritical" for u in _doubling_orbit(s)):
                    if s not in done:
                        status[s] = "crashed-on-precritical"
                        done.add(s)
            if all(s in done for s in angles):
                break
            orbit = [s for s in orbit if s not in done or status[s] == "landed"]
        for s in orbit:
            if s in done:
                continue
            seg_s = new[s]
            paths[s].extend(seg_s[1:])
            levels[s].append(len(paths[s]) - 1)
            lv = [paths[s][k] for k in levels[s][-3:]]
            e = max(sphere_dist(lv[0], lv[1]), sphere_dist(lv[0], lv[2]),
                    sphere_dist(lv[1], lv[2]))
            if e < landing_tol:
                status[s] = "landed"
                landing[s] = lv[-1]
                err[s] = float(e)
                done.add(s)
        seg = new
        if all(s in done for s in angles):
            break
    out = []
    for t in angles:
        out.append(RayTrace(m, basin_label, t, np.array(paths[t]), landing[t], status[t],
                            err[t], levels[t]))
    return out


def lift_ray(m: MapFamily, parent: RayTrace, start: complex, basin_label: str) -> RayTrace:
    """Pull a traced ray back by one inverse branch, starting at ``start``."""
    lifted = _lift_path(m.preimages, start, parent.points)
    pts = np.array(lifted)
    landing = pts[-1] if parent.landing is not None else None
    return RayTrace(m, basin_label, parent.angle, pts, landing, parent.status, parent.err,
                    list(parent.levels))


def trace_internal_ray(m: MapFamily, basin: str, t, target_potential: float = 0.0,
                       labels=None, **kw) -> RayTrace:
    """Trace the internal ray of angle ``t`` in ``basin`` from its center outward."""
    c, parent = basin_center(m, basin, labels)
    if parent is None:
        return trace_center_rays(Center(m, c), [t], target_potential,
                                 basin_label=basin, **kw)[0]
    pc, _ = basin_center(m, parent, labels)
    pray = trace_center_rays(Center(m, pc), [t], target_potential, basin_label=parent, **kw)[0]
    return lift_ray(m, pray, c, basin)


def label_newton_basins(lam, **kw) -> dict:
    """Label the three immediate root basins by the landing pattern of their rays.

    The basin whose angle-1/2 ray lands apart from the other two is ``B3``;
    ``B1`` and ``B2`` are ordered so that the angle-0 rays of B1, B2, B3 leave
    infinity in counterclockwise order (seen in the chart ``w = 1/z``).
    """
    m = MapFamily.newton(lam)
    roots = m.roots()
    zero, half = [], []
    for r in roots:
        rays = trace_center_rays(Center(m, r), [Angle(0), Angle(1, 2)], **kw)
        zero.append(rays[0])
        half.append(rays[1])
    for ray in zero:
        if not ray.landed or sphere_dist(ray.landing, INF) > 1e-6:
            raise UnresolvedLabeling("an angle-0 ray does not land at infinity")
    if not all(r.landed for r in half):
        raise UnresolvedLabeling("an angle-1/2 ray did not land")
    pairs = []
    for i in range(3):
        for j in range(i + 1, 3):
            if sphere_dist(half[i].landing, half[j].landing) < 1e-6:
                pairs.append((i, j))
    if len(pairs) != 1:
        raise UnresolvedLabeling(f"expected one co-landing pair of 1/2-rays, found {len(pairs)}")
    i, j = pairs[0]
    k = 3 - i - j
    # direction of approach to infinity, in the chart w = 1/z
    direc = [cmath.phase(1 / ray.points[-2]) for ray in zero]
    def ccw(a, b, c):
        da = (direc[b] - direc[a]) % (2 * math.pi)
        dc = (direc[c] - direc[a]) % (2 * math.pi)
        return da < dc
    first, second = (i, j) if ccw(i, j, k) else (j, i)
    return {"B1": roots[first], "B2": roots[second], "B3": roots[k]}
