"""Invariant graphs, their three complementary faces, itineraries and nests.

Every graph used here is a theta graph: three spokes joining two vertices,
possibly with dangling arcs and "fat" pieces (a small filled Julia set or a
closed basin) attached. Face ``F_ij`` is the side of the Jordan curve
``spoke_i + spoke_j`` not containing the third spoke. The side test moves a
point of the third spoke to infinity by a Möbius map so that the curve
becomes a bounded polygon, then counts crossings.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .angles import Angle, TriadicWord, doubling_period
from .boettcher import (
    Center,
    _inverse_boettcher_external,
    basin_center,
    boettcher_external,
    default_newton_labels,
    green_external,
    lift_ray,
    sphere_dist,
    trace_center_rays,
    trace_external_rays,
)
from .maps import INF, MapFamily, SpherePoint

TAU_GRAPH = 1e-6
MAX_SPACING = 1e-3
DEFAULT_DEPTH_CAP = 24
ON_GRAPH = -1
JUNCTION_TOL = 1e-5
# a ray pulled back onto a critical point inherits the square root of the landing error
CRITICAL_JUNCTION_TOL = 1e-3

VARIANTS = ("dbas", "cubic-renorm", "newton-renorm", "cubic-boundary", "newton-boundary")


class GraphConstructionError(RuntimeError):
    pass


class AmbiguityOverflow(RuntimeError):
    pass


class BranchSelectionFailure(RuntimeError):
    pass


# ------------------------------------------------------------------ geometry


def _sphere_xyz(z):
    """Unit-sphere embedding, used for chart-free distances."""
    z = np.asarray(z, dtype=complex)
    fin = np.isfinite(z)
    zf = np.where(fin, z, 0)
    d = 1 + np.abs(zf) ** 2
    out = np.stack([2 * zf.real / d, 2 * zf.imag / d, (np.abs(zf) ** 2 - 1) / d], axis=-1)
    out[~fin] = (0.0, 0.0, 1.0)
    return out


def _refine_polyline(pts):
    """Insert chordal-linear midpoints so that consecutive points are < MAX_SPACING apart.

    Only used for drawing and distance tests; traced samples are kept.
    """
    pts = np.asarray(pts, dtype=complex)
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        d = sphere_dist(a, b)
        n = int(math.ceil(d / MAX_SPACING))
        if n > 1 and np.isfinite(a) and np.isfinite(b):
            s = np.arange(1, n) / n
            out.extend(a + (b - a) * s)
        out.append(b)
    return np.array(out)


def _segment_dist(q, a, b):
    """Distance from ``q[i]`` to the segment ``a[i, j] b[i, j]``, minimised over j."""
    ab = b - a
    L = np.abs(ab) ** 2
    L = np.where(L == 0, 1, L)
    u = np.clip(((q[:, None] - a) * np.conj(ab)).real / L, 0, 1)
    return np.min(np.abs(q[:, None] - (a + u * ab)), axis=1)


class _SegmentTree:
    """Nearest-segment queries for many short segments (k-d tree on midpoints)."""

    K = 8

    def __init__(self, a, b):
        from scipy.spatial import cKDTree

        self.a, self.b = a, b
        mid = (a + b) / 2
        self.tree = cKDTree(np.column_stack([mid.real, mid.imag])) if len(a) else None

    def distance(self, q):
        if self.tree is None:
            return np.full(q.shape, np.inf)
        k = min(self.K, len(self.a))
        _, idx = self.tree.query(np.column_stack([q.real, q.imag]), k=k)
        idx = idx.reshape(len(q), k)
        return _segment_dist(q, self.a[idx], self.b[idx])


class _ArcIndex:
    """Segments of all arcs, stored in the two charts for on-graph distance tests."""

    def __init__(self, polylines):
        fa, fb, ia, ib = [], [], [], []
        for p in polylines:
            a, b = p[:-1], p[1:]
            fin = np.isfinite(a) & np.isfinite(b) & (np.abs(a) < 2) & (np.abs(b) < 2)
            fa.append(a[fin])
            fb.append(b[fin])
            with np.errstate(divide="ignore", invalid="ignore"):
                wa = np.where(np.isfinite(a), 1 / np.where(a == 0, 1e-300, a), 0)
                wb = np.where(np.isfinite(b), 1 / np.where(b == 0, 1e-300, b), 0)
            far = (np.abs(wa) < 2) & (np.abs(wb) < 2)
            ia.append(wa[far])
            ib.append(wb[far])
        self.finite = _SegmentTree(np.concatenate(fa), np.concatenate(fb))
        self.infinite = _SegmentTree(np.concatenate(ia), np.concatenate(ib))

    def distance(self, z):
        """Approximate spherical distance (half chordal) from each z to the arcs."""
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, np.inf)
        fin = np.isfinite(z)
        near = fin & (np.abs(np.where(fin, z, 0)) <= 1)
        if near.any():
            q = z[near]
            out[near] = self.finite.distance(q) / (1 + np.abs(q) ** 2)
        far = ~near
        if far.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.where(fin[far], 1 / np.where(z[far] == 0, 1, z[far]), 0)
            out[far] = self.infinite.distance(w) / (1 + np.abs(w) ** 2)
        return out


class _JordanSide:
    """Side test for a closed curve on the sphere, relative to a reference point ``O``.

    Crossing counts use horizontal bands so that each query only meets the
    segments whose height range overlaps its band.
    """

    BANDS = 512

    def __init__(self, curve, origin: complex):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(np.isfinite(curve), 1 / (curve - origin), 0)
        if not np.all(np.isfinite(w)):
            raise GraphConstructionError("reference point lies on the curve")
        self.origin = origin
        x, y = np.append(w.real, w.real[0]), np.append(w.imag, w.imag[0])
        self.x0, self.y0, self.x1, self.y1 = x[:-1], y[:-1], x[1:], y[1:]
        lo, hi = np.minimum(self.y0, self.y1), np.maximum(self.y0, self.y1)
        self.ymin, self.ymax = float(lo.min()), float(hi.max())
        self.height = (self.ymax - self.ymin) / self.BANDS or 1.0
        b0 = np.clip(((lo - self.ymin) / self.height).astype(int), 0, self.BANDS - 1)
        b1 = np.clip(((hi - self.ymin) / self.height).astype(int), 0, self.BANDS - 1)
        members = [[] for _ in range(self.BANDS)]
        for s, (u, v) in enumerate(zip(b0, b1)):
            for band in range(u, v + 1):
                members[band].append(s)
        self.members = [np.array(m, dtype=int) for m in members]

    def away_from_origin(self, z):
        """True for points on the side of the curve that does not contain ``origin``."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(np.isfinite(z), 1 / (z - self.origin), 0)
        out = np.zeros(z.shape, dtype=bool)
        band = np.floor((w.imag - self.ymin) / self.height)
        inside = (w.imag >= self.ymin) & (w.imag <= self.ymax) & np.isfinite(band)
        band = np.clip(np.where(inside, band, 0).astype(int), 0, self.BANDS - 1)
        for bnd in np.unique(band[inside]):
            sel = np.nonzero(inside & (band == bnd))[0]
            seg = self.members[bnd]
            if len(seg) == 0:
                continue
            x0, y0, x1, y1 = self.x0[seg], self.y0[seg], self.x1[seg], self.y1[seg]
            qx, qy = w.real[sel, None], w.imag[sel, None]
            cond = (y0 > qy) != (y1 > qy)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x0 + (qy - y0) * (x1 - x0) / (y1 - y0)
            out[sel] = (np.count_nonzero(cond & (qx < xint), axis=1) % 2) == 1
        return out


# ---------------------------------------------------------------- fat sets


class FatSet:
    """A closed set glued into a graph, given by a membership predicate.

    ``F``-orbits (``F = f^period``) of members stay in the disk of radius
    ``radius`` around ``center`` for ``cap`` iterations.
    """

    def __init__(self, name: str, m: MapFamily, center: complex, period: int, radius: float,
                 cap: int = 400, cloud=None):
        self.name = name
        self.map = m
        self.center = complex(center)
        self.period = period
        self.radius = radius
        self.cap = cap
        self.cloud = np.asarray(cloud if cloud is not None else [], dtype=complex)

    def contains(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        inside = np.isfinite(z) & (np.abs(np.where(np.isfinite(z), z, 0) - self.center) < self.radius)
        w = np.where(inside, z, self.center)
        for _ in range(self.cap):
            for _ in range(self.period):
                w = self.map.f(w)
            with np.errstate(invalid="ignore"):
                inside &= np.abs(w - self.center) < self.radius
            w = np.where(inside, w, self.center)
            if not inside.any():
                break
        return inside


def _renorm_radius(comp: Center, fixed_rays) -> float:
    landings = [r.landing for r in fixed_rays if r.landed]
    if not landings:
        raise GraphConstructionError("no internal ray of the renormalization component landed")
    reach = max(abs(x - comp.c) for x in landings)
    step = abs(comp.F(np.array([comp.c]))[0] - comp.c)
    return max(2 * step, 1.2 * reach)


def renormalization_radius(m: MapFamily, k: int) -> float:
    """Disk radius around the free critical point used for small-Julia membership.

    Twice the distance from the critical point to its ``k``-th image; at a
    center that distance vanishes, so the reach of the critical component
    (farthest landing point of its internal rays) scaled by 1.2 is used
    whenever it is larger.
    """
    comp = Center(m, _free_critical(m), k)
    rays = trace_center_rays(comp, [Angle(j, 16) for j in range(16)])
    return _renorm_radius(comp, rays)


def _free_critical(m: MapFamily) -> complex:
    return -m.param if m.tag == "cubic" else 0j


def small_julia_member(m: MapFamily, k: int, z, radius: float | None = None):
    """Does the ``f^k``-orbit of ``z`` stay in the renormalization disk for 400 steps?"""
    if radius is None:
        radius = renormalization_radius(m, k)
    pts = np.atleast_1d(np.asarray([SpherePoint.of(x).to_complex() for x in np.atleast_1d(z)]))
    fs = FatSet("K", m, _free_critical(m), k, radius)
    out = fs.contains(pts)
    return bool(out[0]) if np.ndim(z) == 0 else out


class _BasinClosure:
    """Closed immediate basin of a superattracting fixed point, by grid flood fill.

    Membership: the orbit converges to the center and the point lies on (or
    next to) the grid component of the center.
    """

    def __init__(self, name: str, m: MapFamily, center: complex, window: float, n: int = 700):
        from scipy import ndimage

        self.name = name
        self.map = m
        self.center = complex(center)
        xs = np.linspace(-window, window, n)
        self.x0, self.h, self.n = center - window - 1j * window, xs[1] - xs[0], n
        Z = center + xs[None, :] + 1j * xs[:, None]
        conv = self._converges(Z)
        # neighbouring basin components touch the immediate basin at single
        # points; thinning first keeps them from merging on the grid
        lab, _ = ndimage.label(ndimage.binary_erosion(conv, iterations=2))
        core = lab == lab[n // 2, n // 2]
        comp = ndimage.binary_dilation(core, iterations=3) & conv
        self.mask = ndimage.binary_dilation(comp, iterations=1)
        edge = comp & ~ndimage.binary_erosion(comp)
        self.cloud = Z[edge]

    def _converges(self, z, cap: int = 300):
        w = np.array(z, dtype=complex)
        for _ in range(cap):
            w = self.map.f(w)
        with np.errstate(invalid="ignore"):
            return np.abs(w - self.center) < 1e-6

    def contains(self, z):
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        fin = np.isfinite(z)
        zz = np.where(fin, z, self.center)
        ix = np.round((zz.real - self.x0.real) / self.h).astype(int)
        iy = np.round((zz.imag - self.x0.imag) / self.h).astype(int)
        ok = fin & (ix >= 0) & (iy >= 0) & (ix < self.n) & (iy < self.n)
        inmask = np.zeros(z.shape, dtype=bool)
        inmask[ok] = self.mask[iy[ok], ix[ok]]
        out = np.zeros(z.shape, dtype=bool)
        if inmask.any():
            out[inmask] = self._converges(zz[inmask])
        return out


# ------------------------------------------------------------------- graph


@dataclass
class Arc:
    label: str
    points: np.ndarray

    def to_json(self):
        return {"label": self.label,
                "points": [[z.real, z.imag] if np.isfinite(z) else None for z in self.points]}


@dataclass
class Graph:
    family: MapFamily
    variant: str
    arcs: list
    spokes: list  # three polylines joining the two vertices
    face_of_pair: dict  # (i, j) -> label for the face bounded by spokes i and j
    fat: list = field(default_factory=list)
    small_julia: FatSet | None = None
    renorm: tuple | None = None
    rays: dict = field(default_factory=dict)
    junctions: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index = _ArcIndex([a.points for a in self.arcs])
        self._sides = {}
        for (i, j) in ((0, 1), (1, 2), (0, 2)):
            k = 3 - i - j
            curve = np.concatenate([self.spokes[i], self.spokes[j][::-1]])
            self._sides[(i, j)] = _JordanSide(curve, _reference_point(self.spokes[k]))

    # -- queries

    def locate_many(self, z, tol: float = TAU_GRAPH) -> np.ndarray:
        """Face label of each point, or ``ON_GRAPH`` (-1)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.full(z.shape, ON_GRAPH, dtype=int)
        on = self._index.distance(z) < tol
        for fs in self.fat:
            todo = ~on
            if todo.any():
                on[todo] |= fs.contains(z[todo])
        todo = ~on
        found = np.zeros(z.shape, dtype=bool)
        for pair, side in self._sides.items():
            if not todo.any():
                break
            hit = np.zeros(z.shape, dtype=bool)
            hit[todo] = side.away_from_origin(z[todo])
            out[hit & ~found] = self.face_of_pair[pair]
            found |= hit
        return out

    def to_json(self) -> dict:
        return {
            "family": self.family.label(),
            "variant": self.variant,
            "arcs": [a.to_json() for a in self.arcs],
            "fat": [{"name": f.name, "cloud": [[z.real, z.imag] for z in f.cloud]} for f in self.fat],
            "faces": {f"{i}{j}": lab for (i, j), lab in self.face_of_pair.items()},
        }

    @cached_property
    def face_samples(self):
        return _face_samples(self)


def locate(g: Graph, z):
    """Face label (0, 1, 2) of ``z`` or the string ``"on-graph"``."""
    lab = int(g.locate_many([SpherePoint.of(z).to_complex()])[0])
    return "on-graph" if lab == ON_GRAPH else lab


def _reference_point(spoke) -> complex:
    fin = spoke[np.isfinite(spoke)]
    return complex(fin[len(fin) // 2])


def _chain(*pieces):
    """Concatenate polylines, dropping the duplicated junction points."""
    out = [np.asarray(pieces[0], dtype=complex)]
    for p in pieces[1:]:
        p = np.asarray(p, dtype=complex)
        out.append(p[1:])
    return np.concatenate(out)


def _snap(polyline, start=None, end=None):
    p = np.array(polyline, dtype=complex)
    if start is not None:
        p[0] = start
    if end is not None:
        p[-1] = end
    return p


def _junction(name, pts, tol, junctions):
    pts = [complex(x) for x in pts]
    fin = [x for x in pts if np.isfinite(x)]
    if len(fin) < len(pts) or all(sphere_dist(INF, x) < tol for x in pts):
        spread = max(sphere_dist(INF, x) for x in fin) if fin else 0.0
        value = INF
    else:
        value = complex(np.mean(fin))
        spread = max(abs(x - value) for x in fin)
    if spread > tol:
        raise GraphConstructionError(f"junction {name}: landing points disagree by {spread:.3g}")
    junctions[name] = (value, spread)
    return value


def _ext_points(ray):
    return np.concatenate([[INF], ray.points])


def build_graph(m: MapFamily, variant: str, t0=None, k: int | None = None, t=None,
                labels=None) -> Graph:
    """Build one of the five graph variants.

    Renormalizable variants take the angle ``t0 = t/2`` and its doubling
    period ``k``; boundary variants take ``t`` itself.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "dbas":
        return _build_dbas(m)
    if variant == "cubic-renorm":
        return _build_cubic(m, Angle.of(t0), k, renorm=True)
    if variant == "cubic-boundary":
        return _build_cubic(m, Angle.of(t).half(), None, renorm=False, t=Angle.of(t))
    if variant == "newton-renorm":
        return _build_newton(m, Angle.of(t0), k, renorm=True, labels=labels)
    return _build_newton(m, Angle.of(t).half(), None, renorm=False, t=Angle.of(t), labels=labels)


def _build_dbas(m: MapFamily) -> Graph:
    ext = dict(zip(("0", "1/3", "2/3"), trace_external_rays(m, ["0", "1/3", "2/3"])))
    c2, c3 = basin_center(m, "A2")[0], basin_center(m, "A3")[0]
    a2 = trace_center_rays(Center(m, c2), [Angle(0), Angle(1, 2)], basin_label="A2")
    a3 = trace_center_rays(Center(m, c3), [Angle(0), Angle(1, 2)], basin_label="A3")
    for r in list(ext.values()) + a2 + a3:
        if not r.landed:
            raise GraphConstructionError(f"ray {r.basin}({r.angle}) did not land")
    J = {}
    p0 = _junction("p", [ext["0"].landing, a2[0].landing, a3[0].landing], JUNCTION_TOL, J)
    pu = _junction("p'", [ext["1/3"].landing, a2[1].landing], JUNCTION_TOL, J)
    pd = _junction("p''", [ext["2/3"].landing, a3[1].landing], JUNCTION_TOL, J)
    r0 = _snap(_ext_points(ext["0"]), end=p0)
    r13 = _snap(_ext_points(ext["1/3"]), end=pu)
    r23 = _snap(_ext_points(ext["2/3"]), end=pd)
    a20, a2h = _snap(a2[0].points, end=p0), _snap(a2[1].points, end=pu)
    a30, a3h = _snap(a3[0].points, end=p0), _snap(a3[1].points, end=pd)
    spokes = [r0, _chain(r13, a2h[::-1], a20), _chain(r23, a3h[::-1], a30)]
    arcs = [Arc("R^inf(0)", r0), Arc("R^inf(1/3)", r13), Arc("R^inf(2/3)", r23),
            Arc("R^A2(0)", a20), Arc("R^A2(1/2)", a2h), Arc("R^A3(0)", a30), Arc("R^A3(1/2)", a3h)]
    arcs = [Arc(a.label, _refine_polyline(a.points)) for a in arcs]
    spokes = [_refine_polyline(s) for s in spokes]
    faces = {(0, 1): None, (1, 2): None, (0, 2): None}
    g = Graph(m, "dbas", arcs, spokes, faces, junctions=J,
              rays={"ext": ext, "A2": a2, "A3": a3})
    # rays of angles in (0, 1/3) lie in face 2; 1/2 in face 1 (the itinerary of -t)
    _assign_faces_by_points(g, {2: _ray_point(m, "1/6"), 1: _ray_point(m, "1/2"),
                                0: _ray_point(m, "5/6")})
    return g


def _ray_point(m: MapFamily, angle, potential: float = 0.3) -> complex:
    ray = trace_external_rays(m, [angle], target_potential=potential)[0]
    return complex(ray.points[-1])


def _assign_faces_by_points(g: Graph, probes: dict):
    labels = {}
    for lab, z in probes.items():
        for pair, side in g._sides.items():
            if side.away_from_origin(np.array([z]))[0]:
                if pair in labels:
                    raise GraphConstructionError(f"two labels claim face {pair}")
                labels[pair] = lab
                break
        else:
            raise GraphConstructionError(f"probe for label {lab} is on no face")
    if sorted(labels.values()) != [0, 1, 2]:
        raise GraphConstructionError(f"face labels not a bijection: {labels}")
    g.face_of_pair.update(labels)


def _component_rays(m: MapFamily, k: int):
    comp = Center(m, _free_critical(m), k)
    rays = trace_center_rays(comp, [Angle(j, 16) for j in range(16)], basin_label="K")
    return comp, rays


def _small_julia_sets(m: MapFamily, k: int):
    """``K`` and its forward images as fat sets; returns (sets, path rays of K)."""
    comp, rays = _component_rays(m, k)
    radius = _renorm_radius(comp, rays)
    cloud = np.array([r.landing for r in rays if r.landed])
    sets = [FatSet("K", m, comp.c, k, radius, cloud=cloud)]
    c, cl = comp.c, cloud
    for j in range(1, k):
        c, cl = m.f(c), m.f(cl)
        reach = max(abs(cl - c)) if len(cl) else radius
        sets.append(FatSet(f"f^{j}(K)", m, c, k, 1.2 * reach, cloud=cl))
    return sets, rays[0], rays[8]


def _build_cubic(m: MapFamily, t0: Angle, k, renorm: bool, t: Angle | None = None) -> Graph:
    a = m.param
    ext = dict(zip(("0", "1/3", "2/3"), trace_external_rays(m, ["0", "1/3", "2/3"])))
    t_full = t0 * 2
    A1 = Center(m, 0j)
    int_angles = [Angle(0), Angle(1, 2), t0]
    a1 = dict(zip(int_angles, trace_center_rays(A1, int_angles, basin_label="A1")))
    prime0 = lift_ray(m, a1[Angle(0)], -1.5 * a, "A1'")
    par = trace_center_rays(A1, [t_full], basin_label="A1")[0]
    prime_t = lift_ray(m, par, -1.5 * a, "A1'")
    for r in list(ext.values()) + list(a1.values()) + [prime0, prime_t]:
        if not r.landed:
            raise GraphConstructionError(f"ray {r.basin}({r.angle}) did not land")
    J = {}
    g0 = _junction("gamma(0)", [ext["0"].landing, a1[Angle(0)].landing], JUNCTION_TOL, J)
    g23 = _junction("gamma(2/3)", [ext["2/3"].landing, a1[Angle(1, 2)].landing], JUNCTION_TOL, J)
    g13 = _junction("gamma(1/3)", [ext["1/3"].landing, prime0.landing], JUNCTION_TOL, J)
    e2 = _chain(_snap(_ext_points(ext["0"]), end=g0), _snap(a1[Angle(0)].points, end=g0)[::-1])
    e3 = _chain(_snap(_ext_points(ext["2/3"]), end=g23), _snap(a1[Angle(1, 2)].points, end=g23)[::-1])
    r13 = _snap(_ext_points(ext["1/3"]), end=g13)
    p0 = _snap(prime0.points, end=g13)
    arcs = [Arc("R^inf(0)", _ext_points(ext["0"])), Arc("R^0(0)", a1[Angle(0)].points),
            Arc("R^inf(2/3)", _ext_points(ext["2/3"])), Arc("R^0(1/2)", a1[Angle(1, 2)].points),
            Arc("R^inf(1/3)", r13), Arc("R'(0)", p0)]
    fat = []
    rays = {"ext": ext, "A1": a1, "A1'": [prime0, prime_t]}
    if renorm:
        sets, kr0, krh = _small_julia_sets(m, k)
        fat.extend(sets)
        beta = _junction("beta", [a1[t0].landing, kr0.landing], JUNCTION_TOL, J)
        beta_p = _junction("beta'", [prime_t.landing, krh.landing], JUNCTION_TOL, J)
        kpath = _chain(_snap(krh.points, end=beta_p)[::-1], _snap(kr0.points, end=beta))
        e1 = _chain(r13, p0[::-1], _snap(prime_t.points, end=beta_p), kpath,
                    _snap(a1[t0].points, end=beta)[::-1])
        dang = trace_center_rays(A1, [t_full], basin_label="A1")[0]
        arcs += [Arc(f"R'({t_full})", prime_t.points), Arc("K-path", kpath),
                 Arc(f"R^0({t0})", a1[t0].points), Arc(f"R^0({t_full})", dang.points)]
        rays["K"] = [kr0, krh]
        probes = {1: _ray_point(m, "1/2"), 2: complex(sets[1].center) if k > 1 else None}
        probes[0] = None
    else:
        crit = -a
        _junction("-a", [prime_t.landing, a1[t0].landing, crit], CRITICAL_JUNCTION_TOL, J)
        e1 = _chain(r13, p0[::-1], _snap(prime_t.points, end=crit),
                    _snap(a1[t0].points, end=crit)[::-1])
        fat.append(_BasinClosure("closure(A1)", m, 0j, window=1.25 * abs(a) + 0.3))
        arcs += [Arc(f"R'({t})", prime_t.points), Arc(f"R^0({t0})", a1[t0].points)]
        probes = {0: _ray_point(m, "1/6"), 1: _ray_point(m, "1/2"), 2: _ray_point(m, "5/6")}
    spokes = [_refine_polyline(s) for s in (e1, e2, e3)]
    arcs = [Arc(x.label, _refine_polyline(x.points)) for x in arcs]
    variant = "cubic-renorm" if renorm else "cubic-boundary"
    g = Graph(m, variant, arcs, spokes, {(0, 1): None, (1, 2): None, (0, 2): None}, fat,
              small_julia=fat[0] if renorm else None, renorm=(t0, k) if renorm else None,
              rays=rays, junctions=J)
    if renorm:
        # face 2 holds f(K); face 1 holds R^inf(1/2); face 0 is the remaining one
        _assign_two_and_rest(g, {1: probes[1], 2: _outside_point_near(g, sets[1])})
    else:
        _assign_faces_by_points(g, probes)
    return g


def _outside_point_near(g: Graph, fs: FatSet) -> complex:
    """A point just outside a fat set, off the graph (probe for its adjacent face)."""
    for z in fs.cloud:
        for eps in (1e-3, 3e-3, 1e-2):
            for ang in np.linspace(0, 2 * np.pi, 12, endpoint=False):
                p = z + eps * np.exp(1j * ang)
                if g._index.distance(np.array([p]))[0] > 10 * TAU_GRAPH and not any(
                        f.contains(np.array([p]))[0] for f in g.fat):
                    return complex(p)
    raise GraphConstructionError(f"no probe point found next to {fs.name}")


def _assign_two_and_rest(g: Graph, probes: dict):
    labels = {}
    for lab, z in probes.items():
        for pair, side in g._sides.items():
            if side.away_from_origin(np.array([z]))[0]:
                labels[pair] = lab
                break
    if len(set(labels)) != len(probes) or len(set(labels.values())) != len(probes):
        raise GraphConstructionError(f"face probes collide: {labels}")
    rest = ({0, 1, 2} - set(labels.values())).pop()
    for pair in g._sides:
        labels.setdefault(pair, rest)
    g.face_of_pair.update(labels)


def _build_newton(m: MapFamily, t0: Angle, k, renorm: bool, t: Angle | None = None,
                  labels=None) -> Graph:
    labels = labels or default_newton_labels(m.param)
    r1, r2, r3 = labels["B1"], labels["B2"], labels["B3"]
    t_full = t0 * 2
    B = {name: Center(m, labels[name]) for name in ("B1", "B2", "B3")}
    b1 = dict(zip(("0", "1/2", "t0", "2t0"),
                  trace_center_rays(B["B1"], [Angle(0), Angle(1, 2), t0, t_full], basin_label="B1")))
    b2 = trace_center_rays(B["B2"], [Angle(0), Angle(1, 2)], basin_label="B2")
    b3 = trace_center_rays(B["B3"], [Angle(0), Angle(1, 2)], basin_label="B3")
    w1 = basin_center(m, "W1", labels)[0]
    p0 = lift_ray(m, b1["0"], w1, "W1")
    pt = lift_ray(m, b1["2t0"], w1, "W1")
    for r in list(b1.values()) + b2 + b3 + [p0, pt]:
        if not r.landed:
            raise GraphConstructionError(f"ray {r.basin}({r.angle}) did not land")
    J = {}
    _junction("infinity", [b1["0"].landing, b2[0].landing, b3[0].landing], JUNCTION_TOL, J)
    x12 = _junction("x12", [b1["1/2"].landing, b2[1].landing], JUNCTION_TOL, J)
    x3 = _junction("x3", [b3[1].landing, p0.landing], JUNCTION_TOL, J)
    ea = _snap(b1["0"].points, end=INF)[::-1]
    eb = _chain(_snap(b2[0].points, end=INF)[::-1], _snap(b2[1].points, end=x12),
                _snap(b1["1/2"].points, end=x12)[::-1])
    head = _chain(_snap(b3[0].points, end=INF)[::-1], _snap(b3[1].points, end=x3),
                  _snap(p0.points, end=x3)[::-1])
    arcs = [Arc("R1(0)", b1["0"].points), Arc("R1(1/2)", b1["1/2"].points),
            Arc("R2(0)", b2[0].points), Arc("R2(1/2)", b2[1].points),
            Arc("R3(0)", b3[0].points), Arc("R3(1/2)", b3[1].points), Arc("R'1(0)", p0.points)]
    rays = {"B1": b1, "B2": b2, "B3": b3, "W1": [p0, pt]}
    fat = []
    if renorm:
        sets, kr0, krh = _small_julia_sets(m, k)
        fat.extend(sets)
        beta = _junction("beta", [b1["t0"].landing, kr0.landing], JUNCTION_TOL, J)
        beta_p = _junction("beta'", [pt.landing, krh.landing], JUNCTION_TOL, J)
        kpath = _chain(_snap(krh.points, end=beta_p)[::-1], _snap(kr0.points, end=beta))
        ec = _chain(head, _snap(pt.points, end=beta_p), kpath,
                    _snap(b1["t0"].points, end=beta)[::-1])
        arcs += [Arc(f"R'1({t_full})", pt.points), Arc("K-path", kpath),
                 Arc(f"R1({t0})", b1["t0"].points), Arc(f"R1({t_full})", b1["2t0"].points)]
        rays["K"] = [kr0, krh]
    else:
        _junction("0", [pt.landing, b1["t0"].landing, 0j], CRITICAL_JUNCTION_TOL, J)
        ec = _chain(head, _snap(pt.points, end=0j), _snap(b1["t0"].points, end=0j)[::-1])
        fat.append(_BasinClosure("closure(B1)", m, r1, window=1.25 * abs(r1) + 0.2))
        arcs += [Arc(f"R'1({t_full})", pt.points), Arc(f"R1({t0})", b1["t0"].points),
                 Arc(f"R1({t_full})", b1["2t0"].points)]
    spokes = [_refine_polyline(s) for s in (ea, eb, ec)]
    arcs = [Arc(x.label, _refine_polyline(x.points)) for x in arcs]
    variant = "newton-renorm" if renorm else "newton-boundary"
    g = Graph(m, variant, arcs, spokes, {(0, 1): None, (1, 2): None, (0, 2): None}, fat,
              small_julia=fat[0] if renorm else None, renorm=(t0, k) if renorm else None,
              rays=rays, junctions=J)
    # face 2 is bounded by the spokes through B1 and B2 only
    if renorm:
        w2 = basin_center(m, "W2", labels)[0]
        labels_ = {(0, 1): 2}
        side = g._sides[(1, 2)] if g._sides[(1, 2)].away_from_origin(np.array([w2]))[0] else None
        if side is not None:
            labels_[(1, 2)], labels_[(0, 2)] = 0, 1
        elif g._sides[(0, 2)].away_from_origin(np.array([w2]))[0]:
            labels_[(0, 2)], labels_[(1, 2)] = 0, 1
        else:
            raise GraphConstructionError("center of W2 lies in the face bounded by B1 and B2")
        g.face_of_pair.update(labels_)
    else:
        probes = {0: _internal_point(B["B3"], 0.75), 1: _internal_point(B["B3"], 0.25),
                  2: _internal_point(B["B2"], 0.25)}
        _assign_faces_by_points(g, probes)
    return g


def _internal_point(center: Center, s: float, radius: float = 0.5) -> complex:
    return complex(center.phi_inverse(radius * cmath.exp(2j * math.pi * s)))


# ------------------------------------------------------ itineraries & nests


def _chart(z):
    """(coordinate, uses_infinity_chart) for a point."""
    if not np.isfinite(z) or abs(z) > 1:
        return (0j if not np.isfinite(z) else 1 / z), True
    return z, False


def _from_chart(w, inf_chart):
    if not inf_chart:
        return w
    return INF if w == 0 else 1 / w


MAX_WORDS = 64


def itinerary_of_point(g: Graph, z, depth: int, delta: float = 1e-5, directions: int = 64,
                       allow_deep: bool = False):
    """Words ``e_0 ... e_depth`` with ``f^i(z)`` in the closure of face ``e_i``.

    Around every orbit point on the graph a fresh ring of probes is split
    into sectors, runs of consecutive probes in one face. Each probe's image
    is assigned to the sector of the next ring it points into, so a word
    follows one side of the graph along the whole orbit instead of switching
    faces wherever two of them meet. Probes on the graph or in a fat set
    carry no label.
    """
    if depth > DEFAULT_DEPTH_CAP and not allow_deep:
        raise ValueError(f"depth {depth} exceeds the cap {DEFAULT_DEPTH_CAP}")
    m = g.family
    z = SpherePoint.of(z).to_complex()
    centers = [Center(m, c) for c, _ in _sink_disks(m)]
    orbit = [_normalize_near_sink(m, z, centers)]
    raw = [z]
    for _ in range(depth):
        nxt = complex(m.f(orbit[-1])) if np.isfinite(orbit[-1]) else _f_at_inf(m)
        raw.append(nxt)
        orbit.append(_normalize_near_sink(m, nxt, centers))
    ring = np.exp(2j * np.pi * (np.arange(directions) + 0.5) / directions)
    sinks = _sinks(m)
    rings = []  # per step: (probes, labels, sector of each probe, sector labels, tol)
    for zi in orbit:
        w, infc = _chart(zi)
        # near a superattracting vertex the probes must shrink with the orbit
        step = min(delta, 1e-2 * min(sphere_dist(zi, s) for s in sinks))
        tol = min(TAU_GRAPH, step / 4)
        # an orbit point drifting off a repelling cycle on the graph still gets a full ring
        own = g.locate_many([zi], tol=step)[0]
        if own != ON_GRAPH:
            rings.append((np.array([zi]), np.array([own]), np.array([0]), [int(own)], tol))
            continue
        probes = np.array([_from_chart(w + step * u, infc) for u in ring])
        here = g.locate_many(probes, tol=tol)
        sector, labels = _sectors(here)
        rings.append((probes, here, sector, labels, tol))
    moves = []  # per step: {sector: set of sectors of the next step}
    for i in range(depth):
        probes, here, sector, _, tol = rings[i]
        img = m.f(probes)
        if orbit[i + 1] != raw[i + 1]:
            img = np.array([_normalize_near_sink(m, complex(q), centers) for q in img])
        nxt = g.locate_many(img, tol=tol)
        table: dict = {}
        for j, (a, b) in enumerate(zip(here, nxt)):
            if a == ON_GRAPH or b == ON_GRAPH:
                continue
            target = _sector_toward(rings[i + 1], orbit[i + 1], complex(img[j]), int(b))
            if target is not None:
                table.setdefault(int(sector[j]), set()).add(target)
        moves.append(table)
    words = _label_paths(moves, [r[3] for r in rings])
    if not words:
        raise AmbiguityOverflow("no probe direction avoids the graph along the orbit")
    if len(_prefix_classes(words)) > 2:
        raise AmbiguityOverflow(f"{len(words)} itinerary words at tolerance: {sorted(words)[:6]}")
    return sorted(words)


def _sectors(labels):
    """Split a ring of probe labels into runs of one face; graph probes separate runs."""
    n = len(labels)
    sector = np.full(n, -1)
    names: list = []
    off = [j for j in range(n) if labels[j] != ON_GRAPH]
    if not off:
        return sector, names
    # start right after a break so no run wraps around the seam
    breaks = [j for j in range(n) if labels[j] != labels[j - 1] or labels[j] == ON_GRAPH]
    first = breaks[0] if breaks else 0
    cur = -1
    for k in range(n):
        j = (first + k) % n
        if labels[j] == ON_GRAPH:
            cur = -1
            continue
        if cur == -1 or labels[j] != names[cur]:
            names.append(int(labels[j]))
            cur = len(names) - 1
        sector[j] = cur
    return sector, names


def _sector_toward(ring_data, center, q: complex, label: int):
    """Sector of the ring around ``center`` in the direction of ``q`` with face ``label``."""
    probes, here, sector, names, _ = ring_data
    if len(probes) == 1:
        return 0 if names[0] == label else None
    w, infc = _chart(center)
    d = _chart_of(q, infc) - w
    n = len(probes)
    k0 = int(round((cmath.phase(d) / (2 * math.pi)) * n - 0.5)) % n
    for r in range(n // 2 + 1):
        for k in ((k0 + r) % n, (k0 - r) % n):
            if here[k] == label:
                return int(sector[k])
    return None


def _label_paths(moves, names):
    """Face-label words of all sector paths through the per-step transition tables."""
    paths = [((s,), (lab,)) for s, lab in enumerate(names[0])]
    for i in range(len(moves)):
        nxt = {}
        for secs, word in paths:
            for b in moves[i].get(secs[-1], ()):
                w = word + (names[i + 1][b],)
                nxt.setdefault((b, w), (secs + (b,), w))
        if len(nxt) > MAX_WORDS:
            raise AmbiguityOverflow(f"more than {MAX_WORDS} label paths by step {i + 1}")
        paths = list(nxt.values())
    return {w for _, w in paths}


SINK_RADIUS = 0.05
ESCAPE_RADIUS = 50.0


def _normalize_near_sink(m: MapFamily, z, centers):
    """Slide a point converging to a superattracting sink back along its ray.

    Near a sink the graph consists of rays only, so the face of a point
    depends on its ray angle alone. Keeping the orbit at a fixed Böttcher
    modulus avoids collapsing onto the vertex in floating point.
    """
    if not np.isfinite(z):
        return z
    if m.is_polynomial and abs(z) > ESCAPE_RADIUS:
        w = boettcher_external(m, z)
        return complex(_inverse_boettcher_external(m, ESCAPE_RADIUS * w / abs(w))[0])
    for c in centers:
        if abs(z - c.c) * abs(c.A) < SINK_RADIUS:
            w = c.phi(z)
            if w is None or w == 0:
                return z
            return complex(c.phi_inverse(SINK_RADIUS * w / abs(w)))
    return z


def _sinks(m: MapFamily):
    pts = [c for c, _ in _sink_disks(m)]
    return pts + [INF] if m.is_polynomial else pts


def _chart_of(p, inf_chart):
    if not inf_chart:
        return p
    return 0j if not np.isfinite(p) else 1 / p


def _f_at_inf(m: MapFamily):
    return INF


def _prefix_classes(words):
    """Group finite words that are prefixes of equivalent infinite words."""
    def key(w):
        w = list(w)
        # strip a trailing run of 0s or 2s together with the digit before it
        j = len(w)
        while j > 0 and w[j - 1] == w[-1] and w[-1] in (0, 2):
            j -= 1
        if j == len(w):
            return tuple(w)
        tail = w[-1]
        if j == 0:
            return ("const",)
        d = w[j - 1]
        if tail == 2 and d < 2:
            return tuple(w[:j - 1]) + (d + 1, "0*")
        if tail == 0:
            return tuple(w[:j - 1]) + (d, "0*")
        return tuple(w)
    return {key(w) for w in words}


@dataclass
class PieceNest:
    family: MapFamily
    graph: Graph
    address: tuple
    estimate: complex
    diameter: float
    diameters: list  # running bound at each depth 0..n
    cloud: np.ndarray = field(default=None, repr=False)  # pulled-back samples of the last piece

    def to_json(self):
        return {"family": self.family.label(), "variant": self.graph.variant,
                "address": "".join(map(str, self.address)),
                "estimate": SpherePoint.of(self.estimate).to_json(),
                "diameter": self.diameter}


def _sample_candidates(g: Graph):
    m = g.family
    radii = np.geomspace(0.03, 3.0, 40)
    if m.tag == "newton":
        radii = np.concatenate([radii, np.geomspace(3.5, 300, 12)])
    ang = np.linspace(0, 2 * np.pi, 72, endpoint=False)
    centers = {"dbas": 0j, "cubic": -0.5 * m.param, "newton": 0j}
    z = (centers[m.tag] + radii[:, None] * np.exp(1j * ang[None, :])).ravel()
    keep = np.ones(z.shape, dtype=bool)
    if m.is_polynomial:
        keep &= np.array([green_external(m, x) for x in z]) < math.log(2.5)
    for c, A in _sink_disks(m):
        keep &= np.abs(z - c) > 0.3 / abs(A)
    return z[keep]


def _sink_disks(m: MapFamily):
    if m.tag == "dbas":
        r = 1j / math.sqrt(2)
        return [(r, Center(m, r).A), (-r, Center(m, -r).A)]
    if m.tag == "cubic":
        return [(0j, Center(m, 0j).A)]
    return [(r, Center(m, r).A) for r in m.roots()]


def _farthest_points(pts, n: int):
    pts = np.asarray(pts)
    xyz = _sphere_xyz(pts)
    chosen = [0]
    d = np.linalg.norm(xyz - xyz[0], axis=1)
    for _ in range(min(n, len(pts)) - 1):
        i = int(np.argmax(d))
        chosen.append(i)
        d = np.minimum(d, np.linalg.norm(xyz - xyz[i], axis=1))
    return pts[chosen]


def _face_samples(g: Graph, per_face: int = 16):
    """Per face: (base point, spread sample points) inside the level-0 piece."""
    cand = _sample_candidates(g)
    lab = g.locate_many(cand)
    dist = g._index.distance(cand)
    out = {}
    for j in range(3):
        sel = cand[(lab == j) & (dist > 1e-3)]
        if len(sel) == 0:
            raise GraphConstructionError(f"no sample points found in face {j}")
        dsel = dist[(lab == j) & (dist > 1e-3)]
        base = sel[int(np.argmax(dsel))]
        spread = _farthest_points(np.concatenate([[base], sel]), per_face)
        out[j] = (complex(base), spread)
    return out


MIN_SURVIVORS = 4


def _pull_back(g: Graph, pts, digit: int):
    """Preimages of ``pts`` lying in face ``digit``; NaN where none or ambiguous."""
    pre = g.family.preimages(pts)
    lab = g.locate_many(pre.ravel()).reshape(pre.shape)
    hit = lab == digit
    out = np.full(len(pts), np.nan + 0j)
    one = hit.sum(axis=1) == 1
    out[one] = pre[one][hit[one]]
    return out


def _spread(pts) -> float:
    pts = pts[~np.isnan(pts)]
    if len(pts) < 2:
        return math.inf
    xyz = _sphere_xyz(pts)
    diff = xyz[:, None, :] - xyz[None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=-1)) / 2)


def nest_point(g: Graph, w, depth: int, allow_deep: bool = False) -> PieceNest:
    """Point of the nest with address ``w[0..depth]`` by iterated inverse branches.

    The base point of the last face is pulled back through the faces named by
    the address, together with a spread of sample points whose pulled-back
    diameter bounds the piece. The diameter is reported as a running minimum
    over depths (pieces are nested).
    """
    if depth > DEFAULT_DEPTH_CAP and not allow_deep:
        raise ValueError(f"depth {depth} exceeds the cap {DEFAULT_DEPTH_CAP}")
    if isinstance(w, TriadicWord):
        addr = w.prefix(depth + 1)
    else:
        addr = tuple(int(x) for x in w)[: depth + 1]
        if len(addr) < depth + 1:
            raise ValueError("address shorter than depth + 1")
    samples = g.face_samples
    # the cloud of level j is pulled back through addr[j-1], ..., addr[0];
    # all levels still above step i share one batched pull-back
    clouds = [np.concatenate([[samples[e][0]], samples[e][1]]) for e in addr]
    sizes = [len(c) for c in clouds]
    for i in range(depth - 1, -1, -1):
        active = np.concatenate(clouds[i + 1:])
        pulled = _pull_back_masked(g, active, addr[i])
        clouds[i + 1:] = np.split(pulled, np.cumsum(sizes[i + 1:])[:-1])
    diams = []
    for n, pts in enumerate(clouds):
        alive = pts[~np.isnan(pts)]
        if len(alive) < MIN_SURVIVORS:
            raise BranchSelectionFailure(
                f"no preimages in the required faces for address {addr[:n + 1]}")
        d = _spread(alive)
        diams.append(min(d, diams[-1]) if diams else d)
    last = clouds[-1]
    # the base point is preferred; a surviving sample stands in when it was lost
    est = complex(last[0] if not np.isnan(last[0]) else last[~np.isnan(last)][0])
    return PieceNest(g.family, g, addr, est, diams[-1], diams, last[~np.isnan(last)])


def _pull_back_masked(g: Graph, pts, digit):
    ok = ~np.isnan(pts)
    out = np.full(pts.shape, np.nan + 0j)
    if ok.any():
        out[ok] = _pull_back(g, pts[ok], digit)
    return out
