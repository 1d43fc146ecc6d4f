"""Semi-conjugacies from the two polynomial planes onto the Newton sphere.

A point of the cubic (or double-basilica) plane is sent to the Newton point
with the same itinerary: its itinerary words are read on the source graph,
then the nest with that address is computed on the Newton graph. The
double-basilica graph is labelled so that the ray of angle ``t`` lies in the
face named by the itinerary of ``-t``; :func:`dbas_angle_itinerary` is the
matching adapter for angle-level computations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .angles import Angle, ItinClass, TriadicWord, itinerary_of_angle
from .boettcher import (
    Center,
    default_newton_labels,
    green_external,
    sphere_dist,
    trace_external_rays,
)
from .maps import INF, MapFamily, SpherePoint
from .puzzle import (
    DEFAULT_DEPTH_CAP,
    AmbiguityOverflow,
    BranchSelectionFailure,
    Graph,
    _pull_back,
    build_graph,
    itinerary_of_point,
    nest_point,
)

DEFAULT_DEPTH = 12
MEMBERSHIP_TOL = 1e-4
SIDES = ("dbas", "cubic")


class NotInFilledJulia(ValueError):
    pass


class InsufficientSamples(RuntimeError):
    pass


def dbas_angle_itinerary(t) -> ItinClass:
    """Itinerary class that the double basilica attaches to the ray of angle ``t``."""
    return itinerary_of_angle(-Angle.of(t))


def source_angle_itinerary(side: str, t) -> ItinClass:
    return dbas_angle_itinerary(t) if side == "dbas" else itinerary_of_angle(t)


@dataclass
class SemiConj:
    side: str
    source: MapFamily
    newton: MapFamily
    source_graph: Graph
    newton_graph: Graph
    depth: int = DEFAULT_DEPTH

    @property
    def lam(self) -> complex:
        return self.newton.param

    @property
    def a(self):
        return self.source.param if self.side == "cubic" else None


def newton_graph_for(lam, t=None, renormalizable: bool = True, k=None) -> Graph:
    m = MapFamily.newton(lam)
    if renormalizable:
        t = Angle.of(t)
        return build_graph(m, "newton-renorm", t0=t.half(), k=k)
    return build_graph(m, "newton-boundary", t=t)


def make_semiconj(side: str, lam, a=None, t=None, k=None, renormalizable: bool = True,
                  depth: int = DEFAULT_DEPTH, newton_graph: Graph | None = None) -> SemiConj:
    """Build the source graph for ``side`` and (unless given) the Newton graph.

    ``t`` is the cusp angle of the copy (renormalizable case, with period
    ``k`` of ``t/2``) or the boundary angle (``renormalizable=False``).
    """
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}")
    t = Angle.of(t)
    if newton_graph is None:
        newton_graph = newton_graph_for(lam, t, renormalizable, k)
    if side == "dbas":
        src = MapFamily.dbas()
        g = build_graph(src, "dbas")
    else:
        src = MapFamily.cubic(a)
        g = (build_graph(src, "cubic-renorm", t0=t.half(), k=k) if renormalizable
             else build_graph(src, "cubic-boundary", t=t))
    return SemiConj(side, src, newton_graph.family, g, newton_graph, depth)


def _check_member(s: SemiConj, z: complex):
    if not np.isfinite(z) or green_external(s.source, z) > MEMBERSHIP_TOL:
        raise NotInFilledJulia(f"{z} is not in the filled Julia set of {s.source.label()}")


@dataclass
class PsiValue:
    image: complex
    err: float
    words: list
    nests: list = field(repr=False, default_factory=list)

    def to_json(self):
        return {"image": SpherePoint.of(self.image).to_json(), "err": self.err,
                "words": ["".join(map(str, w)) for w in self.words]}


def psi_detail(s: SemiConj, z, depth: int | None = None) -> PsiValue:
    """Image of ``z`` with all itinerary words and the Newton nest of each."""
    depth = s.depth if depth is None else depth
    z = SpherePoint.of(z).to_complex()
    _check_member(s, z)
    words = itinerary_of_point(s.source_graph, z, depth, allow_deep=depth > DEFAULT_DEPTH_CAP)
    nests = []
    for w in words:
        try:
            nests.append(nest_point(s.newton_graph, w, depth, allow_deep=depth > DEFAULT_DEPTH_CAP))
        except BranchSelectionFailure:
            continue
    if not nests:
        raise BranchSelectionFailure(f"no itinerary word of {z} is admissible on the Newton graph")
    best = min(nests, key=lambda n: n.diameter)
    return PsiValue(best.estimate, best.diameter, words, nests)


def psi(s: SemiConj, z, depth: int | None = None):
    """``(image, err)``: the Newton point with the itinerary of ``z`` and its nest diameter."""
    v = psi_detail(s, z, depth)
    return v.image, v.err


def _spread_to(pts, target) -> float:
    return float(np.max(sphere_dist(np.asarray(pts), target))) if len(pts) else math.inf


def conjugacy_residual(s: SemiConj, z, depth: int | None = None):
    """``(residual, bound)`` for ``|N(psi(z)) - psi(f(z))|`` on the sphere.

    The bound is the size of the image under ``N`` of the piece holding
    ``psi(z)`` plus the nest diameter of ``psi(f(z))``.
    """
    v = psi_detail(s, z, depth)
    fz = complex(s.source.f(complex(z)))
    w = psi_detail(s, fz, depth)
    nz = complex(s.newton.f(v.image))
    # the nest of z whose shifted address matches an address of f(z) is the relevant one
    pairs = [(a, b) for a in v.nests for b in w.nests]
    best = None
    for a, b in pairs:
        img = complex(s.newton.f(a.estimate))
        res = sphere_dist(img, b.estimate)
        bound = _spread_to(s.newton.f(a.cloud), img) * 2 + b.diameter
        if best is None or res - bound < best[0] - best[1]:
            best = (res, bound)
    if best is None:
        best = (sphere_dist(nz, w.image), v.err + w.err)
    return best


def _random_angles(rng, n: int, max_den: int):
    out = []
    while len(out) < n:
        q = int(rng.integers(2, max_den + 1))
        p = int(rng.integers(0, q))
        out.append(Angle(p, q))
    return out


def julia_samples(s: SemiConj, samples: int, seed: int = 0, max_den: int = 3 ** 8):
    """Landing points of rays at random rational angles, with the angles used."""
    rng = np.random.default_rng(seed)
    angles = _random_angles(rng, samples, max_den)
    rays = trace_external_rays(s.source, angles)
    landed = [(r.angle, complex(r.landing)) for r in rays if r.landed]
    if len(landed) < 0.8 * samples:
        raise InsufficientSamples(f"only {len(landed)} of {samples} rays landed")
    return landed


def verify_semiconjugacy(s: SemiConj, samples: int = 100, seed: int = 0,
                         depth: int | None = None, compare_depth: int | None = None) -> dict:
    """Residual statistics of the conjugacy relation on sampled Julia points.

    With ``compare_depth`` the residuals are recomputed there and the share
    of samples whose residual dropped is reported.
    """
    depth = s.depth if depth is None else depth
    pts = julia_samples(s, samples, seed)
    residuals, bounds, deeper, skipped = [], [], [], 0
    for _, z in pts:
        try:
            r, b = conjugacy_residual(s, z, depth)
            r2 = conjugacy_residual(s, z, compare_depth)[0] if compare_depth else None
        except (AmbiguityOverflow, BranchSelectionFailure, NotInFilledJulia):
            skipped += 1
            continue
        residuals.append(r)
        bounds.append(b)
        if r2 is not None:
            deeper.append(r2)
    res = np.array(residuals)
    report = {
        "side": s.side,
        "lambda": [s.lam.real, s.lam.imag],
        "a": None if s.a is None else [s.a.real, s.a.imag],
        "depth": depth,
        "samples": len(residuals),
        "skipped": skipped,
        "max_residual": float(res.max()) if len(res) else None,
        "mean_residual": float(res.mean()) if len(res) else None,
        "violations": int(np.sum(res >= np.array(bounds))) if len(res) else 0,
        "uncovered_fraction": None,
    }
    if compare_depth:
        r2 = np.array(deeper)
        report["compare_depth"] = compare_depth
        report["decreased_fraction"] = float(np.mean(r2 < res)) if len(res) else 0.0
    return report


# ------------------------------------------------------------ ray equivalence


@dataclass
class Certificate:
    equivalent: bool
    distance: float
    bound: float
    words: tuple
    common_prefix: str

    def to_json(self):
        return {"equivalent": self.equivalent, "distance": self.distance, "bound": self.bound,
                "words": ["".join(map(str, w)) for w in self.words],
                "common_prefix": self.common_prefix}


def _common_prefix(u, v) -> str:
    out = []
    for x, y in zip(u, v):
        if x != y:
            break
        out.append(str(x))
    return "".join(out)


def ray_equivalent(sa: SemiConj, z, sb: SemiConj, w, depth: int | None = None) -> Certificate:
    """Do ``z`` (plane of ``sa``) and ``w`` (plane of ``sb``) have the same image?

    Equality is decided up to the nest diameters: the closest pair of nests
    of the two points is compared with the sum of their diameters.
    """
    pa, pb = psi_detail(sa, z, depth), psi_detail(sb, w, depth)
    best = None
    for x in pa.nests:
        for y in pb.nests:
            d = sphere_dist(x.estimate, y.estimate)
            bound = x.diameter + y.diameter
            if best is None or d - bound < best[0] - best[1]:
                best = (d, bound, x.address, y.address)
    d, bound, u, v = best
    return Certificate(bool(d < bound), float(d), float(bound), (u, v), _common_prefix(u, v))


# ------------------------------------------------------------- ray chains


@dataclass
class ChainEntry:
    angle: Angle
    side: str
    landing: complex


@dataclass
class RayClassChain:
    entries: list

    def angles(self):
        return [(e.side, e.angle) for e in self.entries]

    def to_json(self):
        return [{"side": e.side, "angle": str(e.angle),
                 "landing": SpherePoint.of(e.landing).to_json()} for e in self.entries]


def _colanding_candidates(t: Angle, limit: int = 400):
    """Angles that can share a landing point with ``t``: same preperiod and period under tripling."""
    x = t.as_fraction()
    seen, j = {}, 0
    while x not in seen:
        seen[x] = j
        x = (3 * x) % 1
        j += 1
    pre = seen[x]
    per = j - pre
    den = 3 ** per - 1
    out = []
    for v in range(den):
        for k in range(3 ** pre):
            out.append(Angle.of((Fraction(v, den) + k) / 3 ** pre))
            if len(out) > limit:
                return None
    return out


def ray_class_chain(s_cubic: SemiConj, s_dbas: SemiConj, t, max_entries: int = 8,
                    tol: float = 1e-6) -> RayClassChain:
    """Alternating chain of rays glued by ``t <-> -t`` and co-landing in each plane.

    Starts at the cubic ray of angle ``t``. Co-landing partners are searched
    among angles with the same tripling preperiod and period.
    """
    t = Angle.of(t)
    planes = {"cubic": s_cubic.source, "dbas": s_dbas.source}
    entries, seen = [], set()
    frontier = [("cubic", t)]
    landings: dict = {}

    def land(side, angles):
        todo = [a for a in angles if (side, a) not in landings]
        if todo:
            for r in trace_external_rays(planes[side], todo):
                landings[(side, r.angle)] = complex(r.landing) if r.landed else None
        return [landings[(side, a)] for a in angles]

    while frontier and len(entries) < max_entries:
        side, a = frontier.pop(0)
        if (side, a) in seen:
            continue
        seen.add((side, a))
        z = land(side, [a])[0]
        if z is None:
            break
        entries.append(ChainEntry(a, side, z))
        other = "dbas" if side == "cubic" else "cubic"
        frontier.append((other, -a))
        cands = _colanding_candidates(a) or []
        cands = [c for c in cands if c != a and (side, c) not in seen]
        for c, zc in zip(cands, land(side, cands)):
            if zc is not None and sphere_dist(zc, z) < tol:
                frontier.append((side, c))
    return RayClassChain(entries)


# -------------------------------------------------------------- surjectivity


@dataclass
class Coverage:
    point: complex
    sides: tuple
    candidates: dict


def _newton_sinks(s: SemiConj):
    roots = default_newton_labels(s.newton.param)
    labels = {}
    for name in ("B1", "B2", "B3"):
        labels[name] = Center(s.newton, roots[name])
    return labels


def _source_center(side: str, m: MapFamily, basin: str) -> Center:
    if side == "dbas":
        r = 1j / math.sqrt(2)
        return Center(m, r if basin == "B2" else -r)
    return Center(m, 0j)


def _pull_along(g: Graph, z: complex, digits) -> complex | None:
    for d in reversed(digits):
        z = complex(_pull_back(g, np.array([z]), d)[0])
        if np.isnan(z):
            return None
    return z


def _basin_candidate(s: SemiConj, g: Graph, sink: Center, hit: str, orbit) -> complex | None:
    """Source point in the basin matching ``hit`` whose orbit shadows ``orbit``.

    Digits are read until the orbit meets the graph (a closed basin drawn into
    it or an internal ray); the Böttcher coordinate there is carried to the
    source basin and pulled back. Drawn basin closures are truncated, so if the
    pull-back has no branch the entry point is moved one step earlier.
    """
    digits = []
    for p in orbit[:-1]:
        lab = int(g.locate_many([p])[0])
        if lab < 0:
            break
        digits.append(lab)
    src = _source_center(s.side, s.source, hit)
    steps = len(orbit) - 1
    for j in range(len(digits), -1, -1):
        wphi = sink.phi(orbit[j])
        zsrc = src.phi_inverse(wphi) if wphi is not None else None
        if zsrc is None or not np.isfinite(zsrc):
            continue
        back = _pull_along(s.source_graph, complex(zsrc), digits[:j])
        if back is not None and _shadows(src, back, steps):
            return back
    return None


def _shadows(src: Center, z: complex, steps: int) -> bool:
    # the two sink disks are measured in different Böttcher scales: allow slack
    for _ in range(steps + 4):
        if abs(z - src.c) * abs(src.A) < 0.05:
            return True
        z = complex(src.map.f(z))
    return False


def cover_point(s_dbas: SemiConj, s_cubic: SemiConj, u, cap: int = 400) -> Coverage:
    """Find source points that plausibly map to the Newton point ``u``.

    Fatou points are matched through Böttcher coordinates of the basin their
    orbit enters, then pulled back along the Newton itinerary; other points
    are matched by transporting their itinerary to the source graphs.
    """
    u = SpherePoint.of(u).to_complex()
    m = s_dbas.newton
    g = s_dbas.newton_graph
    sinks = _newton_sinks(s_dbas)
    cands: dict = {}
    orbit = [u]
    z = u
    hit = None
    for _ in range(cap):
        if not np.isfinite(z):
            break
        for name, c in sinks.items():
            if abs(z - c.c) * abs(c.A) < 0.05:
                hit = name
                break
        if hit:
            break
        z = complex(m.f(z))
        orbit.append(z)
    if hit is not None:
        side = "cubic" if hit == "B1" else "dbas"
        s = s_cubic if side == "cubic" else s_dbas
        if s is not None:
            back = _basin_candidate(s, g, sinks[hit], hit, orbit)
            if back is not None:
                cands[side] = back
        return Coverage(u, tuple(cands), cands)
    if s_cubic is not None and s_cubic.newton_graph.small_julia is not None:
        ksets = s_cubic.newton_graph.fat
        if any(f.contains(np.array([x]))[0] for f in ksets for x in orbit[:8] if np.isfinite(x)):
            cands["cubic"] = None
            return Coverage(u, ("cubic",), cands)
    depth = s_dbas.depth
    try:
        words = itinerary_of_point(g, u, depth)
    except AmbiguityOverflow:
        return Coverage(u, (), cands)
    for s in (s_dbas, s_cubic):
        if s is None:
            continue
        for w in words:
            try:
                cands[s.side] = nest_point(s.source_graph, w, depth).estimate
                break
            except BranchSelectionFailure:
                continue
    return Coverage(u, tuple(cands), cands)


def surjectivity_sample(s_dbas: SemiConj, s_cubic: SemiConj, resolution: int = 200,
                        extent: float = 2.0) -> dict:
    """Share of a ``resolution x resolution`` grid of the Newton plane left uncovered."""
    xs = np.linspace(-extent, extent, resolution)
    total, uncovered, by_side = 0, 0, {"dbas": 0, "cubic": 0}
    for y in xs:
        for x in xs:
            c = cover_point(s_dbas, s_cubic, complex(x, y))
            total += 1
            if not c.sides:
                uncovered += 1
            for side in c.sides:
                by_side[side] += 1
    return {"lambda": [s_dbas.lam.real, s_dbas.lam.imag],
            "a": None if s_cubic is None else [s_cubic.a.real, s_cubic.a.imag],
            "depth": s_dbas.depth, "samples": total, "uncovered_fraction": uncovered / total,
            "covered_by": by_side}
