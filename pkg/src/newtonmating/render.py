"""Raster images of dynamical and parameter planes, written as PPM.

Colorings are computed on a numpy grid; overlays (rays, graphs, landing
marks) are rasterized on top. Every render returns the image together with
a JSON-ready sidecar describing the spec and what each overlay produced.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .angles import Angle
from .boettcher import default_newton_labels, trace_center_rays, trace_external_rays, Center
from .maps import MapFamily, SpherePoint

MAX_SIDE = 8192
COLORINGS = ("escape", "basin", "potential")
OVERLAYS = ("rays", "graph", "small-julia", "landings")
ESCAPE_RADIUS = 1e3
PARAM_CAP = 1000
PARAM_TOL = 1e-8

BASIN_COLORS = {
    "B1": (200, 60, 50), "B2": (60, 170, 70), "B3": (50, 90, 200),
    "A1": (200, 60, 50), "A2": (60, 170, 70), "A3": (50, 90, 200),
    "other": (230, 200, 60),
}
OVERLAY_COLOR = (255, 255, 255)
LANDING_COLOR = (255, 40, 200)


@dataclass
class RenderSpec:
    center: complex = 0j
    width: float = 4.0
    resolution: tuple = (400, 400)
    coloring: str = "basin"
    overlays: list = field(default_factory=list)
    angles: list = field(default_factory=list)
    max_iter: int = 200

    def __post_init__(self):
        w, h = (int(x) for x in self.resolution)
        if not (0 < w <= MAX_SIDE and 0 < h <= MAX_SIDE):
            raise ValueError(f"resolution must be within 1..{MAX_SIDE} per side")
        if not self.width > 0:
            raise ValueError("window width must be positive")
        if self.coloring not in COLORINGS:
            raise ValueError(f"coloring must be one of {COLORINGS}")
        bad = [o for o in self.overlays if o not in OVERLAYS]
        if bad:
            raise ValueError(f"unknown overlays {bad}")
        self.resolution = (w, h)
        self.center = complex(self.center)

    @property
    def height(self) -> float:
        w, h = self.resolution
        return self.width * h / w

    def grid(self) -> np.ndarray:
        w, h = self.resolution
        xs = self.center.real + (np.arange(w) / max(w - 1, 1) - 0.5) * self.width
        ys = self.center.imag + (0.5 - np.arange(h) / max(h - 1, 1)) * self.height
        return xs[None, :] + 1j * ys[:, None]

    def to_pixel(self, z):
        """Pixel (row, col) arrays for complex points; non-finite entries map to -1."""
        z = np.asarray(z, dtype=complex)
        w, h = self.resolution
        fin = np.isfinite(z)
        zz = np.where(fin, z, 0)
        col = np.rint(((zz.real - self.center.real) / self.width + 0.5) * (w - 1))
        row = np.rint((0.5 - (zz.imag - self.center.imag) / self.height) * (h - 1))
        col = np.where(fin, col, -1).astype(int)
        row = np.where(fin, row, -1).astype(int)
        return row, col

    def to_json(self) -> dict:
        d = asdict(self)
        d["center"] = [self.center.real, self.center.imag]
        d["resolution"] = list(self.resolution)
        d["angles"] = [str(Angle.of(a)) for a in self.angles]
        return d


def _shade(base, level):
    level = np.clip(level, 0.0, 1.0)[..., None]
    return (np.asarray(base, dtype=float) * (0.35 + 0.65 * level)).astype(np.uint8)


def _polynomial_sinks(m: MapFamily):
    if m.tag == "dbas":
        r = 1j / math.sqrt(2)
        return {"A2": r, "A3": -r}
    return {"A1": 0j}


def julia_image(m: MapFamily, spec: RenderSpec) -> np.ndarray:
    """RGB image of the dynamical plane of ``m``."""
    z = spec.grid()
    n = spec.max_iter
    if m.is_polynomial:
        sinks = _polynomial_sinks(m)
    else:
        sinks = default_newton_labels(m.param)
    names = list(sinks)
    centers = np.array([sinks[k] for k in names])
    label = np.full(z.shape, -1)
    count = np.zeros(z.shape)
    escaped = np.zeros(z.shape, dtype=bool)
    smooth = np.zeros(z.shape)
    with np.errstate(all="ignore"):
        for i in range(n):
            active = (label < 0) & ~escaped
            if not active.any():
                break
            z = np.where(active, m.f(z), z)
            if m.is_polynomial:
                esc = active & (np.abs(z) > ESCAPE_RADIUS)
                # fractional escape count from the Green function at the radius
                smooth[esc] = i + 1 - np.log(np.log(np.abs(z[esc])) / math.log(ESCAPE_RADIUS)) / math.log(3)
                escaped |= esc
            d = np.abs(z[..., None] - centers)
            near = active[..., None] & (d < 1e-6)
            hit = near.any(axis=-1)
            label[hit] = np.argmax(near[hit], axis=-1)
            count[hit] = i + 1
    img = np.zeros(z.shape + (3,), dtype=np.uint8)
    if spec.coloring == "basin":
        for j, name in enumerate(names):
            sel = label == j
            img[sel] = _shade(BASIN_COLORS[name], 1 - count[sel] / n)[...]
        rest = (label < 0) & ~escaped
        img[rest] = BASIN_COLORS["other"] if not m.is_polynomial else (0, 0, 0)
        if m.is_polynomial:
            img[escaped] = _shade((220, 220, 220), smooth[escaped] / 40)
    elif spec.coloring == "escape":
        steps = np.where(escaped, smooth, np.where(label >= 0, count, n))
        level = (steps % 32) / 32
        img[...] = _shade((240, 180, 90), level)
        img[(label < 0) & ~escaped] = 0
    else:
        # potential bands: Green function outside, Böttcher modulus rings inside
        g = np.where(escaped, 3.0 ** (-smooth) * math.log(ESCAPE_RADIUS), 0)
        inner = np.where(label >= 0, count, 0)
        band = np.where(escaped, (np.floor(np.log2(np.maximum(g, 1e-300)) * 2) % 2),
                        inner % 2)
        img[...] = np.where(band[..., None] > 0, 200, 90).astype(np.uint8)
        img[(label < 0) & ~escaped] = 0
    return img


def param_classes(family: str, spec: RenderSpec, cap: int = PARAM_CAP, tol: float = PARAM_TOL):
    """Per-pixel class of the free critical orbit and the iteration it was decided.

    Classes: 0 escapes (cubic) or reaches a non-principal root (Newton),
    1 converges to the marked fixed point (``A1``/``B1``), 2 undecided
    within the cap (bounded orbits, e.g. Mandelbrot copies).
    """
    p = spec.grid()
    cls = np.full(p.shape, 2)
    when = np.full(p.shape, cap)
    with np.errstate(all="ignore"):
        if family == "cubic":
            z = -p.copy()
            for i in range(cap):
                z = z * z * (z + 1.5 * p)
                und = cls == 2
                esc = und & (np.abs(z) > ESCAPE_RADIUS)
                conv = und & (np.abs(z) < tol)
                cls[esc], when[esc] = 0, i
                cls[conv], when[conv] = 1, i
                z = np.where(cls == 2, z, 0)
        else:
            lam2 = p * p
            pp, qq = -(0.75 + lam2), lam2 - 0.25
            r1 = -0.5 - p
            others = (-0.5 + p, np.ones_like(p))
            z = np.zeros_like(p)
            for i in range(cap):
                z = (2 * z ** 3 - qq) / (3 * z * z + pp)
                und = cls == 2
                conv = und & (np.abs(z - r1) < tol)
                cls[conv], when[conv] = 1, i
                for r in others:
                    hit = (cls == 2) & (np.abs(z - r) < tol)
                    cls[hit], when[hit] = 0, i
                z = np.where(np.isfinite(z), z, 1e6)
    return cls, when


def param_image(family: str, spec: RenderSpec, cap: int = PARAM_CAP) -> np.ndarray:
    cls, when = param_classes(family, spec, cap)
    img = np.zeros(cls.shape + (3,), dtype=np.uint8)
    level = 1 - np.minimum(when, 60) / 60
    img[cls == 0] = _shade((230, 230, 230), level[cls == 0])
    img[cls == 1] = _shade(BASIN_COLORS["A1"], level[cls == 1])
    return img


def draw_polyline(img: np.ndarray, spec: RenderSpec, pts, color=OVERLAY_COLOR) -> None:
    """Rasterize a polyline; segments leaving the window or crossing infinity are skipped."""
    pts = np.asarray(pts, dtype=complex)
    if len(pts) == 0:
        return
    h, w = img.shape[:2]
    px = max(spec.width / w, spec.height / h)
    dense = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        n = min(int(abs(b - a) / px) + 1, 4 * max(w, h))
        dense.append(a + (b - a) * np.linspace(0, 1, n + 1)[1:])
    z = np.concatenate(dense)
    row, col = spec.to_pixel(z)
    ok = (row >= 0) & (row < h) & (col >= 0) & (col < w)
    img[row[ok], col[ok]] = color


def mark(img: np.ndarray, spec: RenderSpec, z, color=LANDING_COLOR, size: int = 2) -> None:
    if z is None or not np.isfinite(z):
        return
    h, w = img.shape[:2]
    row, col = spec.to_pixel(np.array([z]))
    r, c = int(row[0]), int(col[0])
    img[max(r - size, 0):max(min(r + size + 1, h), 0), max(c - size, 0):max(min(c + size + 1, w), 0)] = color


def ray_overlay(img, spec: RenderSpec, m: MapFamily, landings: bool) -> list:
    """Draw rays at ``spec.angles``: external rays for polynomials, root-basin rays for Newton."""
    out = []
    angles = [Angle.of(a) for a in spec.angles]
    if not angles:
        return out
    if m.is_polynomial:
        rays = trace_external_rays(m, angles)
    else:
        rays = []
        for name, root in default_newton_labels(m.param).items():
            rays += trace_center_rays(Center(m, root), angles, basin_label=name)
    for r in rays:
        draw_polyline(img, spec, r.points)
        if landings and r.landed:
            mark(img, spec, complex(r.landing))
        land = SpherePoint.of(r.landing).to_json() if r.landing is not None else None
        out.append({"basin": r.basin, "angle": str(r.angle), "status": r.status,
                    "landing": land, "err": r.err})
    return out


def graph_overlay(img, spec: RenderSpec, g, small_julia: bool) -> dict:
    for arc in g.arcs:
        draw_polyline(img, spec, arc.points)
    info = {"variant": g.variant, "arcs": len(g.arcs),
            "faces": {f"{i}{j}": lab for (i, j), lab in g.face_of_pair.items()}}
    if small_julia and g.small_julia is not None:
        for z in g.small_julia.cloud:
            mark(img, spec, complex(z), color=(255, 255, 0), size=0)
        info["small_julia_points"] = len(g.small_julia.cloud)
    return info


def write_ppm(path, img: np.ndarray) -> None:
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def write_png(path, img: np.ndarray) -> bool:
    """Write a PNG when Pillow is importable; returns whether it was written."""
    try:
        from PIL import Image
    except ImportError:
        return False
    Image.fromarray(img, "RGB").save(path)
    return True
