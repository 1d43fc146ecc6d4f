"""The three cubic families and their evaluation on the Riemann sphere.

``Dbas`` is z(z^2 + 3/2), ``Cubic(a)`` is z^2 (z + 3a/2) and ``Newton(lam)``
is Newton's method for (z + 1/2 - lam)(z + 1/2 + lam)(z - 1).

Points are :class:`SpherePoint` values: a complex number in either the
finite chart or the chart ``w = 1/z`` around infinity. Vectorised helpers
(``f``, ``df``, ``preimages``) work on plain complex numpy arrays.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

CHART_RADIUS = 4.0
INF = complex(math.inf, 0.0)


@dataclass(frozen=True)
class SpherePoint:
    value: complex
    chart: str = "finite"  # or "infinity": value stores w = 1/z

    def __post_init__(self):
        v = complex(self.value)
        chart = self.chart
        if chart not in ("finite", "infinity"):
            raise ValueError(f"unknown chart {chart!r}")
        if chart == "finite" and not cmath.isfinite(v):
            v, chart = 0j, "infinity"
        elif chart == "finite" and abs(v) > CHART_RADIUS:
            v, chart = 1 / v, "infinity"
        elif chart == "infinity" and abs(v) > CHART_RADIUS:
            v, chart = 1 / v, "finite"
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "chart", chart)

    @classmethod
    def of(cls, z) -> "SpherePoint":
        if isinstance(z, SpherePoint):
            return z
        return cls(complex(z))

    @classmethod
    def infinity(cls) -> "SpherePoint":
        return cls(0j, "infinity")

    @property
    def is_infinity(self) -> bool:
        return self.chart == "infinity" and self.value == 0

    def to_complex(self) -> complex:
        """The point as a complex number, ``inf`` for infinity."""
        if self.chart == "finite":
            return self.value
        return INF if self.value == 0 else 1 / self.value

    def to_json(self):
        z = self.to_complex()
        if not cmath.isfinite(z):
            return None
        return [z.real, z.imag]


def chordal(z, w):
    """Chordal distance on the sphere; accepts complex arrays with ``inf`` entries."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    zi, wi = ~np.isfinite(z), ~np.isfinite(w)
    zf = np.where(zi, 0, z)
    wf = np.where(wi, 0, w)
    both = 2 * np.abs(zf - wf) / np.sqrt((1 + np.abs(zf) ** 2) * (1 + np.abs(wf) ** 2))
    only_z = 2 / np.sqrt(1 + np.abs(wf) ** 2)
    only_w = 2 / np.sqrt(1 + np.abs(zf) ** 2)
    out = np.where(zi & wi, 0.0, np.where(zi, only_z, np.where(wi, only_w, both)))
    return out if out.ndim else float(out)


def _as_complex(z):
    if isinstance(z, SpherePoint):
        return z.to_complex()
    return z


class MapFamily:
    """A member of one of the three families; ``tag`` is dbas, cubic or newton."""

    degree = 3

    def __init__(self, tag: str, param: complex = 0j):
        if tag not in ("dbas", "cubic", "newton"):
            raise ValueError(f"unknown family {tag!r}")
        self.tag = tag
        self.param = complex(param)
        if tag == "newton":
            if any(abs(self.param - b) < 1e-12 for b in (-1.5, 0.0, 1.5)):
                raise ValueError("degenerate Newton parameter")
            self.p, self.q = _newton_pq(self.param)

    @classmethod
    def dbas(cls) -> "MapFamily":
        return cls("dbas")

    @classmethod
    def cubic(cls, a) -> "MapFamily":
        return cls("cubic", a)

    @classmethod
    def newton(cls, lam) -> "MapFamily":
        return cls("newton", lam)

    @property
    def is_polynomial(self) -> bool:
        return self.tag != "newton"

    def __repr__(self):
        if self.tag == "dbas":
            return "MapFamily.dbas()"
        return f"MapFamily.{self.tag}({self.param!r})"

    def __eq__(self, other):
        return isinstance(other, MapFamily) and (self.tag, self.param) == (other.tag, other.param)

    def __hash__(self):
        return hash((self.tag, self.param))

    def label(self) -> str:
        if self.tag == "dbas":
            return "dbas"
        return f"{self.tag}({self.param.real:.12g},{self.param.imag:.12g})"

    # polynomial coefficients of z^3 + c2 z^2 + c1 z (polynomial families)
    def _poly(self):
        if self.tag == "dbas":
            return 0.0, 1.5
        return 1.5 * self.param, 0.0

    def f(self, z):
        """Vectorised evaluation on finite complex values (poles give ``inf``)."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            if self.tag == "newton":
                den = 3 * z * z + self.p
                out = (2 * z ** 3 - self.q) / den
                out = np.where(den == 0, INF, out)
            else:
                c2, c1 = self._poly()
                out = z * (z * (z + c2) + c1)
            out = np.where(np.isfinite(z), out, INF)
        return out if out.ndim else complex(out)

    def df(self, z):
        z = np.asarray(z, dtype=complex)
        with np.errstate(all="ignore"):
            if self.tag == "newton":
                pz = z ** 3 + self.p * z + self.q
                out = 6 * z * pz / (3 * z * z + self.p) ** 2
            else:
                c2, c1 = self._poly()
                out = 3 * z * z + 2 * c2 * z + c1
        return out if out.ndim else complex(out)

    def f_inf_chart(self, w):
        """The map in the coordinate ``w = 1/z``: returns ``1/f(1/w)``."""
        w = np.asarray(w, dtype=complex)
        with np.errstate(all="ignore"):
            if self.tag == "newton":
                out = w * (3 + self.p * w * w) / (2 - self.q * w ** 3)
            else:
                c2, c1 = self._poly()
                out = w ** 3 / (1 + c2 * w + c1 * w * w)
        return out if out.ndim else complex(out)

    def spherical_derivative(self, z):
        """``|f'(z)| (1 + |z|^2) / (1 + |f(z)|^2)``, with the limit at infinity."""
        z = np.asarray(z, dtype=complex)
        fin = np.isfinite(z)
        zz = np.where(fin, z, 0)
        with np.errstate(all="ignore"):
            fz = self.f(zz)
            d = np.abs(self.df(zz)) * (1 + np.abs(zz) ** 2) / (1 + np.abs(fz) ** 2)
            # pole: derivative of 1/f at the pole
            d = np.where(np.isfinite(fz), d, _pole_sphder(self, zz))
            inf_val = _inf_sphder(self)
            out = np.where(fin, d, inf_val)
        return out if out.ndim else float(out)

    def preimages(self, z):
        """All three preimages of each entry of ``z`` (shape ``z.shape + (3,)``)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        fin = np.isfinite(z)
        zf = np.where(fin, z, 0)
        if self.tag == "newton":
            # 2x^3 - 3z x^2 - p z - q = 0
            c = np.stack([-1.5 * zf, np.zeros_like(zf), (-self.p * zf - self.q) / 2], axis=-1)
        else:
            c2, c1 = self._poly()
            c = np.stack([np.full_like(zf, c2), np.full_like(zf, c1), -zf], axis=-1)
        roots = _monic_cubic_roots(c)
        # one Newton polish step on f(x) = z
        with np.errstate(all="ignore"):
            fx = self.f(roots) - zf[..., None]
            d = self.df(roots)
            step = np.where((np.abs(d) > 1e-300) & np.isfinite(fx), fx / d, 0)
            polished = roots - step
            better = np.abs(self.f(polished) - zf[..., None]) <= np.abs(fx)
            roots = np.where(better, polished, roots)
        if not fin.all():
            inf_pre = self._preimages_of_infinity()
            roots[~fin] = inf_pre
        return roots

    def _preimages_of_infinity(self):
        if self.tag == "newton":
            s = cmath.sqrt(-self.p / 3)
            return np.array([INF, s, -s])
        return np.array([INF, INF, INF])

    def roots(self):
        """Roots of the Newton polynomial: ``-1/2 - lam``, ``-1/2 + lam``, ``1``."""
        if self.tag != "newton":
            raise ValueError("only Newton maps have roots")
        lam = self.param
        return [-0.5 - lam, -0.5 + lam, 1.0 + 0j]


def _pole_sphder(m: MapFamily, z):
    # near a pole x0: f ~ r/(z - x0), spherical derivative -> (1+|x0|^2)/|r|
    with np.errstate(all="ignore"):
        num = 2 * z ** 3 - m.q if m.tag == "newton" else np.ones_like(z)
        r = num / (6 * z) if m.tag == "newton" else np.ones_like(z)
        return (1 + np.abs(z) ** 2) / np.abs(r)


def _inf_sphder(m: MapFamily) -> float:
    if m.tag == "newton":
        return 1.5  # the map is (2/3) z near infinity
    return 0.0


def _monic_cubic_roots(c):
    """Roots of x^3 + c[...,0] x^2 + c[...,1] x + c[...,2], batched."""
    n = c.shape[:-1]
    comp = np.zeros(n + (3, 3), dtype=complex)
    comp[..., 0, :] = -c
    comp[..., 1, 0] = 1
    comp[..., 2, 1] = 1
    return np.linalg.eigvals(comp)


def _newton_pq(lam: complex):
    lam2 = lam * lam
    return -(0.75 + lam2), lam2 - 0.25


def newton_rational_form(lam):
    """Coefficients (highest degree first) of numerator and denominator of N_lam.

    ``N_lam(z) = (2 z^3 - q) / (3 z^2 + p)`` where ``P_lam(z) = z^3 + p z + q``.
    """
    lam = complex(lam)
    if any(abs(lam - b) < 1e-12 for b in (-1.5, 0.0, 1.5)):
        raise ValueError("degenerate Newton parameter")
    p, q = _newton_pq(lam)
    return [2, 0, 0, -q], [3, 0, p]


def evaluate(m: MapFamily, z) -> SpherePoint:
    """Evaluate ``m`` at a point of the sphere, choosing the better chart."""
    z = SpherePoint.of(z)
    if z.chart == "finite":
        w = m.f(z.value)
        if m.tag == "newton" and abs(3 * z.value ** 2 + m.p) < 1e-300:
            return SpherePoint.infinity()
        return SpherePoint(w) if cmath.isfinite(w) else SpherePoint.infinity()
    return SpherePoint(m.f_inf_chart(z.value), "infinity")


def critical_and_fixed_sets(m: MapFamily):
    """Critical points (with multiplicity) and all fixed points on the sphere."""
    inf = SpherePoint.infinity()
    if m.tag == "dbas":
        r = 1j / math.sqrt(2)
        crit = [r, -r, INF, INF]
        fixed = [0j, r, -r, INF]
    elif m.tag == "cubic":
        a = m.param
        crit = [0j, -a, INF, INF]
        # z^2 + (3a/2) z - 1 = 0
        disc = cmath.sqrt(2.25 * a * a + 4)
        fixed = [0j, (-1.5 * a + disc) / 2, (-1.5 * a - disc) / 2, INF]
        fixed = [_polish_fixed(m, z) for z in fixed]
    else:
        crit = m.roots() + [0j]
        fixed = m.roots() + [INF]
    to_pt = lambda z: inf if not cmath.isfinite(z) else SpherePoint(z)
    return [to_pt(z) for z in crit], [to_pt(z) for z in fixed]


def _polish_fixed(m: MapFamily, z: complex) -> complex:
    if not cmath.isfinite(z):
        return z
    g, dg = m.f(z) - z, m.df(z) - 1
    return z - g / dg if abs(dg) > 1e-14 else z


def parse_complex(s: str) -> complex:
    """Parse the ``"re,im"`` parameter format."""
    re_, im_ = s.split(",")
    return complex(float(re_), float(im_))


def format_complex(z: complex) -> str:
    return f"{z.real!r},{z.imag!r}"
