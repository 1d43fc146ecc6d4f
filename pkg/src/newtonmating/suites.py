"""Verification suites run by ``newtonmating verify``.

Each suite returns a list of check records ``{"name", "passed", ...}``;
the run passes when every check does. Reports contain no timings or
timestamps, so identical configs give byte-identical output.
"""
from __future__ import annotations

from math import gcd

import numpy as np

from . import params
from .angles import Angle, is_triadic, itinerary_of_angle, theta
from .mating import make_semiconj, surjectivity_sample, verify_semiconjugacy

DEFAULTS = {
    "suite": "symbolic",
    "seed": 0,
    # symbolic
    "triadic_exponent": 10,
    "odd_denominator_max": 1023,
    "shift_samples": 10000,
    "shift_max_denominator": 2000,
    "cusp_max_denominator": 63,
    # mating
    "case": "center",
    "t": "2/3",
    "m": 1,
    "depth": 12,
    "compare_depth": 16,
    "samples": 100,
    "decrease_share": 0.95,
    "coverage_resolution": 0,
    "coverage_max_uncovered": 0.01,
}

SUITES = ("symbolic", "mating")


def _check(name: str, passed: bool, **data) -> dict:
    return {"name": name, "passed": bool(passed), **data}


def _roundtrip_denominators(triadic_exponent: int, odd_max: int):
    yield 3 ** triadic_exponent
    yield from range(1, odd_max + 1, 2)


def roundtrip_failures(triadic_exponent: int, odd_max: int) -> tuple:
    """Angles whose itinerary does not evaluate back to them, and the number tested.

    All fractions ``p/3^e`` are covered by the single denominator ``3^e``
    (their reduced forms run through every smaller power of 3).
    """
    bad, n = [], 0
    for q in _roundtrip_denominators(triadic_exponent, odd_max):
        for p in range(q):
            if gcd(p, q) != 1:
                continue
            t = Angle(p, q)
            n += 1
            if theta(itinerary_of_angle(t)) != t:
                bad.append(str(t))
    return bad, n


def shift_failures(samples: int, max_den: int, seed: int) -> list:
    """Random angles where the itinerary of ``3t`` is not the shifted itinerary of ``t``."""
    rng = np.random.default_rng(seed)
    bad = []
    for _ in range(samples):
        q = int(rng.integers(1, max_den + 1))
        t = Angle(int(rng.integers(0, q)), q)
        shifted = {str(w.shift()) for w in itinerary_of_angle(t).members}
        expected = {str(w) for w in itinerary_of_angle(3 * t).members}
        # a triadic class shifts onto the class of its image member by member
        if shifted != expected:
            bad.append(str(t))
    return bad


def class_size_failures(triadic_exponent: int) -> list:
    q = 3 ** triadic_exponent
    bad = []
    for p in range(q):
        t = Angle(p, q)
        size = len(itinerary_of_angle(t))
        if size != (2 if is_triadic(t) else 1):
            bad.append(str(t))
    # non-triadic angles have singleton classes
    for t in (Angle(1, 2), Angle(1, 4), Angle(1, 7), Angle(5, 13)):
        if len(itinerary_of_angle(t)) != 1:
            bad.append(str(t))
    return bad


def brute_force_cusps(max_den: int) -> list:
    """``(t, k)`` by direct doubling of ``t/2`` until it returns, without shortcuts.

    All numerators of one denominator are doubled together as integers
    modulo ``2q``; an orbit that has not returned after ``2q`` steps never will.
    """
    out = []
    for q in range(1, max_den + 1):
        start = np.array([p for p in range(q) if gcd(p, q) == 1], dtype=np.int64)
        x = start.copy()  # t/2 = p / 2q lies in [0, 1/2)
        period = np.zeros(len(start), dtype=np.int64)
        for step in range(1, 2 * q + 1):
            x = (2 * x) % (2 * q)
            period[(x == start) & (period == 0)] = step
        for num, k in zip(start, period):
            if k >= 2:
                out.append((Angle(int(num), q), int(k)))
    return out


def symbolic_suite(cfg: dict) -> list:
    checks = []
    bad, n = roundtrip_failures(cfg["triadic_exponent"], cfg["odd_denominator_max"])
    checks.append(_check("roundtrip", not bad, tested=n, failures=bad[:10]))
    bad = shift_failures(cfg["shift_samples"], cfg["shift_max_denominator"], cfg["seed"])
    checks.append(_check("shift_equivariance", not bad, tested=cfg["shift_samples"], failures=bad[:10]))
    bad = class_size_failures(min(cfg["triadic_exponent"], 7))
    checks.append(_check("triadic_class_size", not bad, failures=bad[:10]))
    lib = params.cusp_angles(cfg["cusp_max_denominator"])
    ref = brute_force_cusps(cfg["cusp_max_denominator"])
    same = sorted(lib) == sorted(ref)
    checks.append(_check("cusp_angles", same, count=len(lib)))
    return checks


def mating_pair(case: str, t, m: int = 1, depth: int = 12):
    """The two semi-conjugacies of a test pair: centers of the copy at ``t`` or boundary points."""
    t = Angle.of(t)
    if case == "center":
        a = params.center_in_copy("cubic", t, m)
        lam = params.center_in_copy("newton", t, m)
        sd = make_semiconj("dbas", lam.value, t=t, k=a.k, depth=depth)
        sc = make_semiconj("cubic", lam.value, a=a.value, t=t, k=a.k, depth=depth,
                           newton_graph=sd.newton_graph)
    elif case == "boundary":
        if params.in_T(t):
            raise ValueError(f"boundary case needs t outside the cusp set, got {t}")
        a = params.boundary_param("cubic", t)
        lam = params.boundary_param("newton", t)
        sd = make_semiconj("dbas", lam.value, t=t, renormalizable=False, depth=depth)
        sc = make_semiconj("cubic", lam.value, a=a.value, t=t, renormalizable=False,
                           depth=depth, newton_graph=sd.newton_graph)
    else:
        raise ValueError(f"unknown case {case!r}")
    return sd, sc


def mating_suite(cfg: dict) -> list:
    sd, sc = mating_pair(cfg["case"], cfg["t"], cfg["m"], cfg["depth"])
    checks = []
    for s in (sd, sc):
        rep = verify_semiconjugacy(s, cfg["samples"], cfg["seed"], cfg["depth"], cfg["compare_depth"])
        checks.append(_check(f"residual_bounds_{s.side}", rep["violations"] == 0, report=rep))
        checks.append(_check(f"depth_refinement_{s.side}",
                             rep["decreased_fraction"] >= cfg["decrease_share"],
                             decreased_fraction=rep["decreased_fraction"]))
    if cfg["coverage_resolution"]:
        cov = surjectivity_sample(sd, sc, cfg["coverage_resolution"])
        checks.append(_check("coverage", cov["uncovered_fraction"] < cfg["coverage_max_uncovered"],
                             report=cov))
    return checks


def run_suite(cfg: dict) -> list:
    if cfg["suite"] == "symbolic":
        return symbolic_suite(cfg)
    return mating_suite(cfg)
