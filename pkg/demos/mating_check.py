"""Check numerically that the Newton map at the center of the 2/3 copy is a mating.

Builds both semiconjugacies (from the dbas and from the renormalizable cubic),
evaluates a few images, follows one ray-equivalence class and runs a small
verification sample on each side. Takes a minute or two.
Run: python3 demos/mating_check.py
"""
from newtonmating import mating
from newtonmating.angles import Angle
from newtonmating.boettcher import trace_external_ray
from newtonmating.suites import mating_pair

sd, sc = mating_pair("center", "2/3")
print(f"lambda = {sd.lam:.12f}, a = {sc.a:.12f}")

for label, s, t in [("dbas 0", sd, Angle(0)), ("dbas 2/3", sd, Angle(2, 3)),
                    ("cubic 0", sc, Angle(0))]:
    z = trace_external_ray(s.source, t).landing
    img, err = mating.psi(s, z)
    # errors are chordal, so a large finite estimate is a point near infinity
    where = f"near infinity (|z| = {abs(img):.0f})" if abs(img) > 10 else f"{img:.5f}"
    print(f"psi(landing of {label}) = {where} +- {err:.1e}")

chain = mating.ray_class_chain(sc, sd, "1/3")
print("\nrays identified with cubic 1/3:", [f"{side} {a}" for side, a in chain.angles()])

for s in (sd, sc):
    rep = mating.verify_semiconjugacy(s, 10, seed=0, depth=12, compare_depth=16)
    print(f"{s.side:5}: {rep['samples']} samples, {rep['violations']} over their bound, "
          f"max residual {rep['max_residual']:.1e}")
