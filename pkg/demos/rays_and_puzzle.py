"""Landing points of external rays of z^3 + 3z/2, its puzzle graph, and one shrinking nest.

Writes ``dbas_graph.ppm`` into the current directory.
Run: python3 demos/rays_and_puzzle.py
"""
import math

from newtonmating import render
from newtonmating.angles import Angle, TriadicWord
from newtonmating.boettcher import trace_external_rays
from newtonmating.maps import MapFamily
from newtonmating.puzzle import build_graph, nest_point

m = MapFamily.dbas()
rays = trace_external_rays(m, [Angle(0), Angle(1, 6), Angle(1, 3), Angle(1, 2)])
for r in rays:
    print(f"ray {str(r.angle):4} {r.status:9} at {r.landing:.6f}")
# 1/3 lands on the root i*sqrt(3/2) of f, and so does its partner 1/6
print("i*sqrt(3/2) =", complex(0, math.sqrt(1.5)))

g = build_graph(m, "dbas")
print(f"\ngraph: {len(g.arcs)} arcs, faces {sorted(g.face_of_pair.values())}")

# the word 1|20 is preperiodic; its pieces close in on one Julia point
w = TriadicWord.parse("1|20")
for depth in (2, 4, 8, 12):
    n = nest_point(g, w, depth)
    print(f"depth {depth:2}: estimate {n.estimate:.5f}, diameter <= {n.diameter:.2e}")

spec = render.RenderSpec(resolution=(360, 360), coloring="basin")
img = render.julia_image(m, spec)
render.graph_overlay(img, spec, g, small_julia=False)
render.write_ppm("dbas_graph.ppm", img)
print("\nwrote dbas_graph.ppm")
