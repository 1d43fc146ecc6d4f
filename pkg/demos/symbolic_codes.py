"""Tripling itineraries of doubling angles, and which cubic and dbas rays get glued.

Run: python3 demos/symbolic_codes.py
"""
from newtonmating.angles import Angle, is_triadic, itinerary_of_angle, multiply_angle, theta
from newtonmating.mating import dbas_angle_itinerary

angles = [Angle(0), Angle(1, 3), Angle(2, 3), Angle(1, 6), Angle(1, 7), Angle(3, 10)]

print("angle   triadic  itinerary class")
for t in angles:
    print(f"{str(t):7} {str(is_triadic(t)):8} {itinerary_of_angle(t)}")

# a class of two words is a point reached by two rays
c = itinerary_of_angle(Angle(2, 3))
print(f"\nthe class {c} comes back to angle {theta(c)}")

# along a doubling cycle the periodic codes rotate into each other
t = Angle(1, 7)
for _ in range(4):
    print(f"{str(t):5} -> {itinerary_of_angle(t)}")
    t = multiply_angle(t, 2)

# a cubic ray at s is glued to the dbas ray at -s exactly when their codes agree
s = Angle(1, 3)
print(f"\ncubic {s}: {itinerary_of_angle(s)}")
print(f"dbas {-s}: {dbas_angle_itinerary(-s)}")
