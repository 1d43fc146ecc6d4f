"""Exact symbolic dynamics on the circle.

Angles are rationals mod 1 with arbitrary-width integers. Words over the
alphabet {0, 1, 2} are eventually periodic and carry a canonical form;
an :class:`ItinClass` collects the one or two words that code the same
angle in base 3 (the identifications ``w1(0) ~ w0(2)``, ``w2(0) ~ w1(2)``
and ``(0) ~ (2)``).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import gcd

import numpy as np

__all__ = [
    "Angle",
    "TriadicWord",
    "ItinClass",
    "canonicalize",
    "theta",
    "itinerary_of_angle",
    "multiply_angle",
    "doubling_period",
    "is_triadic",
]


@dataclass(frozen=True, order=True)
class Angle:
    """A rational angle ``numerator/denominator`` reduced mod 1."""

    numerator: int
    denominator: int = 1

    def __post_init__(self):
        p, q = int(self.numerator), int(self.denominator)
        if q <= 0:
            raise ValueError("denominator must be positive")
        p %= q
        g = gcd(p, q) or 1
        object.__setattr__(self, "numerator", p // g)
        object.__setattr__(self, "denominator", q // g)

    @classmethod
    def of(cls, x) -> "Angle":
        """Build from an Angle, Fraction, int or ``"p/q"`` string."""
        if isinstance(x, Angle):
            return x
        if isinstance(x, str):
            return cls.parse(x)
        f = Fraction(x)
        return cls(f.numerator, f.denominator)

    @classmethod
    def parse(cls, s: str) -> "Angle":
        s = s.strip()
        if "/" in s:
            p, q = s.split("/", 1)
            return cls(int(p), int(q))
        return cls(int(s), 1)

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __float__(self) -> float:
        return self.numerator / self.denominator

    def __str__(self) -> str:
        return f"{self.numerator}/{self.denominator}"

    def __neg__(self) -> "Angle":
        return Angle(-self.numerator, self.denominator)

    def __add__(self, other) -> "Angle":
        return Angle.of(self.as_fraction() + Angle.of(other).as_fraction())

    def __sub__(self, other) -> "Angle":
        return self + (-Angle.of(other))

    def __mul__(self, d: int) -> "Angle":
        return Angle(self.numerator * int(d), self.denominator)

    __rmul__ = __mul__

    def half(self) -> "Angle":
        """The representative ``t/2`` in [0, 1/2)."""
        return Angle(self.numerator, 2 * self.denominator)


@lru_cache(maxsize=4096)
def _divisors(n: int) -> tuple:
    return tuple(d for d in range(1, n + 1) if n % d == 0)


def _primitive(seq: tuple) -> tuple:
    n = len(seq)
    for d in _divisors(n):
        if seq[:d] * (n // d) == seq:
            return seq[:d]
    return seq


@dataclass(frozen=True)
class TriadicWord:
    """The eventually periodic sequence ``preperiod`` followed by ``period`` repeated.

    Instances are always stored in canonical form: primitive period and the
    shortest possible preperiod.
    """

    preperiod: tuple
    period: tuple

    def __post_init__(self):
        pre = tuple(map(int, self.preperiod))
        per = tuple(map(int, self.period))
        if not per:
            raise ValueError("period must be nonempty")
        if not set(pre + per) <= {0, 1, 2}:
            raise ValueError("digits must be 0, 1 or 2")
        per = _primitive(per)
        while pre and pre[-1] == per[-1]:
            pre = pre[:-1]
            per = per[-1:] + per[:-1]
        object.__setattr__(self, "preperiod", pre)
        object.__setattr__(self, "period", per)

    @classmethod
    def _trusted(cls, pre: tuple, per: tuple) -> "TriadicWord":
        """Skip normalisation for words already known to be canonical."""
        w = object.__new__(cls)
        object.__setattr__(w, "preperiod", pre)
        object.__setattr__(w, "period", per)
        return w

    @classmethod
    def parse(cls, s: str) -> "TriadicWord":
        """Parse ``"pre|period"``; a string without ``|`` is a pure period."""
        s = s.strip()
        pre, _, per = s.rpartition("|")
        return cls(tuple(int(c) for c in pre), tuple(int(c) for c in per))

    def __str__(self) -> str:
        return "".join(map(str, self.preperiod)) + "|" + "".join(map(str, self.period))

    def digit(self, i: int) -> int:
        n = len(self.preperiod)
        if i < n:
            return self.preperiod[i]
        return self.period[(i - n) % len(self.period)]

    def prefix(self, n: int) -> tuple:
        reps = max(0, n - len(self.preperiod)) // len(self.period) + 1
        return (self.preperiod + self.period * reps)[:n]

    def shift(self, k: int = 1) -> "TriadicWord":
        """Left shift by ``k`` symbols."""
        n = len(self.preperiod)
        if k <= n:
            return TriadicWord(self.preperiod[k:], self.period)
        r = (k - n) % len(self.period)
        return TriadicWord((), self.period[r:] + self.period[:r])

    def prepend(self, digits) -> "TriadicWord":
        return TriadicWord(tuple(digits) + self.preperiod, self.period)

    def _sort_key(self) -> tuple:
        return self.prefix(len(self.preperiod) + 2 * len(self.period) + 13)


@dataclass(frozen=True)
class ItinClass:
    """One or two equivalent canonical words, lexicographically smallest first."""

    members: tuple

    def __post_init__(self):
        ms = set(self.members)
        if len(ms) == 2:
            ms = sorted(ms, key=lambda w: (w._sort_key(), str(w)))
        if not 1 <= len(ms) <= 2:
            raise ValueError("an itinerary class has one or two members")
        object.__setattr__(self, "members", tuple(ms))

    def __str__(self) -> str:
        return "{" + ", ".join(str(w) for w in self.members) + "}"

    def __contains__(self, w) -> bool:
        return w in self.members

    def __len__(self) -> int:
        return len(self.members)


def _partner(w: TriadicWord):
    """The other word of a two-element class, or None."""
    if w.period == (0,) or w.period == (2,):
        tail = w.period[0]
        if not w.preperiod:
            return TriadicWord((), (2 - tail,))
        *head, last = w.preperiod
        if tail == 0:
            return TriadicWord(tuple(head) + (last - 1,), (2,))
        return TriadicWord(tuple(head) + (last + 1,), (0,))
    return None


def canonicalize(w: TriadicWord) -> ItinClass:
    """The full equivalence class of ``w``."""
    other = _partner(w)
    return ItinClass((w,) if other is None else (w, other))


_ASCII_DIGITS = bytes.maketrans(b"\x00\x01\x02", b"012")


def _base3(digits) -> int:
    # int() refuses very long strings in non power-of-two bases, so go by chunks
    text = bytes(digits).translate(_ASCII_DIGITS)
    value = 0
    for i in range(0, len(text), 4000):
        chunk = text[i:i + 4000]
        value = value * 3 ** len(chunk) + int(chunk, 3)
    return value


def _word_value(w: TriadicWord) -> Angle:
    pre, per = w.preperiod, w.period
    a, b = _base3(pre), _base3(per)
    m = 3 ** len(per) - 1
    return Angle(a * m + b, 3 ** len(pre) * m)


def theta(c) -> Angle:
    """Exact base-3 value of a class (or a single word)."""
    if isinstance(c, TriadicWord):
        return _word_value(c)
    values = {_word_value(w) for w in c.members}
    if len(values) != 1:
        raise ValueError(f"members of {c} code different angles")
    return values.pop()


def is_triadic(t) -> bool:
    q = Angle.of(t).denominator
    while q % 3 == 0:
        q //= 3
    return q == 1


def itinerary_of_angle(t) -> ItinClass:
    """The class of words ``w`` with ``theta(w) == t``.

    The digits are read off the tripling orbit of ``t`` against the
    intervals ``]e/3, (e+1)/3[``; a triadic angle ends in ``(0)`` and gets
    its partner ending in ``(2)``. With ``q = 3^v q'`` and ``q'`` prime to 3
    the orbit is periodic after ``v`` steps, with period the order of 3 mod ``q'``.
    """
    t = Angle.of(t)
    p, q = t.numerator, t.denominator
    v, q1 = 0, q
    while q1 % 3 == 0:
        q1 //= 3
        v += 1
    if q1 == 1:
        # finite base-3 expansion: the tail is 0 repeated
        digits = _tripling_digits(p, q, v)
        return canonicalize(TriadicWord(digits, (0,)))
    digits = _tripling_digits(p, q, v + _order_of_three(q1))
    # the preperiod is exactly v and the period is the exact orbit period,
    # so the word is already canonical
    return canonicalize(TriadicWord._trusted(digits[:v], digits[v:]))


@lru_cache(maxsize=4096)
def _order_of_three(q: int) -> int:
    k, r = 1, 3 % q
    while r != 1:
        r = (3 * r) % q
        k += 1
    return k


@lru_cache(maxsize=4096)
def _powers_of_three(q: int, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    r = 1 % q
    for i in range(n):
        out[i] = r
        r = (3 * r) % q
    return out


def _tripling_digits(p: int, q: int, n: int) -> tuple:
    """First ``n`` base-3 digits of ``p/q``: ``floor(3 * (3^i p mod q) / q)``."""
    if q < 2 ** 30:
        r = (p * _powers_of_three(q, n)) % q
        return tuple(((3 * r) // q).tolist())
    digits, r = [], p
    for _ in range(n):
        d, r = divmod(3 * r, q)
        digits.append(d)
    return tuple(digits)


def multiply_angle(t, d: int) -> Angle:
    if d not in (2, 3):
        raise ValueError("multiplier must be 2 or 3")
    return Angle.of(t) * d


def doubling_period(t):
    """Exact period of ``t`` under doubling, or None when ``t`` is strictly preperiodic."""
    q = Angle.of(t).denominator
    if q % 2 == 0:
        return None
    if q == 1:
        return 1
    k, r = 1, 2 % q
    while r != 1:
        r = (2 * r) % q
        k += 1
    return k
