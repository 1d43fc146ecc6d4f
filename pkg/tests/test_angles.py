from fractions import Fraction
from itertools import product
from math import gcd

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newtonmating.angles import (
    Angle,
    ItinClass,
    TriadicWord,
    canonicalize,
    doubling_period,
    is_triadic,
    itinerary_of_angle,
    multiply_angle,
    theta,
)

W = TriadicWord.parse


def cls(*words):
    return ItinClass(tuple(W(w) for w in words))


angles = st.integers(1, 5000).flatmap(
    lambda q: st.integers(0, q - 1).map(lambda p: Angle(p, q)))
words = st.builds(
    TriadicWord,
    st.lists(st.integers(0, 2), max_size=6).map(tuple),
    st.lists(st.integers(0, 2), min_size=1, max_size=6).map(tuple),
)


# ------------------------------------------------------------------ angles


def test_angle_is_reduced_mod_one():
    a = Angle(7, 6)
    assert (a.numerator, a.denominator) == (1, 6)
    assert Angle(-1, 3) == Angle(2, 3)
    assert Angle(4, 8) == Angle(1, 2)


def test_angle_parse_and_str():
    assert Angle.parse("2/6") == Angle(1, 3)
    assert str(Angle(2, 3)) == "2/3"
    assert Angle.of("0") == Angle(0)
    assert Angle.of(Fraction(5, 4)) == Angle(1, 4)


def test_angle_rejects_bad_denominator():
    with pytest.raises(ValueError):
        Angle(1, 0)


def test_half_picks_representative_below_one_half():
    assert Angle(2, 3).half() == Angle(1, 3)
    assert Angle(0).half() == Angle(0)


# ------------------------------------------------------------------- words


def test_word_canonical_form_absorbs_preperiod():
    assert W("1212|12") == W("|12")
    assert W("0|10") == W("|01")
    assert W("|2222") == W("|2")
    assert str(W("01|2")) == "01|2"


def test_word_digits_and_shift():
    w = W("01|2")
    assert w.prefix(5) == (0, 1, 2, 2, 2)
    assert w.shift() == W("1|2")
    assert w.shift(5) == W("|2")
    assert W("|012").shift(4) == W("|120")


def test_word_rejects_bad_digits():
    with pytest.raises(ValueError):
        TriadicWord((3,), (0,))
    with pytest.raises(ValueError):
        TriadicWord((0,), ())


def test_canonicalize_examples():
    assert canonicalize(W("|0")) == cls("|0", "|2")
    assert canonicalize(W("|1")) == cls("|1")
    assert canonicalize(W("1|0")) == cls("1|0", "0|2")
    assert canonicalize(W("21|2")) == cls("21|2", "22|0")


def test_class_lists_smaller_member_first():
    assert [str(w) for w in canonicalize(W("1|0")).members] == ["0|2", "1|0"]


def test_theta_examples():
    assert theta(cls("1|0", "0|2")) == Angle(1, 3)
    assert theta(cls("|0", "|2")) == Angle(0)
    assert theta(cls("|1")) == Angle(1, 2)


def test_theta_rejects_inconsistent_class():
    with pytest.raises(ValueError):
        theta(ItinClass((W("|1"), W("|0"))))


def test_itinerary_examples():
    assert itinerary_of_angle(Angle(2, 3)) == cls("2|0", "1|2")
    assert itinerary_of_angle(Angle(0)) == cls("|0", "|2")
    assert itinerary_of_angle(Angle(1, 2)) == cls("|1")


def test_multiply_angle_examples():
    assert multiply_angle(Angle(1, 3), 3) == Angle(0)
    assert multiply_angle(Angle(1, 3), 2) == Angle(2, 3)
    assert multiply_angle(Angle(5, 9), 3) == Angle(2, 3)
    with pytest.raises(ValueError):
        multiply_angle(Angle(1, 3), 5)


def test_doubling_period_examples():
    assert doubling_period(Angle(1, 3)) == 2
    assert doubling_period(Angle(1, 7)) == 3
    assert doubling_period(Angle(1, 4)) is None
    assert doubling_period(Angle(0)) == 1


def test_is_triadic_examples():
    assert is_triadic(Angle(5, 9))
    assert not is_triadic(Angle(1, 2))
    assert is_triadic(Angle(0))


# -------------------------------------------------------------- oracles


def _series_value(pre, per) -> Fraction:
    """Sum of the base-3 series, evaluated without the library's closed form."""
    head = sum(Fraction(d, 3 ** (i + 1)) for i, d in enumerate(pre))
    block = sum(Fraction(d, 3 ** (i + 1)) for i, d in enumerate(per))
    tail = block / (1 - Fraction(1, 3 ** len(per)))
    return (head + tail / 3 ** len(pre)) % 1


def test_brute_force_enumeration_matches_itineraries():
    # every word with preperiod + period <= 7, grouped by its series value
    by_angle: dict = {}
    for n in range(1, 8):
        for split in range(n):
            for digits in product((0, 1, 2), repeat=n):
                pre, per = digits[:split], digits[split:]
                w = TriadicWord(pre, per)
                if len(w.preperiod) + len(w.period) != n:
                    continue
                by_angle.setdefault(Angle.of(_series_value(pre, per)), set()).add(w)
    checked = 0
    for q in (3, 9, 27, 81, 243, 729, 2, 4, 8, 13, 26, 91):
        for p in range(q):
            t = Angle(p, q)
            if t.denominator != q:
                continue
            c = itinerary_of_angle(t)
            if max(len(w.preperiod) + len(w.period) for w in c.members) > 7:
                continue
            assert set(c.members) == by_angle[t], t
            checked += 1
    assert checked > 500


def test_roundtrip_on_small_denominators_exhaustive():
    for q in range(1, 200):
        for p in range(q):
            if gcd(p, q) == 1:
                t = Angle(p, q)
                assert theta(itinerary_of_angle(t)) == t


def test_large_denominator_path_matches_small_one():
    # denominators past the numpy fast path go through plain integers
    q = 3 ** 19 * 7 * 11 * 13 * 17
    t = Angle(1000000007, q)
    c = itinerary_of_angle(t)
    assert theta(c) == t
    assert len(c.members[0].preperiod) == 19


# ------------------------------------------------------------- properties


@given(angles)
def test_roundtrip_property(t):
    assert theta(itinerary_of_angle(t)) == t


@given(angles)
def test_class_size_iff_triadic(t):
    assert len(itinerary_of_angle(t)) == (2 if is_triadic(t) else 1)


@given(angles)
def test_shift_equivariance(t):
    image = itinerary_of_angle(multiply_angle(t, 3))
    shifted = {w.shift() for w in itinerary_of_angle(t).members}
    assert shifted == set(image.members)


@given(words)
def test_canonicalize_idempotent_and_theta_constant(w):
    c = canonicalize(w)
    for member in c.members:
        assert canonicalize(member) == c
    assert len({theta(m) for m in c.members}) == 1


@given(words)
def test_word_string_roundtrip(w):
    assert TriadicWord.parse(str(w)) == w


@given(angles, angles)
def test_angle_addition_is_exact(s, t):
    total = (s.as_fraction() + t.as_fraction()) % 1
    assert (s + t).as_fraction() == total
    assert (s - t) + t == s


@settings(max_examples=50)
@given(st.integers(0, 500).map(lambda p: Angle(p, 2 * 501 + 1)))
def test_doubling_period_matches_orbit(t):
    x, k = t * 2, 1
    while x != t:
        x, k = x * 2, k + 1
    assert doubling_period(t) == k
