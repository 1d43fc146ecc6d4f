import numpy as np
import pytest

from newtonmating import mating
from newtonmating.angles import Angle, itinerary_of_angle
from newtonmating.boettcher import sphere_dist, trace_external_ray
from newtonmating.maps import INF, MapFamily
from newtonmating.suites import mating_pair

# finite preimage of infinity on the real axis, at lambda on the imaginary axis
P_INF_PRIME = 0.4615


@pytest.fixture(scope="module")
def pair():
    return mating_pair("center", "2/3")


def _landing(s, t):
    return trace_external_ray(s.source, Angle.of(t)).landing


def test_dbas_adapter_negates_the_angle():
    assert mating.dbas_angle_itinerary("1/3") == itinerary_of_angle(Angle(2, 3))
    assert mating.source_angle_itinerary("cubic", "1/3") == itinerary_of_angle(Angle(1, 3))


def test_unknown_side():
    with pytest.raises(ValueError):
        mating.make_semiconj("quadratic", 0.3j, t="2/3", k=2)


def test_pair_shares_the_newton_graph(pair):
    sd, sc = pair
    assert sd.newton_graph is sc.newton_graph
    assert sd.a is None and sc.a == pytest.approx(1.0017397270698083 - 0.5193559013447667j)


# --------------------------------------------------------------------- psi


def test_dbas_zero_goes_to_infinity(pair):
    sd, _ = pair
    img, err = mating.psi(sd, 0)
    assert sphere_dist(img, INF) <= err


def test_cubic_gamma_zero_goes_to_infinity(pair):
    _, sc = pair
    img, err = mating.psi(sc, _landing(sc, 0))
    assert sphere_dist(img, INF) <= err


def test_dbas_gamma_two_thirds_goes_to_real_preimage_of_infinity(pair):
    # the ray at 2/3 carries the itinerary class of 1/3, {1|0, 0|2}
    sd, _ = pair
    img, err = mating.psi(sd, _landing(sd, "2/3"))
    assert abs(img - P_INF_PRIME) <= err + 1e-3
    assert mating.psi_detail(sd, _landing(sd, "2/3")).words[0][:2] in ((0, 2), (1, 0))


def test_dbas_gamma_one_third_goes_to_the_other_preimage(pair):
    sd, _ = pair
    img, err = mating.psi(sd, _landing(sd, "1/3"))
    assert abs(img + P_INF_PRIME) <= err + 1e-3


def test_psi_rejects_escaping_points(pair):
    sd, _ = pair
    with pytest.raises(mating.NotInFilledJulia):
        mating.psi(sd, 3.0)


def test_psi_json(pair):
    sd, _ = pair
    d = mating.psi_detail(sd, 0, 6).to_json()
    assert set(d) == {"image", "err", "words"}
    assert all(len(w) == 7 for w in d["words"])


# ---------------------------------------------------------- verification


def test_fixed_point_residual_within_bound(pair):
    sd, _ = pair
    res, bound = mating.conjugacy_residual(sd, 0)
    assert res < bound


def test_verification_report(pair):
    sd, _ = pair
    rep = mating.verify_semiconjugacy(sd, 10, seed=3, depth=12, compare_depth=16)
    assert rep["violations"] == 0 and rep["samples"] + rep["skipped"] == 10
    assert rep["max_residual"] < 1e-2
    assert rep["decreased_fraction"] >= 0.9
    assert set(rep) >= {"lambda", "a", "depth", "samples", "max_residual", "mean_residual",
                        "violations", "uncovered_fraction"}


def test_julia_samples_are_seeded(pair):
    sd, _ = pair
    a = mating.julia_samples(sd, 5, seed=7)
    b = mating.julia_samples(sd, 5, seed=7)
    assert a == b
    assert a != mating.julia_samples(sd, 5, seed=8)


# ------------------------------------------------------- ray equivalence


def test_angle_zero_glued(pair):
    sd, sc = pair
    c = mating.ray_equivalent(sc, _landing(sc, 0), sd, _landing(sd, 0))
    assert c.equivalent and c.distance <= c.bound


def test_opposite_angles_glued(pair):
    sd, sc = pair
    c = mating.ray_equivalent(sc, _landing(sc, "1/3"), sd, _landing(sd, "2/3"))
    assert c.equivalent
    assert len(c.common_prefix) == 13


def test_different_classes_not_glued(pair):
    sd, sc = pair
    c = mating.ray_equivalent(sc, _landing(sc, 0), sd, _landing(sd, "1/3"))
    assert not c.equivalent
    assert len(c.common_prefix) < 2
    assert set(c.to_json()) == {"equivalent", "distance", "bound", "words", "common_prefix"}


def test_ray_equivalence_symmetric_and_transitive(pair):
    sd, sc = pair
    z = _landing(sc, "1/3")
    w = _landing(sd, "2/3")
    # the dbas rays 2/3 and 5/6 land together, and 5/6 is glued to the cubic ray 1/6
    w2 = _landing(sd, "5/6")
    z2 = _landing(sc, "1/6")
    assert mating.ray_equivalent(sd, w, sc, z).equivalent
    assert mating.ray_equivalent(sd, w, sd, w2).equivalent
    assert mating.ray_equivalent(sc, z, sc, z2).equivalent
    assert mating.ray_equivalent(sc, z2, sd, w2).equivalent


def test_ray_class_chain_alternates(pair):
    sd, sc = pair
    chain = mating.ray_class_chain(sc, sd, "1/3")
    ang = chain.angles()
    assert ang[:2] == [("cubic", Angle(1, 3)), ("dbas", Angle(2, 3))]
    assert ("dbas", Angle(5, 6)) in ang and ("cubic", Angle(1, 6)) in ang
    for e in chain.entries:
        mirror = [f for f in chain.entries if f.side != e.side and f.angle == -e.angle]
        partner = [f for f in chain.entries if f.side == e.side and f is not e]
        assert mirror or partner
    assert chain.to_json()[0] == {"side": "cubic", "angle": "1/3",
                                  "landing": chain.to_json()[0]["landing"]}


def test_colanding_candidates_share_period():
    # preperiod 1 and period 1 under tripling: (v/2 + k)/3
    c = mating._colanding_candidates(Angle(1, 3))
    assert set(c) == {Angle(n, 6) for n in range(6)}


# ---------------------------------------------------------- surjectivity


def test_infinity_covered_by_both_sides(pair):
    sd, sc = pair
    cov = mating.cover_point(sd, sc, INF)
    assert set(cov.sides) == {"dbas", "cubic"}
    assert abs(cov.candidates["dbas"]) < 0.05


def test_basin_three_point_pulled_to_dbas_basin(pair):
    sd, sc = pair
    u = 1.0 - 0.2j  # in the immediate basin of the root 1
    cov = mating.cover_point(sd, sc, u)
    assert cov.sides == ("dbas",)
    z = cov.candidates["dbas"]
    m = MapFamily.dbas()
    for _ in range(60):
        z = m.f(z)
    assert abs(z + 1j / np.sqrt(2)) < 1e-6


def test_coverage_report_shape(pair):
    sd, sc = pair
    rep = mating.surjectivity_sample(sd, sc, resolution=4)
    assert rep["samples"] == 16
    assert 0 <= rep["uncovered_fraction"] <= 1
    assert set(rep["covered_by"]) == {"dbas", "cubic"}
