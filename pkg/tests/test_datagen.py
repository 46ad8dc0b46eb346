import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inelastic_nn import datagen, refmat
from inelastic_nn.datagen import RandomWalkConfig


@pytest.fixture(scope="module")
def v1_walks():
    return datagen.gen_random_walk(RandomWalkConfig(n_seq=10, seed=3), "V1")


def test_random_walk_respects_bounds(v1_walks):
    for s in v1_walks:
        assert len(s) == 101 and s.eps[0] == 0.0 and s.dt[0] == 0.0
        assert np.all(np.abs(s.eps) <= 0.02)
        assert np.all((s.dt[1:] >= 0.02) & (s.dt[1:] <= 0.1))
        np.testing.assert_array_equal(s.dt[1:], np.diff(s.t))


def test_random_walk_is_deterministic(v1_walks):
    again = datagen.gen_random_walk(RandomWalkConfig(n_seq=10, seed=3), "V1")
    for a, b in zip(v1_walks, again):
        for k in a.__dict__:
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
    other = datagen.gen_random_walk(RandomWalkConfig(n_seq=1, seed=4), "V1")
    assert not np.array_equal(other[0].eps, v1_walks[0].eps)


def test_sequence_streams_are_independent_of_count():
    few = datagen.gen_random_walk(RandomWalkConfig(n_seq=2, seed=5), "P1")
    many = datagen.gen_random_walk(RandomWalkConfig(n_seq=4, seed=5), "P1")
    np.testing.assert_array_equal(few[1].eps, many[1].eps)


def test_responses_come_from_reference_material(v1_walks):
    s = v1_walks[0]
    tr = refmat.simulate(refmat.get_material("V1"), s.t, s.eps)
    np.testing.assert_array_equal(tr["sig"], s.sig)
    np.testing.assert_array_equal(tr["xi"], s.xi)


def test_zero_increment_std_gives_zero_path():
    s = datagen.gen_random_walk(RandomWalkConfig(s_deps=0.0, n_seq=1, n_steps=20), "V2")[0]
    assert np.all(s.eps == 0.0) and np.all(s.sig == 0.0) and np.all(s.diss == 0.0)


def test_increment_std_matches_configuration():
    p = datagen.random_walk_path(RandomWalkConfig(eps_max=1e3, n_steps=100_000), 0)
    assert np.std(np.diff(p.eps)) == pytest.approx(0.0025, rel=0.03)


def test_unbounded_resampling_is_an_error():
    cfg = RandomWalkConfig(s_deps=1.0, eps_max=1e-9, n_steps=1)
    with pytest.raises(ValueError, match="resampling"):
        datagen.random_walk_path(cfg, 0)


@pytest.mark.parametrize("kw", [{"dt_min": 0.1, "dt_max": 0.1}, {"s_deps": -1.0}, {"n_steps": 0}])
def test_invalid_walk_configuration(kw):
    with pytest.raises(ValueError):
        RandomWalkConfig(**kw)


# --- spline path -------------------------------------------------------------


def test_spline_interpolates_knots():
    knots = np.array(datagen.SPLINE_KNOTS)
    np.testing.assert_allclose(datagen.strain_spline()(knots[:, 0]), knots[:, 1], atol=1e-12)


def test_spline_through_collinear_knots_is_linear():
    knots = [(0.0, 0.0), (1.0, 0.002), (2.5, 0.005), (4.0, 0.008)]
    p = datagen.spline_path(knots, n=200)
    inside = p.t <= 4.0
    np.testing.assert_allclose(p.eps[inside], 0.002 * p.t[inside], atol=1e-12)


def test_spline_path_sampling():
    s = datagen.gen_spline_path("V2")
    assert len(s) == 901
    assert 9.0 <= s.t[-1] <= 18.0
    assert np.all((s.dt[1:] >= 0.01) & (s.dt[1:] <= 0.02))
    assert np.max(np.abs(s.eps)) <= 0.02


def test_spline_needs_two_increasing_knots():
    with pytest.raises(ValueError):
        datagen.spline_path([(0.0, 0.0)])
    with pytest.raises(ValueError):
        datagen.spline_path([(0.0, 0.0), (0.0, 0.01)])


# --- validation paths -----------------------------------------------------------


@pytest.fixture(scope="module")
def paths():
    return datagen.build_validation_paths()


def test_fixtures_match_builders(paths):
    a, b = paths
    for fixture, built in ((a, datagen.build_path_a()), (b, datagen.build_path_b())):
        np.testing.assert_array_equal(fixture.t, built.t)
        np.testing.assert_array_equal(fixture.eps, built.eps)


def test_interpolation_path_inside_training_hull(paths):
    a, _ = paths
    assert datagen.inside_training_hull(a)
    np.testing.assert_allclose(np.diff(a.t), 0.05, atol=1e-12)
    assert len(a) == 201


def test_extrapolation_path_schedule(paths):
    _, b = paths
    assert not datagen.inside_training_hull(b)
    dt = np.diff(b.t)
    mid = b.t[1:]
    assert b.eps[-1] == pytest.approx(0.06) and b.t[-1] == pytest.approx(10.0)
    fast = (mid > 5.0) & (mid <= 5.08 + 1e-9)
    assert fast.sum() == 16
    np.testing.assert_allclose(dt[fast], 0.005, atol=1e-12)
    np.testing.assert_allclose(np.abs(np.diff(b.eps)[fast]) / dt[fast], 0.625, rtol=1e-9)
    np.testing.assert_allclose(dt[(mid > 6.0) & (mid <= 7.0 + 1e-9)], 0.125, atol=1e-12)
    np.testing.assert_allclose(dt[(mid > 7.0 + 1e-9) & (mid <= 8.0 + 1e-9)], 0.2, atol=1e-12)
    hold = (b.t > 5.08 + 1e-9) & (b.t <= 6.0 + 1e-9)
    assert np.all(b.eps[hold] == 0.0)
    hyst = (b.t > 2.0) & (b.t <= 4.0)
    assert np.max(b.eps[hyst]) == pytest.approx(0.03)


def test_path_roundtrip(tmp_path, paths):
    fname = tmp_path / "b.csv"
    datagen.write_path(paths[1], fname)
    back = datagen.read_path(fname)
    np.testing.assert_array_equal(back.t, paths[1].t)
    np.testing.assert_array_equal(back.eps, paths[1].eps)


# --- scaling --------------------------------------------------------------------


def test_scaling_factors_follow_independent_ones(v1_walks):
    sc = datagen.fit_scaling(v1_walks)
    s_eps, s_dt, s_psi = sc.s["eps"], sc.s["dt"], sc.s["psi"]
    assert s_eps == max(np.max(np.abs(s.eps)) for s in v1_walks)
    assert s_dt == max(np.max(s.dt) for s in v1_walks)
    assert sc.s["sig"] == s_psi / s_eps and sc.s["tau"] == s_psi / s_eps
    assert sc.s["xi"] == s_eps
    assert sc.s["phi"] == sc.s["phistar"] == s_psi / s_dt
    assert all(v == 0.0 for v in sc.m.values())


def test_scaling_arithmetic_examples():
    seq = datagen.Sequence(
        t=np.array([0.0, 1.0, 1.5]), dt=np.array([0.0, 1.0, 0.5]), eps=np.array([0.0, -0.02, 0.02]),
        sig=np.array([0.0, -5.0, 5.0]), xi=np.zeros((3, 1)), psi=np.array([0.0, 1.0, 0.5]), diss=np.zeros(3),
    )
    sc = datagen.fit_scaling([seq])
    assert sc.m["eps"] == 0.0 and sc.s["eps"] == 0.02
    assert sc.s["sig"] == pytest.approx(50.0, rel=1e-15)


def test_scaled_independent_quantities_bounded(v1_walks):
    sc = datagen.fit_scaling(v1_walks)
    for s in v1_walks:
        z = datagen.apply_scaling(sc, s)
        for q in ("eps", "dt", "psi"):
            assert np.max(np.abs(getattr(z, q))) <= 1.0 + 1e-12


@pytest.mark.parametrize("offsets", [False, True])
def test_scaling_roundtrip(v1_walks, offsets):
    sc = datagen.fit_scaling(v1_walks, offsets=offsets)
    for s in v1_walks[:3]:
        back = datagen.invert_scaling(sc, datagen.apply_scaling(sc, s))
        for k in s.__dict__:
            np.testing.assert_allclose(getattr(back, k), getattr(s, k), rtol=1e-12, atol=1e-15)


def test_offsets_map_black_box_quantities_to_unit_range(v1_walks):
    sc = datagen.fit_scaling(v1_walks, offsets=True)
    sig = np.concatenate([datagen.apply_scaling(sc, s).sig for s in v1_walks])
    assert sig.min() == pytest.approx(-1.0) and sig.max() == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(eps=st.floats(-0.02, 0.02), x1=st.floats(-0.02, 0.02), x2=st.floats(-0.02, 0.02))
def test_scaled_stress_is_scaled_energy_derivative(eps, x1, x2):
    p = refmat.get_material("V2")
    sc = datagen.ScalingSet(s={"eps": 0.02, "psi": 0.7, "sig": 0.7 / 0.02, "xi": 0.02})
    xi = np.array([x1, x2])
    sig = p.E * eps + sum(br.E * (eps - xi[k]) for k, br in enumerate(p.branches))

    def psi_scaled(e_s):
        return refmat.free_energy(p, sc.inv("eps", e_s), xi) / sc.s["psi"]

    # quadratic energy: the central difference is exact up to rounding
    e_s, h = float(sc.fwd("eps", eps)), 1e-3
    d = (psi_scaled(e_s + h) - psi_scaled(e_s - h)) / (2 * h)
    assert d == pytest.approx(float(sc.fwd("sig", sig)), abs=1e-10)


def test_degenerate_scale_is_an_error():
    s = datagen.gen_random_walk(RandomWalkConfig(s_deps=0.0, n_seq=1, n_steps=5), "V1")
    with pytest.raises(datagen.DatasetError, match="degenerate"):
        datagen.fit_scaling(s)


def test_scaling_json_roundtrip(tmp_path, v1_walks):
    sc = datagen.fit_scaling(v1_walks, offsets=True)
    sc.save(tmp_path / "s.json")
    assert datagen.ScalingSet.load(tmp_path / "s.json").to_dict() == sc.to_dict()


# --- tuples and files -------------------------------------------------------------


def _rows(n, seed=0):
    cfg = RandomWalkConfig(n_seq=1, n_steps=n - 1, seed=seed)
    return datagen.gen_random_walk(cfg, "V1")[0]


def test_tuple_counts():
    s = _rows(100)
    assert len(datagen.to_fnn_tuples([s], 1)) == 99
    assert len(datagen.to_fnn_tuples([s], 2)) == 98
    assert len(datagen.to_fnn_tuples(datagen.standard_dataset("V1"), 1)) == 1000


def test_tuple_windows_stay_inside_sequences():
    a, b = _rows(4, 1), _rows(30, 2)
    ts = datagen.to_fnn_tuples([a, b], 3)
    assert len(ts) == 1 + 27
    np.testing.assert_array_equal(ts.hist_eps[0], a.eps[[2, 1, 0]])
    np.testing.assert_array_equal(ts.hist_dt[0], a.dt[[3, 2, 1]])
    assert ts.eps_new[1] == b.eps[3]
    short = datagen.to_fnn_tuples([_rows(2), b], 3)
    assert short.skipped == 1


def test_no_long_enough_sequence():
    with pytest.raises(datagen.DatasetError):
        datagen.to_fnn_tuples([_rows(2)], 5)
    with pytest.raises(ValueError):
        datagen.to_fnn_tuples([_rows(5)], 0)


def test_dataset_file_roundtrip(tmp_path):
    seqs = datagen.gen_random_walk(RandomWalkConfig(n_seq=3, n_steps=7), "P2")
    fname = tmp_path / "d.csv"
    datagen.write_dataset(fname, seqs)
    header = open(fname).readline().strip()
    assert header == "seq,step,t,dt,eps,sig,xi1,xi2,xi3,psi,diss"
    assert b"\r" not in open(fname, "rb").read()
    back = datagen.read_dataset(fname)
    assert len(back) == 3
    for a, b in zip(seqs, back):
        for k in a.__dict__:
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))


def test_dataset_missing_column(tmp_path):
    fname = tmp_path / "bad.csv"
    fname.write_text("seq,step,t,dt,eps\n0,0,0,0,0\n")
    with pytest.raises(datagen.DatasetError, match="sig"):
        datagen.read_dataset(fname)
