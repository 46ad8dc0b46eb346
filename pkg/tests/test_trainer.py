import csv
import json

import numpy as np
import pytest

from inelastic_nn import archzoo, datagen, presets, trainer
from inelastic_nn.adnn import core as ad
from inelastic_nn.trainer import OptimConfig, TrainingError

TARGET = np.array([1.0, -2.0, 0.5])


def quadratic(theta):
    d = theta - TARGET
    a = ad.sum_(d * d)
    b = ad.mean(ad.abs_(d))
    return a + 0.1 * b, {"sq": (1.0, a), "abs": (0.1, b)}


def smooth(theta):
    v = ad.sum_(ad.tanh(theta) * theta) + ad.sum_(ad.exp(0.3 * theta))
    return v, {"v": (1.0, v)}


@pytest.mark.parametrize("method", ["adam", "adam+bfgs", "adam+lbfgs"])
def test_minimize_reaches_minimum(method):
    theta, rep = trainer.minimize(quadratic, np.zeros(3), OptimConfig(method=method, lr=0.05, max_iter=3000))
    np.testing.assert_allclose(theta, TARGET, atol=1e-3)
    assert rep.total < 1e-3 and rep.iterations <= 3000


def test_best_iterate_is_retained():
    _, rep = trainer.minimize(quadratic, np.zeros(3), OptimConfig(lr=0.5, max_iter=300))
    totals = np.array([row[1] for row in rep.history])
    running = np.minimum.accumulate(totals)
    assert np.all(np.diff(running) <= 0.0)
    assert rep.total == running[-1]


def test_components_sum_to_total():
    _, rep = trainer.minimize(quadratic, np.zeros(3), OptimConfig(max_iter=50))
    assert rep.weighted_sum() == pytest.approx(rep.total, rel=1e-12)


def test_runs_are_reproducible():
    seqs = datagen.gen_random_walk(datagen.RandomWalkConfig(n_seq=2, n_steps=15), "V1")
    model = archzoo.build_model(presets.default_config("V1", "fnn_sigma"), seqs)
    cfg = OptimConfig(max_iter=40, seed=3)
    a, ra = trainer.train(model, seqs, cfg)
    b, rb = trainer.train(model, seqs, cfg)
    np.testing.assert_array_equal(a, b)
    assert ra["all"].history == rb["all"].history


def test_plateau_stops_early():
    flat = lambda th: (ad.sum_(th * 0.0) + 1.0, {"c": (1.0, ad.sum_(th * 0.0) + 1.0)})
    _, rep = trainer.minimize(flat, np.zeros(2), OptimConfig(max_iter=5000, plateau=20, window=10))
    assert rep.stop_reason == "converged" and rep.iterations < 5000


def test_non_finite_loss_aborts():
    bad = lambda th: (ad.sum_(ad.log(th)), {"l": (1.0, ad.sum_(ad.log(th)))})
    with pytest.raises(TrainingError) as info, np.errstate(invalid="ignore"):
        trainer.minimize(bad, -np.ones(2), OptimConfig(max_iter=10))
    assert info.value.iteration == 1


@pytest.mark.parametrize("kw", [{"max_iter": 0}, {"tol": 0.0}, {"method": "sgd"}])
def test_invalid_optimizer_settings(kw):
    with pytest.raises(ValueError):
        OptimConfig(**kw)


def test_phases_only_touch_their_block():
    seqs = datagen.gen_random_walk(datagen.RandomWalkConfig(n_seq=2, n_steps=15), "V1")
    model = archzoo.build_model(presets.default_config("V1", "fnn_xipsi"), seqs)
    theta0 = model.init_theta(0)
    xi_sl, psi_sl = model.pack.block_slice("xi"), model.pack.block_slice("psi")
    cfg = OptimConfig(max_iter=20)
    data = model.prepare(seqs)
    sub, _ = trainer.minimize(trainer.phase_loss(model, data, 1, theta0), theta0[xi_sl], cfg)
    assert not np.array_equal(sub, theta0[xi_sl])
    theta, reports = trainer.train(model, seqs, cfg, theta0=theta0)
    assert set(reports) == {"phase1", "phase2"}
    np.testing.assert_array_equal(theta[xi_sl], sub)
    assert not np.array_equal(theta[psi_sl], theta0[psi_sl])


def test_phase_loss_matches_full_loss():
    seqs = datagen.gen_random_walk(datagen.RandomWalkConfig(n_seq=2, n_steps=15), "V1")
    model = archzoo.build_model(presets.default_config("V1", "fnn_xipsi"), seqs)
    theta = model.init_theta(1)
    data = model.prepare(seqs)
    sl = model.trainable(2)
    restricted = trainer.phase_loss(model, data, 2, theta)
    a = float(ad.value_of(restricted(ad.variable(theta[sl]))[0]))
    b = float(ad.value_of(model.loss(theta, data, 2)[0]))
    assert a == b


def test_gradient_check_passes_on_smooth_loss():
    theta = np.random.default_rng(0).standard_normal(12)
    res = trainer.grad_check(smooth, theta, samples=12)
    assert res["passed"] and res["max_rel_err"] < 1e-8


def test_gradient_check_catches_wrong_gradient():
    # a primitive with a deliberately wrong adjoint
    wrong = ad.Primitive("wrong_sin", np.sin, [lambda g, out, x: g * 0.5])

    def loss(theta):
        v = ad.sum_(wrong(theta))
        return v, {"v": (1.0, v)}

    res = trainer.grad_check(loss, np.linspace(0.1, 1.0, 6), samples=6)
    assert not res["passed"]


def test_gradient_check_skips_kinks():
    def loss(theta):
        v = ad.sum_(ad.abs_(theta))
        return v, {"v": (1.0, v)}

    theta = np.array([1e-9, 0.5, -0.3])
    res = trainer.grad_check(loss, theta, samples=5, rng=np.random.default_rng(1))
    assert res["passed"]


def test_hessian_vector_product():
    theta = np.random.default_rng(2).standard_normal(8)
    err, spread = trainer.hvp_check(smooth, theta, h=1e-4)
    assert err < 1e-7 and spread < 1e-5


def test_report_files(tmp_path):
    _, rep = trainer.minimize(quadratic, np.zeros(3), OptimConfig(max_iter=5))
    rep.save(tmp_path / "r.json")
    rep.save_history(tmp_path / "h.csv")
    d = json.load(open(tmp_path / "r.json"))
    assert d["iterations"] == 5 and "history" not in d
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == ["eval", "total", "sq", "abs"] and len(rows) == 6
