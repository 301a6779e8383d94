import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from golfopt import tensor as T
from golfopt.tensor import Tensor
from golfopt.toy import (
    ToyConfig,
    ToyMLP,
    ToySample,
    analytic_opt_grad,
    analytic_opt_p,
    as_arrays,
    classifier_accuracy,
    classifier_gradient,
    gen_toy,
    grid_points,
    reconstruct_surface,
    reflect,
    restoration_mse,
    restore_with_prior,
    run_toy,
    toy_param_count,
    train_classifier_prior,
    train_gradient_prior,
)
from golfopt.layers import param_count

coords = st.floats(-1, 1, allow_nan=False)


@pytest.fixture(scope="module")
def trained():
    cfg = ToyConfig()
    clf_train = gen_toy(cfg.n_train, np.random.default_rng([0, 1]), mode="classify")
    reg_train = gen_toy(cfg.n_train, np.random.default_rng([0, 2]), mode="restore")
    clf, acc = train_classifier_prior(clf_train, cfg)
    return clf, acc, train_gradient_prior(reg_train, cfg)


def test_reflection_example():
    assert ToySample((0.3, -0.5)).u_tilde == (0.5, -0.3)


@given(coords, coords)
def test_reflection_involution_and_antisymmetry(u1, u2):
    ut = reflect((u1, u2))
    assert u1 + u2 == -(ut[0] + ut[1])
    assert reflect(ut) == (u1, u2)


def test_generated_samples(rng):
    restore = gen_toy(200, rng)
    assert all(s.u[0] + s.u[1] < 0 and s.label == 1 for s in restore)
    mixed = gen_toy(400, rng, mode="classify")
    labels = np.array([s.label for s in mixed])
    assert 0.3 < labels.mean() < 0.7
    assert all((s.label == 1) == (s.u[0] + s.u[1] < 0) for s in mixed)
    u, ut, _ = as_arrays(restore)
    np.testing.assert_array_equal(reflect(reflect(u)), u)
    assert gen_toy(0, rng) == []


def test_both_variants_have_96_parameters(rng):
    assert toy_param_count() == 96
    assert param_count(ToyMLP(rng, classifier=True)) == 96


def test_untrained_classifier_is_near_chance():
    test = gen_toy(1000, np.random.default_rng(5), mode="classify")
    accs = [classifier_accuracy(ToyMLP(np.random.default_rng(s), classifier=True), test) for s in range(5)]
    assert abs(np.median(accs) - 0.5) <= 0.1


def test_gradient_loss_vanishes_at_oracle(rng):
    u, ut, _ = as_arrays(gen_toy(50, rng))
    assert T.mse(Tensor(ut - u), ut - u).item() == 0.0


def test_trained_classifier(trained):
    clf, acc, _ = trained
    assert acc >= 0.97
    far = np.array([[-0.95, -0.9], [0.9, 0.95]])
    assert np.abs(classifier_gradient(clf, far)).max() < 1e-2
    np.testing.assert_allclose(restore_with_prior(clf, far), far, atol=1e-2)


def test_trained_gradient_prior(trained):
    clf, _, grad_net = trained
    np.testing.assert_allclose(restore_with_prior(grad_net, [0.3, -0.5])[0], [0.5, -0.3], atol=0.05)
    on_line = np.array([[0.5, -0.5], [-0.2, 0.2], [0.0, 0.0]])
    np.testing.assert_allclose(restore_with_prior(grad_net, on_line), on_line, atol=0.05)
    u, ut, _ = as_arrays(gen_toy(1000, np.random.default_rng([0, 3])))
    grad_mse = restoration_mse(restore_with_prior(grad_net, u), ut)
    clf_mse = restoration_mse(restore_with_prior(clf, u), ut)
    assert grad_mse <= 1e-2
    assert clf_mse >= 0.1
    assert clf_mse > 10 * grad_mse


def test_logit_gradient_differs(trained):
    clf = trained[0]
    u = np.array([[0.1, -0.3]])
    assert not np.allclose(classifier_gradient(clf, u), classifier_gradient(clf, u, use_logits=True))


def test_analytic_prior_cases():
    np.testing.assert_array_equal(analytic_opt_grad([1.0, 1.0]), [2.0, 2.0])
    assert analytic_opt_p([1.0, 1.0]) == 2.0
    np.testing.assert_array_equal(analytic_opt_grad([0.4, -0.4]), [0.0, 0.0])


def test_analytic_step_is_reflection(rng):
    u = rng.uniform(-1, 1, size=(1000, 2))
    assert np.abs(u - analytic_opt_grad(u) - reflect(u)).max() <= 1e-12


def test_surface_of_optimal_field():
    axis, surface = reconstruct_surface(lambda p: -analytic_opt_grad(p), 101)
    assert axis.size == 101
    assert np.abs(surface - analytic_opt_p(grid_points(axis))).max() <= 1e-3
    _, flat = reconstruct_surface(lambda p: np.zeros_like(p), 21)
    assert not flat.any()
    with pytest.raises(ValueError):
        reconstruct_surface(lambda p: p, 1)


def test_surface_exact_for_constant_field():
    axis, surface = reconstruct_surface(lambda p: np.broadcast_to([0.3, -0.7], p.shape), 41)
    u = grid_points(axis)
    np.testing.assert_allclose(surface, -(0.3 * u[..., 0] - 0.7 * u[..., 1]), atol=1e-12, rtol=0)


def test_surface_error_is_second_order():
    # p = sin(2 u1) cos(u2); the trapezoid rule is exact for linear fields, so use a curved one
    def p(u):
        return np.sin(2 * u[..., 0]) * np.cos(u[..., 1])

    def neg_grad(u):
        return -np.stack([2 * np.cos(2 * u[..., 0]) * np.cos(u[..., 1]), -np.sin(2 * u[..., 0]) * np.sin(u[..., 1])], axis=-1)

    errors = []
    for n in (21, 41, 81):
        axis, surface = reconstruct_surface(neg_grad, n)
        errors.append(np.abs(surface - p(grid_points(axis))).max())
    assert errors[0] / errors[1] >= 3.8
    assert errors[1] / errors[2] >= 3.8


def test_run_toy_is_deterministic_and_writes_artifacts(tmp_path):
    cfg = ToyConfig(n_train=400, iters=200, n_test=100, grid=11)
    a = run_toy(cfg, tmp_path)
    b = run_toy(cfg)
    assert (a.classifier_mse, a.gradient_mse, a.accuracy) == (b.classifier_mse, b.gradient_mse, b.accuracy)
    for name in ("classifier_prior", "gradient_prior", "optimal_prior"):
        assert (tmp_path / f"{name}.csv").exists() and (tmp_path / f"{name}.svg").exists()
    assert (tmp_path / "slice_diagonal.svg").exists()
    saved = json.loads((tmp_path / "toy_result.json").read_text())
    assert saved["gradient_mse"] == a.gradient_mse
    assert len((tmp_path / "optimal_prior.csv").read_text().splitlines()) == 1 + 11 * 11
