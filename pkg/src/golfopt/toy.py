"""Two-pixel world: a discriminative prior versus a gradient-constrained prior.

An image ``u = (u1, u2)`` is blurry when ``u1 + u2 < 0``; its sharp partner is
the mirror image across the line ``u1 + u2 = 0``, i.e. ``(-u2, -u1)``. The
ideal prior is ``p*(u) = (u1 + u2)^2 / 2`` since ``u - grad p*(u)`` is exactly
the mirror image.

Both priors use the same 96-parameter MLP: 2 -> 4 -> 8 -> 4 -> 2 with biases on
every layer but the last (12 + 40 + 36 + 8 parameters). The classifier adds a
softmax on top.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import tensor as T
from .layers import Linear, Module, ReLU, Sequential, param_count
from .optim import AdamState, adam_step
from .tensor import Tensor

BLUR, SHARP = 1, 0


@dataclass(frozen=True)
class ToySample:
    u: tuple[float, float]
    label: int = BLUR

    @property
    def u_tilde(self) -> tuple[float, float]:
        return reflect(self.u)


def reflect(u):
    """Mirror across ``u1 + u2 = 0``: (u1, u2) -> (-u2, -u1). Works on (..., 2) arrays too."""
    if isinstance(u, tuple):
        return (-u[1], -u[0])
    u = np.asarray(u, dtype=np.float64)
    return -u[..., ::-1]


def gen_toy(count: int, rng: np.random.Generator, mode: str = "restore") -> list[ToySample]:
    """``restore``: blurry points only; ``classify``: the whole square with labels."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    out: list[ToySample] = []
    while len(out) < count:
        u1, u2 = rng.uniform(-1.0, 1.0, size=2)
        s = u1 + u2
        if mode == "restore":
            if s < 0:
                out.append(ToySample((float(u1), float(u2)), BLUR))
        elif mode == "classify":
            out.append(ToySample((float(u1), float(u2)), BLUR if s < 0 else SHARP))
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out


def as_arrays(samples: list[ToySample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    u = np.array([s.u for s in samples], dtype=np.float64).reshape(-1, 2)
    return u, reflect(u), np.array([s.label for s in samples], dtype=np.int64)


class ToyMLP(Module):
    def __init__(self, rng: np.random.Generator, classifier: bool = False):
        self.classifier = classifier
        self.net = Sequential(
            Linear(2, 4, rng),
            ReLU(4),
            Linear(4, 8, rng),
            ReLU(8),
            Linear(8, 4, rng),
            ReLU(4),
            Linear(4, 2, rng, bias=False),
        )

    def logits(self, u) -> Tensor:
        return self.net(T.as_tensor(u))

    def forward(self, u) -> Tensor:
        out = self.logits(u)
        return T.softmax(out) if self.classifier else out


@dataclass
class ToyConfig:
    n_train: int = 16_000
    iters: int = 4_000
    lr: float = 1e-3
    batch_size: int = 4
    n_test: int = 1_000
    seed: int = 0
    use_logits: bool = False
    grid: int = 101


def _batches(n: int, batch: int, iters: int, rng: np.random.Generator):
    order = rng.permutation(n)
    pos = 0
    for _ in range(iters):
        if pos + batch > n:
            order, pos = rng.permutation(n), 0
        yield order[pos : pos + batch]
        pos += batch


def _fit(model: ToyMLP, loss_fn, n: int, cfg: ToyConfig, rng) -> list[float]:
    params = model.parameters()
    adam = AdamState(lr=cfg.lr)
    losses = []
    for idx in _batches(n, cfg.batch_size, cfg.iters, rng):
        model.zero_grad()
        loss = loss_fn(idx)
        value = loss.item()
        if not np.isfinite(value):
            raise FloatingPointError(f"non-finite toy loss at iteration {len(losses)}")
        T.backward(loss)
        adam_step(adam, params)
        losses.append(value)
    return losses


def classifier_accuracy(model: ToyMLP, samples: list[ToySample]) -> float:
    u, _, labels = as_arrays(samples)
    with T.no_grad():
        pred = np.argmax(model.logits(u).data, axis=1)
    return float(np.mean(pred == labels))


def train_classifier_prior(samples: list[ToySample], cfg: ToyConfig, test: list[ToySample] | None = None):
    """Cross-entropy training; returns (model, accuracy on ``test`` or 1,000 fresh points)."""
    rng = np.random.default_rng([cfg.seed, 11])
    model = ToyMLP(rng, classifier=True)
    u, _, labels = as_arrays(samples)
    _fit(model, lambda idx: T.cross_entropy(model.logits(u[idx]), labels[idx]), len(samples), cfg, rng)
    if test is None:
        test = gen_toy(cfg.n_test, np.random.default_rng([cfg.seed, 13]), mode="classify")
    return model, classifier_accuracy(model, test)


def train_gradient_prior(samples: list[ToySample], cfg: ToyConfig) -> ToyMLP:
    """Regress f(u) onto u_tilde - u, the negative gradient of the ideal prior."""
    rng = np.random.default_rng([cfg.seed, 12])
    model = ToyMLP(rng, classifier=False)
    u, ut, _ = as_arrays(samples)
    target = ut - u
    _fit(model, lambda idx: T.mse(model(u[idx]), target[idx]), len(samples), cfg, rng)
    return model


def prior_value(model: ToyMLP, u, use_logits: bool = False) -> Tensor:
    """Classifier prior p(u): blurry-class probability (or its logit)."""
    out = model.logits(u) if use_logits else T.softmax(model.logits(u))
    return out[:, BLUR]


def classifier_gradient(model: ToyMLP, u: np.ndarray, use_logits: bool = False) -> np.ndarray:
    probe = Tensor(np.asarray(u, dtype=np.float64).reshape(-1, 2), requires_grad=True)
    T.backward(T.tsum(prior_value(model, probe, use_logits)))
    return probe.grad


def restore_with_prior(prior: ToyMLP, u, use_logits: bool = False) -> np.ndarray:
    """One update: ``u - grad p(u)`` for a classifier, ``u + f(u)`` for a gradient net."""
    u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
    if prior.classifier:
        return u - classifier_gradient(prior, u, use_logits)
    with T.no_grad():
        return u + prior(u).data


def restoration_mse(u_restored: np.ndarray, u_tilde: np.ndarray) -> float:
    """Mean over pairs of the squared distance ||u_tilde - u'||^2."""
    return float(np.mean(np.sum((np.asarray(u_tilde) - np.asarray(u_restored)) ** 2, axis=-1)))


def analytic_opt_grad(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    s = u[..., 0] + u[..., 1]
    return np.stack([s, s], axis=-1)


def analytic_opt_p(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    s = u[..., 0] + u[..., 1]
    return 0.5 * s * s


def reconstruct_surface(
    field: Callable[[np.ndarray], np.ndarray], n: int = 101, lo: float = -1.0, hi: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Recover p from ``field = -grad p`` by trapezoidal integration.

    The path runs (0, 0) -> (u1, 0) -> (u1, u2) and p(0, 0) = 0. Returns
    ``(axis, surface)`` with ``surface[i, j] = p(axis[i], axis[j])``.
    """
    if n < 2:
        raise ValueError(f"grid must be at least 2x2, got {n}")
    axis = np.linspace(lo, hi, n)
    nodes = np.union1d(axis, [0.0])
    zero = int(np.searchsorted(nodes, 0.0))
    cols = np.searchsorted(nodes, axis)

    leg1_pts = np.stack([nodes, np.zeros_like(nodes)], axis=-1)
    c1 = cumulative_trapezoid(np.asarray(field(leg1_pts))[:, 0], nodes, initial=0.0)
    leg1 = c1[cols] - c1[zero]

    u1g, tg = np.meshgrid(axis, nodes, indexing="ij")
    pts = np.stack([u1g, tg], axis=-1).reshape(-1, 2)
    f2 = np.asarray(field(pts))[:, 1].reshape(n, nodes.size)
    c2 = cumulative_trapezoid(f2, nodes, axis=1, initial=0.0)
    leg2 = c2[:, cols] - c2[:, zero : zero + 1]
    return axis, -(leg1[:, None] + leg2)


def grid_points(axis: np.ndarray) -> np.ndarray:
    u1, u2 = np.meshgrid(axis, axis, indexing="ij")
    return np.stack([u1, u2], axis=-1)


def model_field(model: ToyMLP) -> Callable[[np.ndarray], np.ndarray]:
    def f(pts):
        with T.no_grad():
            return model(pts).data

    return f


@dataclass
class ToyResult:
    seed: int
    accuracy: float
    classifier_mse: float
    gradient_mse: float
    ordering_ok: bool
    surface_rms: float
    surface_rms_blur: float  # restricted to u1 + u2 <= 0, where the training data lives
    use_logits: bool

    def bounds(self) -> dict[str, bool]:
        return {
            "accuracy>=0.97": self.accuracy >= 0.97,
            "gradient_mse<=1e-2": self.gradient_mse <= 1e-2,
            "classifier_mse>=0.1": self.classifier_mse >= 0.1,
            "classifier_mse>10*gradient_mse": self.ordering_ok,
        }


def run_toy(cfg: ToyConfig, out_dir=None) -> ToyResult:
    clf_train = gen_toy(cfg.n_train, np.random.default_rng([cfg.seed, 1]), mode="classify")
    reg_train = gen_toy(cfg.n_train, np.random.default_rng([cfg.seed, 2]), mode="restore")
    test = gen_toy(cfg.n_test, np.random.default_rng([cfg.seed, 3]), mode="restore")
    clf_test = gen_toy(cfg.n_test, np.random.default_rng([cfg.seed, 4]), mode="classify")

    clf, acc = train_classifier_prior(clf_train, cfg, clf_test)
    grad_net = train_gradient_prior(reg_train, cfg)

    u, ut, _ = as_arrays(test)
    clf_mse = restoration_mse(restore_with_prior(clf, u, cfg.use_logits), ut)
    grad_mse = restoration_mse(restore_with_prior(grad_net, u), ut)

    axis, learned = reconstruct_surface(model_field(grad_net), cfg.grid)
    optimal = analytic_opt_p(grid_points(axis))
    sq = (learned - optimal) ** 2
    blur_side = grid_points(axis).sum(axis=-1) <= 0
    rms = float(np.sqrt(np.mean(sq)))
    rms_blur = float(np.sqrt(np.mean(sq[blur_side])))
    result = ToyResult(cfg.seed, acc, clf_mse, grad_mse, clf_mse > 10 * grad_mse, rms, rms_blur, cfg.use_logits)

    if out_dir is not None:
        _write_artifacts(Path(out_dir), cfg, clf, axis, learned, optimal, result)
    return result


def _write_grid_csv(path: Path, axis: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u1", "u2", "value"])
        for i, a in enumerate(axis):
            for j, b in enumerate(axis):
                writer.writerow([f"{a:.6f}", f"{b:.6f}", repr(float(values[i, j]))])


def _write_artifacts(out: Path, cfg: ToyConfig, clf: ToyMLP, axis, learned, optimal, result: ToyResult) -> None:
    from .plots import heatmap_svg, line_plot_svg

    out.mkdir(parents=True, exist_ok=True)
    pts = grid_points(axis).reshape(-1, 2)
    with T.no_grad():
        clf_surface = prior_value(clf, pts, cfg.use_logits).data.reshape(axis.size, axis.size)
    surfaces = {
        "classifier_prior": clf_surface,
        "gradient_prior": learned,
        "optimal_prior": optimal,
    }
    for name, values in surfaces.items():
        _write_grid_csv(out / f"{name}.csv", axis, values)
        heatmap_svg(values, out / f"{name}.svg", title=name.replace("_", " "), extent=(axis[0], axis[-1]))

    diag = np.arange(axis.size)
    series = {name: values[diag, diag] for name, values in surfaces.items()}
    line_plot_svg(axis, series, out / "slice_diagonal.svg", title="slice u1 = u2", xlabel="u1 = u2")
    with open(out / "slice_diagonal.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + list(series))
        for k, t in enumerate(axis):
            writer.writerow([f"{t:.6f}"] + [repr(float(v[k])) for v in series.values()])
    (out / "toy_result.json").write_text(json.dumps(asdict(result) | {"bounds": result.bounds()}, indent=2))


def toy_param_count() -> int:
    return param_count(ToyMLP(np.random.default_rng(0)))
