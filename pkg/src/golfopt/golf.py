"""The two-stage optimizer: F makes one aggressive step, G refines recurrently.

    x_0 = F(y) = y + net_F(y),    x_i = G(x_{i-1}) = x_{i-1} + net_G(x_{i-1})

The skip around F is on by default and can be turned off with ``f_skip``.

G - x is the learned (negative) prior gradient, up to a constant factor.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .layers import ResidualCNN, param_count
from .tensor import Tensor

FULL_FILTERS_F = 32
FULL_FILTERS_G = 16


@dataclass
class GolfConfig:
    filters_f: int = 8
    filters_g: int = 8
    n_train: int = 5
    n_infer: int = 3
    seed: int = 0
    # F(y) = y + net_F(y). Without it every path through F ends in an instance
    # norm, so F cannot reproduce the per-image intensity level of its input.
    f_skip: bool = True
    # G starts as the identity: zero output conv, so r(x) = 0 until trained.
    # A random r scrambles x_0 and G spends its budget undoing that.
    g_zero_init: bool = True

    @classmethod
    def paper_scale(cls, **kw) -> GolfConfig:
        return cls(filters_f=FULL_FILTERS_F, filters_g=FULL_FILTERS_G, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


class GolfModel:
    def __init__(self, config: GolfConfig | None = None):
        self.config = config or GolfConfig()
        rng = np.random.default_rng(self.config.seed)
        self.f = ResidualCNN(self.config.filters_f, rng)
        self.g = ResidualCNN(self.config.filters_g, rng)
        if self.config.g_zero_init:
            self.g.conv_out.weight.data = np.zeros_like(self.g.conv_out.weight.data)

    @property
    def f_params(self) -> dict[str, Tensor]:
        return self.f.parameters()

    @property
    def g_params(self) -> dict[str, Tensor]:
        return self.g.parameters()

    def state(self) -> dict[str, Tensor]:
        out = {f"f.{k}": v for k, v in self.f_params.items()}
        out.update({f"g.{k}": v for k, v in self.g_params.items()})
        return out

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for name, param in self.state().items():
            if name not in tensors:
                raise KeyError(f"missing tensor {name!r}")
            value = np.asarray(tensors[name], dtype=np.float64)
            if value.shape != param.shape:
                raise ValueError(f"tensor {name!r} has shape {value.shape}, expected {param.shape}")
            param.data = value.copy()

    def param_counts(self) -> tuple[int, int]:
        return param_count(self.f), param_count(self.g)


def _check_image(x: Tensor) -> None:
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"expected an image batch of shape (N, 3, H, W), got {x.shape}")


def forward_f(model: GolfModel, y) -> Tensor:
    y = T.as_tensor(y)
    _check_image(y)
    out = model.f(y)
    return T.add(y, out) if model.config.f_skip else out


def residual_g(model: GolfModel, x) -> Tensor:
    """The wrapped network's raw output r(x)."""
    x = T.as_tensor(x)
    _check_image(x)
    return model.g(x)


def forward_g(model: GolfModel, x) -> Tensor:
    x = T.as_tensor(x)
    return T.add(x, residual_g(model, x))


def extract_prior_gradient(model: GolfModel, x) -> Tensor:
    """G(x) - x: the negative prior gradient, up to an unknown 1/sigma^2 factor."""
    x = T.as_tensor(x)
    return T.sub(forward_g(model, x), x)


def golf_infer(model: GolfModel, y, iters: int | None = None) -> list[Tensor]:
    """Trajectory [x_0, ..., x_iters]; iterates are not clamped (see ``export_image``)."""
    iters = model.config.n_infer if iters is None else iters
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    traj = [forward_f(model, y)]
    for _ in range(iters):
        traj.append(forward_g(model, traj[-1]))
    return traj


def export_image(x) -> np.ndarray:
    """Clamp to [0, 1] for writing/scoring."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return np.clip(data, 0.0, 1.0)


def zero_residual(net: ResidualCNN) -> None:
    """Zero every BB branch weight and IN beta of a network, plus its output conv."""
    for block in net.blocks:
        for name, p in block.branch.named_parameters():
            if name.endswith("weight") or name.endswith("beta"):
                p.data = np.zeros_like(p.data)
    net.conv_out.weight.data = np.zeros_like(net.conv_out.weight.data)
