"""Parameterised layers and the Basic-Block residual unit.

Conv layers are bias-free. A Basic Block (BB) is

    branch:   Conv7(c_in->c_out) IN ReLU Conv5(c_out->c_out) IN ReLU
    shortcut: identity if c_in == c_out else IN(c_in) -> Conv1(c_in->c_out)

which gives 74*C^2 + 4*C parameters for a C->C block.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor

LAYER_KINDS = ("Conv7", "Conv5", "Conv1", "InstanceNorm", "ReLU", "Linear", "Softmax")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    out_channels: int
    has_bias: bool = False

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @property
    def param_count(self) -> int:
        if self.kind.startswith("Conv"):
            k = int(self.kind[4:])
            return k * k * self.in_channels * self.out_channels + (self.out_channels if self.has_bias else 0)
        if self.kind == "InstanceNorm":
            return 2 * self.in_channels
        if self.kind == "Linear":
            return self.in_channels * self.out_channels + (self.out_channels if self.has_bias else 0)
        return 0


class Module:
    """Minimal container: subclasses register Tensors and child Modules as attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if isinstance(value, Tensor):
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def layer_specs(self) -> list[LayerSpec]:
        return []

    def requires_grad_(self, flag: bool) -> Module:
        for p in self.parameters().values():
            p.requires_grad = flag
        return self

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError


def param_count(obj) -> int:
    """Exact number of scalar parameters of a LayerSpec, Module or list of LayerSpecs."""
    if isinstance(obj, LayerSpec):
        return obj.param_count
    if isinstance(obj, Module):
        return int(sum(p.size for p in obj.parameters().values()))
    return int(sum(param_count(item) for item in obj))


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator):
        self.k = k
        self.weight = _uniform(rng, (c_out, c_in, k, k), c_in * k * k)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x):
        return T.conv2d(x, self.weight, pad=self.k // 2)

    def layer_specs(self):
        return [LayerSpec(f"Conv{self.k}", self.in_channels, self.out_channels)]


class InstanceNorm2d(Module):
    eps = 1e-5

    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)

    def forward(self, x):
        return T.instance_norm(x, self.gamma, self.beta, self.eps)

    def layer_specs(self):
        c = self.gamma.shape[0]
        return [LayerSpec("InstanceNorm", c, c)]


class ReLU(Module):
    def __init__(self, channels: int = 0):
        self.channels = channels

    def forward(self, x):
        return T.relu(x)

    def layer_specs(self):
        return [LayerSpec("ReLU", self.channels, self.channels)]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = _uniform(rng, (d_in, d_out), d_in)
        self.bias = _uniform(rng, (d_out,), d_in) if bias else None

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)

    def named_parameters(self, prefix=""):
        yield prefix + "weight", self.weight
        if self.bias is not None:
            yield prefix + "bias", self.bias

    def layer_specs(self):
        d_in, d_out = self.weight.shape
        return [LayerSpec("Linear", d_in, d_out, has_bias=self.bias is not None)]


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def layer_specs(self):
        return [spec for layer in self.layers for spec in layer.layer_specs()]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


class BasicBlock(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.c_in, self.c_out = c_in, c_out
        self.branch = Sequential(
            Conv2d(c_in, c_out, 7, rng),
            InstanceNorm2d(c_out),
            ReLU(c_out),
            Conv2d(c_out, c_out, 5, rng),
            InstanceNorm2d(c_out),
            ReLU(c_out),
        )
        self.shortcut = None if c_in == c_out else Sequential(InstanceNorm2d(c_in), Conv2d(c_in, c_out, 1, rng))

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.c_in:
            raise ValueError(f"BasicBlock expects {self.c_in} input channels, got shape {x.shape}")
        skip = x if self.shortcut is None else self.shortcut(x)
        return T.add(skip, self.branch(x))

    def layer_specs(self):
        return self.branch.layer_specs()

    def shortcut_specs(self) -> list[LayerSpec]:
        return [] if self.shortcut is None else self.shortcut.layer_specs()


def build_basic_block(c_in: int, c_out: int, rng: np.random.Generator) -> BasicBlock:
    if c_in < 1 or c_out < 1:
        raise ValueError(f"channel counts must be >= 1, got {c_in}->{c_out}")
    return BasicBlock(c_in, c_out, rng)


def block_forward(bb: BasicBlock, x: Tensor) -> Tensor:
    return bb(x)


class ResidualCNN(Module):
    """Conv7(3->f) -> 3 x [BB(f->f) x 2] -> [BB(f->3), BB(3->3)] -> Conv7(3->3)."""

    def __init__(self, filters: int, rng: np.random.Generator, channels: int = 3):
        self.filters = filters
        self.conv_in = Conv2d(channels, filters, 7, rng)
        self.blocks = [build_basic_block(filters, filters, rng) for _ in range(6)]
        self.blocks += [build_basic_block(filters, channels, rng), build_basic_block(channels, channels, rng)]
        # Table-1 counts imply a 7x7 output conv (441 = 7*7*3*3)
        self.conv_out = Conv2d(channels, channels, 7, rng)

    def forward(self, x):
        x = self.conv_in(x)
        for block in self.blocks:
            x = block(x)
        return self.conv_out(x)

    def layer_specs(self):
        specs = self.conv_in.layer_specs()
        for block in self.blocks:
            specs += block.layer_specs()
        return specs + self.conv_out.layer_specs()

    def rows(self) -> list[tuple[str, int]]:
        """(label, params) rows grouped like the architecture table: BB pairs per row."""
        f, c = self.filters, self.conv_in.in_channels
        out = [(f"Conv({c}->{f})", param_count(self.conv_in))]
        for i in range(0, 8, 2):
            a, b = self.blocks[i], self.blocks[i + 1]
            label = f"BB({a.c_in}->{a.c_out}) x2" if a.c_out == b.c_out == b.c_in else f"BB({a.c_in}->{a.c_out}), BB({b.c_in}->{b.c_out})"
            out.append((label, param_count(a) + param_count(b)))
        out.append((f"Conv({c}->{c})", param_count(self.conv_out)))
        return out


def count_basic_layers(net: Module) -> int:
    """Conv / IN / ReLU units on the main path (shortcut projections excluded)."""
    return sum(1 for s in net.layer_specs() if s.kind in ("Conv7", "Conv5", "Conv1", "InstanceNorm", "ReLU"))
