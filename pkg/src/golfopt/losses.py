"""Content, perceptual and combined training losses.

The perceptual term uses a frozen random conv stack instead of pretrained
VGG features: 5 stages of Conv3 -> ReLU -> 2x2 average pool with channels
3 -> 8 -> 16 -> 32 -> 64 -> 64, weights drawn once from a fixed seed.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

DEFAULT_LAMBDA = 5e-6
EXTRACTOR_CHANNELS = (3, 8, 16, 32, 64, 64)
EXTRACTOR_SEED = 20190501


class FeatureExtractor:
    """Pooling stops once a spatial extent drops below 2, so small inputs work too."""

    def __init__(self, seed: int = EXTRACTOR_SEED, channels=EXTRACTOR_CHANNELS):
        rng = np.random.default_rng(seed)
        weights = []
        for c_in, c_out in zip(channels[:-1], channels[1:]):
            w = rng.normal(0.0, np.sqrt(2.0 / (9 * c_in)), size=(c_out, c_in, 3, 3))
            w.setflags(write=False)
            weights.append(w)
        self._weights = tuple(weights)

    @property
    def weights(self) -> tuple[np.ndarray, ...]:
        return self._weights

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        for weight in self._weights:
            x = T.relu(T.conv2d(x, Tensor(weight), pad=1))
            if min(x.shape[2:]) >= 2:
                x = T.avg_pool2d(x, 2)
        return x


_default_extractor: FeatureExtractor | None = None


def default_extractor() -> FeatureExtractor:
    global _default_extractor
    if _default_extractor is None:
        _default_extractor = FeatureExtractor()
    return _default_extractor


def content_loss(x, target) -> Tensor:
    """Mean squared error over every pixel-channel entry."""
    return T.mse(x, target)


def perceptual_loss(extractor: FeatureExtractor, x, target, target_features: np.ndarray | None = None) -> Tensor:
    """Mean squared feature difference; gradients flow through ``x`` only."""
    x, target = T.as_tensor(x), T.as_tensor(target)
    if x.shape != target.shape:
        raise ValueError(f"perceptual_loss shape mismatch: {x.shape} vs {target.shape}")
    if target_features is None:
        with T.no_grad():
            target_features = extractor(target.data).data
    return T.mse(extractor(x), target_features)


def overall_loss(
    x,
    target,
    lam: float = DEFAULT_LAMBDA,
    extractor: FeatureExtractor | None = None,
    target_features: np.ndarray | None = None,
    parts: dict | None = None,
) -> Tensor:
    """``content + lam * perceptual``; the perceptual term is skipped when ``lam == 0``.

    If ``parts`` is given it receives the float values of both terms.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    lc = content_loss(x, target)
    if parts is not None:
        parts["content"] = lc.item()
        parts["perceptual"] = 0.0
    if lam == 0:
        return lc
    lp = perceptual_loss(extractor or default_extractor(), x, target, target_features)
    if parts is not None:
        parts["perceptual"] = lp.item()
    return T.add(lc, T.mul(lp, lam))
