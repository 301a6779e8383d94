"""Two-phase training: F on (blur -> sharp), then G on F's frozen output.

G's objective averages the loss over all N unrolled, weight-shared applications:

    L_G = (1/N) * sum_i overall_loss(G^(i)(F(y)), sharp)

and is back-propagated through the whole unroll.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import DataError, DatasetSpec, Pair, load_dataset, sample_batch
from .fileio import load_checkpoint, save_checkpoint
from .golf import GolfConfig, GolfModel, forward_f, forward_g
from .losses import DEFAULT_LAMBDA, FeatureExtractor, content_loss, default_extractor, overall_loss
from .optim import AdamState, adam_step, lr_at

log = logging.getLogger(__name__)

PHASE_IDS = {"f": 1, "g": 2}


class TrainingDivergedError(RuntimeError):
    def __init__(self, phase: str, step: int, value: float):
        super().__init__(f"non-finite loss {value} in phase {phase} at step {step}")
        self.phase, self.step = phase, step


@dataclass
class TrainConfig:
    batch_size: int = 4
    iters_f: int = 5000
    iters_g: int = 5000
    n_unroll: int = 5
    lam: float = DEFAULT_LAMBDA
    lr: float = 1e-3
    lr_gamma: float = 0.3
    lr_decades: float = 11.0
    # decay horizons; the schedule is laid out over the full-length reference
    # runs, so a desk run sees only its start. 0 means the phase length.
    lr_steps_f: int = 500_000
    lr_steps_g: int = 200_000
    f_loss: str = "overall"  # "mse" drops the perceptual term for F
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 100
    model: GolfConfig = field(default_factory=GolfConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)

    def __post_init__(self):
        if self.n_unroll < 1:
            raise ValueError(f"n_unroll must be >= 1, got {self.n_unroll}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.f_loss not in ("overall", "mse"):
            raise ValueError(f"f_loss must be 'overall' or 'mse', got {self.f_loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        d["model"] = GolfConfig(**d.get("model", {}))
        d["dataset"] = DatasetSpec.from_dict(d.get("dataset", {}))
        return cls(**d)


@dataclass
class LossRecord:
    step: int
    lr: float
    content: float
    perceptual: float
    total: float


def write_loss_csv(curve: list[LossRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "L_c", "L_p", "L"])
        for r in curve:
            writer.writerow([r.step, repr(r.lr), repr(r.content), repr(r.perceptual), repr(r.total)])


def _f_objective(model: GolfModel, blur, sharp, cfg: TrainConfig, extractor, feats):
    parts: dict = {}
    x0 = forward_f(model, T.Tensor(blur))
    if cfg.f_loss == "mse":
        loss = content_loss(x0, sharp)
        parts = {"content": loss.item(), "perceptual": 0.0}
    else:
        loss = overall_loss(x0, sharp, cfg.lam, extractor, feats, parts)
    return loss, parts


def _g_objective(model: GolfModel, blur, sharp, cfg: TrainConfig, extractor, feats):
    with T.no_grad():
        x = forward_f(model, blur)
    x = T.Tensor(x.data)
    total = None
    sums = {"content": 0.0, "perceptual": 0.0}
    for _ in range(cfg.n_unroll):
        x = forward_g(model, x)
        parts: dict = {}
        li = overall_loss(x, sharp, cfg.lam, extractor, feats, parts)
        total = li if total is None else T.add(total, li)
        for key in sums:
            sums[key] += parts[key] / cfg.n_unroll
    return T.mul(total, 1.0 / cfg.n_unroll), sums


def _save_state(path, phase: str, step: int, model: GolfModel, adam: AdamState, rng, cfg: TrainConfig, curve) -> None:
    arrays = {name: p.data for name, p in model.state().items()}
    arrays.update(adam.arrays())
    meta = {
        "train": {
            "phase": phase,
            "step": step,
            "config": cfg.to_dict(),
            "rng": rng.bit_generator.state,
            "curve": [asdict(r) for r in curve],
        },
        "adam": adam.meta(),
        "golf": model.config.to_dict(),
    }
    save_checkpoint(path, arrays, meta)


def save_model(model: GolfModel, path) -> None:
    save_checkpoint(path, {n: p.data for n, p in model.state().items()}, {"golf": model.config.to_dict()})


def load_model(path) -> GolfModel:
    arrays, meta = load_checkpoint(path)
    model = GolfModel(GolfConfig(**meta["golf"]))
    model.load_state(arrays)
    return model


def _run_phase(
    phase: str,
    cfg: TrainConfig,
    model: GolfModel,
    pairs: list[Pair],
    out_dir,
    resume,
    stop_after: int | None,
    extractor: FeatureExtractor | None,
):
    total = cfg.iters_f if phase == "f" else cfg.iters_g
    net = model.f if phase == "f" else model.g
    params = net.parameters()
    objective = _f_objective if phase == "f" else _g_objective
    extractor = extractor or default_extractor()

    if resume is not None:
        arrays, meta = load_checkpoint(resume)
        if meta["train"]["phase"] != phase:
            raise ValueError(f"checkpoint {resume} is from phase {meta['train']['phase']!r}, not {phase!r}")
        model.load_state(arrays)
        adam = AdamState.restore(meta["adam"], arrays)
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["train"]["rng"]
        start = meta["train"]["step"]
        curve = [LossRecord(**r) for r in meta["train"]["curve"]]
    else:
        adam = AdamState(lr=cfg.lr)
        rng = np.random.default_rng([cfg.seed, PHASE_IDS[phase]])
        start, curve = 0, []

    if not pairs:
        raise DataError("dataset is empty")

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    model.f.requires_grad_(phase == "f")
    model.g.requires_grad_(phase == "g")
    end = total if stop_after is None else min(total, stop_after)
    patch = cfg.dataset.patch
    for step in range(start, end):
        blur, sharp = sample_batch(pairs, cfg.batch_size, patch, rng)
        feats = None
        if cfg.lam > 0 and not (phase == "f" and cfg.f_loss == "mse"):
            with T.no_grad():
                feats = extractor(sharp).data
        horizon = (cfg.lr_steps_f if phase == "f" else cfg.lr_steps_g) or total
        adam.lr = lr_at(min(step, horizon), horizon, cfg.lr, cfg.lr_gamma, cfg.lr_decades)
        net.zero_grad()
        loss, parts = objective(model, blur, sharp, cfg, extractor, feats)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(phase, step, value)
        T.backward(loss)
        if phase == "g":
            stray = [n for n, p in model.f_params.items() if p.grad is not None]
            assert not stray, f"frozen F received gradients: {stray[:3]}"
        adam_step(adam, params)
        curve.append(LossRecord(step, adam.lr, parts["content"], parts["perceptual"], value))
        if cfg.log_every and (step + 1) % cfg.log_every == 0:
            window = curve[-cfg.log_every :]
            log.info(
                "%s step %d/%d  L=%.5f  L_c=%.5f  L_p=%.4g  lr=%.3g",
                phase, step + 1, total,
                np.mean([r.total for r in window]),
                np.mean([r.content for r in window]),
                np.mean([r.perceptual for r in window]),
                adam.lr,
            )
        if out is not None and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            _save_state(out / f"{phase}_step{step + 1:06d}.golf", phase, step + 1, model, adam, rng, cfg, curve)

    net.zero_grad()
    model.f.requires_grad_(True)
    model.g.requires_grad_(True)
    if out is not None:
        _save_state(out / f"{phase}_last.golf", phase, end, model, adam, rng, cfg, curve)
        write_loss_csv(curve, out / f"{phase}_loss.csv")
    return model, curve


def train_f(
    cfg: TrainConfig,
    pairs: list[Pair] | None = None,
    model: GolfModel | None = None,
    out_dir=None,
    resume=None,
    stop_after: int | None = None,
    extractor: FeatureExtractor | None = None,
) -> tuple[GolfModel, list[LossRecord]]:
    """Fit F by Adam on overall_loss(F(blur), sharp) (or plain MSE with ``f_loss='mse'``)."""
    pairs = load_dataset(cfg.dataset) if pairs is None else pairs
    model = model or GolfModel(cfg.model)
    return _run_phase("f", cfg, model, pairs, out_dir, resume, stop_after, extractor)


def train_g(
    cfg: TrainConfig,
    frozen_f: GolfModel,
    pairs: list[Pair] | None = None,
    out_dir=None,
    resume=None,
    stop_after: int | None = None,
    extractor: FeatureExtractor | None = None,
) -> tuple[GolfModel, list[LossRecord]]:
    """Fit G on the unrolled objective with F's parameters frozen."""
    pairs = load_dataset(cfg.dataset) if pairs is None else pairs
    return _run_phase("g", cfg, frozen_f, pairs, out_dir, resume, stop_after, extractor)
