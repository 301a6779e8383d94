"""Desk-scale deconvolution run: synthetic data, F then G, held-out PSNR."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import DatasetSpec, Pair, make_synthetic_pairs, to_batch
from .golf import GolfModel, export_image, golf_infer
from .metrics import psnr, ssim
from .trainer import TrainConfig, save_model, train_f, train_g, write_loss_csv

log = logging.getLogger(__name__)

TEST_SEED_OFFSET = 1_000_000


@dataclass
class DeskConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    n_test: int = 50
    eval_iters: int = 3
    eval_batch: int = 10


@dataclass
class Evaluation:
    psnr_blur: list[float]
    psnr_traj: list[list[float]]  # [pair][iterate]
    ssim_blur: list[float]
    ssim_last: list[float]

    def mean_psnr(self, i: int) -> float:
        return float(np.mean([row[i] for row in self.psnr_traj]))

    def summary(self) -> dict:
        iters = len(self.psnr_traj[0]) if self.psnr_traj else 0
        return {
            "mean_psnr_blur": float(np.mean(self.psnr_blur)),
            "mean_psnr_traj": [self.mean_psnr(i) for i in range(iters)],
            "mean_ssim_blur": float(np.mean(self.ssim_blur)),
            "mean_ssim_last": float(np.mean(self.ssim_last)),
        }


def evaluate(model: GolfModel, pairs: list[Pair], iters: int = 3, batch: int = 10) -> Evaluation:
    out = Evaluation([], [], [], [])
    with T.no_grad():
        for start in range(0, len(pairs), batch):
            chunk = pairs[start : start + batch]
            traj = golf_infer(model, to_batch([p.blur for p in chunk]), iters)
            images = [export_image(x).transpose(0, 2, 3, 1) for x in traj]
            for j, pair in enumerate(chunk):
                out.psnr_blur.append(psnr(pair.blur, pair.sharp))
                out.ssim_blur.append(ssim(pair.blur, pair.sharp))
                out.psnr_traj.append([psnr(img[j], pair.sharp) for img in images])
                out.ssim_last.append(ssim(images[-1][j], pair.sharp))
    return out


def run_desk(cfg: DeskConfig, out_dir=None) -> dict:
    """Train F then G on synthetic pairs and score x_0..x_iters on held-out pairs."""
    t0 = time.perf_counter()
    spec: DatasetSpec = cfg.train.dataset
    train_pairs = make_synthetic_pairs(spec)
    test_pairs = make_synthetic_pairs(spec, cfg.n_test, seed_offset=TEST_SEED_OFFSET)
    out = Path(out_dir) if out_dir is not None else None

    model = GolfModel(cfg.train.model)
    before = evaluate(model, test_pairs, cfg.eval_iters, cfg.eval_batch)
    model, curve_f = train_f(cfg.train, train_pairs, model, out_dir=out)
    t_f = time.perf_counter() - t0
    after_f = evaluate(model, test_pairs, cfg.eval_iters, cfg.eval_batch)
    log.info("after F: %s", after_f.summary())
    model, curve_g = train_g(cfg.train, model, train_pairs, out_dir=out)
    elapsed = time.perf_counter() - t0
    after_g = evaluate(model, test_pairs, cfg.eval_iters, cfg.eval_batch)
    log.info("after G: %s", after_g.summary())

    k = min(100, len(curve_f))
    result = {
        "config": asdict(cfg),
        "cpu_count": os.cpu_count(),
        "seconds_total": elapsed,
        "seconds_f": t_f,
        "before": before.summary(),
        "after_f": after_f.summary(),
        "after_g": after_g.summary(),
        "f_loss_first100": float(np.mean([r.total for r in curve_f[:k]])) if curve_f else None,
        "f_loss_last100": float(np.mean([r.total for r in curve_f[-k:]])) if curve_f else None,
        "g_loss_first100": float(np.mean([r.total for r in curve_g[:k]])) if curve_g else None,
        "g_loss_last100": float(np.mean([r.total for r in curve_g[-k:]])) if curve_g else None,
        "per_pair": {
            "psnr_blur": after_g.psnr_blur,
            "psnr_traj": after_g.psnr_traj,
        },
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_model(model, out / "model.golf")
        write_loss_csv(curve_f, out / "f_loss.csv")
        write_loss_csv(curve_g, out / "g_loss.csv")
        (out / "result.json").write_text(json.dumps(result, indent=2))
    return result
