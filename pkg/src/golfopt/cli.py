"""Command line: gen-data, train, infer, toy, eval, params.

Exit codes: 0 success, 1 usage, 2 data error, 3 toy acceptance failure.
Settings resolve as flags > ``--config`` file (flat ``key=value``) > defaults,
and every command that writes an output directory dumps the resolved
settings to ``config.txt`` there.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import DataError, DatasetSpec, ingest_pairs, make_synthetic_pairs, to_batch
from .fileio import CheckpointError, PPMFormatError, read_ppm, write_ppm
from .golf import GolfConfig, GolfModel, export_image, golf_infer
from .layers import param_count
from .metrics import QualityReport
from .trainer import TrainConfig, load_model, save_model, train_f, train_g

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ACCEPTANCE = 0, 1, 2, 3

log = logging.getLogger("golfopt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def dump_config(args: argparse.Namespace, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    text = "".join(f"{k}={v}\n" for k, v in sorted(items.items()))
    (out / "config.txt").write_text(text, encoding="utf-8")


# -- commands ----------------------------------------------------------------
def _dataset_spec(args) -> DatasetSpec:
    return DatasetSpec(
        patch=args.patch,
        count=args.count,
        noise_sigma=args.noise,
        seed=args.seed,
    )


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    try:
        (out / "sharp").mkdir(parents=True, exist_ok=True)
        (out / "blur").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from None
    dump_config(args, out)
    pairs = make_synthetic_pairs(_dataset_spec(args))
    with open(out / "manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "file", "kernel", "param", "noise_sigma"])
        for i, pair in enumerate(pairs):
            name = f"{i:05d}.ppm"
            write_ppm(pair.sharp, out / "sharp" / name)
            write_ppm(pair.blur, out / "blur" / name)
            info = pair.info
            param = info.get("sigma", info.get("length"))
            if info["kind"] == "motion":
                param = f"{info['length']}@{info['angle']:.6f}"
            else:
                param = f"{param:.6f}"
            writer.writerow([i, name, info["kind"], param, args.noise])
    digest = hashlib.sha256((out / "manifest.csv").read_bytes()).hexdigest()
    print(f"wrote {len(pairs)} pairs to {out} (manifest sha256 {digest[:16]})")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    horizons = {}
    if args.lr_steps is not None:
        horizons["lr_steps_f" if args.stage == "f" else "lr_steps_g"] = args.lr_steps
    return TrainConfig(
        batch_size=args.batch_size,
        iters_f=args.iters if args.stage == "f" else 0,
        iters_g=args.iters if args.stage == "g" else 0,
        n_unroll=args.n_unroll,
        lam=args.lam,
        lr=args.lr,
        lr_gamma=args.lr_gamma,
        **horizons,
        f_loss=args.f_loss,
        seed=args.seed,
        checkpoint_every=args.checkpoint_every,
        log_every=args.log_every,
        model=GolfConfig(filters_f=args.filters_f, filters_g=args.filters_g, n_train=args.n_unroll, seed=args.seed),
        dataset=_dataset_spec(args),
    )


def cmd_train(args) -> int:
    if args.stage == "g" and not args.f_ckpt:
        raise UsageError("--stage g requires --f-ckpt (a checkpoint produced by --stage f)")
    if args.f_ckpt and not Path(args.f_ckpt).exists():
        raise DataError(f"F checkpoint not found: {args.f_ckpt}")
    if args.resume and not Path(args.resume).exists():
        raise DataError(f"resume checkpoint not found: {args.resume}")
    cfg = _train_config(args)
    out = Path(args.out)
    dump_config(args, out)
    if args.data:
        pairs = ingest_pairs(Path(args.data) / "sharp", Path(args.data) / "blur")
    else:
        pairs = make_synthetic_pairs(cfg.dataset)
    if not pairs:
        raise DataError("dataset is empty")
    if args.stage == "f":
        model = GolfModel(cfg.model)
        model, curve = train_f(cfg, pairs, model, out_dir=out, resume=args.resume)
        save_model(model, out / "model_f.golf")
    else:
        model = load_model(args.f_ckpt)
        model, curve = train_g(cfg, model, pairs, out_dir=out, resume=args.resume)
        save_model(model, out / "model.golf")
    if curve:
        k = min(100, len(curve))
        print(f"stage {args.stage}: {len(curve)} steps, mean loss first {k} {np.mean([r.total for r in curve[:k]]):.6f}, "
              f"last {k} {np.mean([r.total for r in curve[-k:]]):.6f}")
    return EXIT_OK


def _list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"input directory not found: {d}")
    return sorted(d.glob("*.ppm"))


def cmd_infer(args) -> int:
    if not Path(args.ckpt).exists():
        raise DataError(f"checkpoint not found: {args.ckpt}")
    model = load_model(args.ckpt)
    files = _list_images(args.input)
    if not files:
        raise DataError(f"no .ppm images in {args.input}")
    out = Path(args.out)
    dump_config(args, out)
    report = QualityReport()
    timings = []
    for path in files:
        y = read_ppm(path)
        t0 = time.perf_counter()
        with T.no_grad():
            traj = golf_infer(model, to_batch([y]), args.iters)
        ms = (time.perf_counter() - t0) * 1000.0
        timings.append((path.name, ms))
        final = export_image(traj[-1].data[0]).transpose(1, 2, 0)
        write_ppm(final, out / path.name)
        if args.trajectory:
            for i, x in enumerate(traj):
                write_ppm(export_image(x.data[0]).transpose(1, 2, 0), out / f"{path.stem}_x{i}.ppm")
        if args.ref:
            ref_path = Path(args.ref) / path.name
            if not ref_path.exists():
                raise DataError(f"no reference image for {path.name}")
            report.add(path.name, final, read_ppm(ref_path), ms)
    if args.ref:
        report.write_csv(out / "report.csv")
        print(report.table())
    else:
        with open(out / "report.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image", "ms"])
            writer.writerows(timings)
        for name, ms in timings:
            print(f"{name:<24}{ms:>12.2f} ms")
    ms = [t for _, t in timings]
    print(f"run time (ms): max {max(ms):.2f}  min {min(ms):.2f}  mean {np.mean(ms):.2f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    files = _list_images(args.pred)
    report = QualityReport()
    for path in files:
        ref_path = Path(args.ref) / path.name
        if not ref_path.exists():
            raise DataError(f"no reference image for {path.name}")
        report.add(path.name, read_ppm(path), read_ppm(ref_path))
    if args.out:
        report.write_csv(args.out)
    print(report.table())
    return EXIT_OK


def cmd_toy(args) -> int:
    from .toy import ToyConfig, run_toy

    out = Path(args.out)
    dump_config(args, out)
    cfg = ToyConfig(
        n_train=args.n_train,
        iters=args.iters,
        lr=args.lr,
        batch_size=args.batch_size,
        n_test=args.n_test,
        seed=args.seed,
        use_logits=args.use_logits,
        grid=args.grid,
    )
    r = run_toy(cfg, out)
    print(f"classifier accuracy        {r.accuracy:.4f}")
    print(f"classifier-prior MSE       {r.classifier_mse:.6g}")
    print(f"gradient-prior MSE         {r.gradient_mse:.6g}")
    print(f"surface RMS vs analytic    {r.surface_rms:.6g} (blur half-plane {r.surface_rms_blur:.6g})")
    verdict = "PASS" if r.ordering_ok else "FAIL"
    print(f"ordering classifier > 10 x gradient: {verdict}")
    return EXIT_OK if r.ordering_ok else EXIT_ACCEPTANCE


FULL_F, FULL_G = 466_348, 120_188


def cmd_params(args) -> int:
    cfg = GolfConfig.paper_scale() if args.paper_scale else GolfConfig(filters_f=args.filters_f, filters_g=args.filters_g)
    model = GolfModel(cfg)
    for label, net in (("G", model.g), ("F", model.f)):
        print(f"network {label} (filters {net.filters})")
        for row, count in net.rows():
            print(f"  {row:<28}{count:>10,}")
        total = param_count(net)
        print(f"  {'total':<28}{total:>10,}   {total * 4 / 2**20:.2f} MiB as float32")
    if args.paper_scale:
        f_total, g_total = model.param_counts()
        ok = f_total == FULL_F and g_total == FULL_G
        print(f"reference totals F={FULL_F:,} G={FULL_G:,}: {'match' if ok else 'MISMATCH'}")
        if not ok:
            return EXIT_ACCEPTANCE
    return EXIT_OK


# -- parser ------------------------------------------------------------------
def _add_data_flags(p):
    p.add_argument("--count", type=int, default=500, help="synthetic pairs to generate (default: %(default)s)")
    p.add_argument("--patch", type=int, default=64, help="patch size in pixels (default: %(default)s)")
    p.add_argument("--noise", type=float, default=0.01, help="Gaussian noise sigma (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="golfopt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text,
                           formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.add_argument("--config", default=None, help="flat key=value settings file")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "write paired sharp/blur PPMs and a manifest")
    p.add_argument("--out", required=True, help="output directory")
    _add_data_flags(p)

    p = command("train", cmd_train, "train F (--stage f) or G with F frozen (--stage g)")
    p.add_argument("--stage", choices=("f", "g"), required=True, help="training phase")
    p.add_argument("--out", required=True, help="output directory for checkpoints and loss CSV")
    p.add_argument("--data", default=None, help="gen-data directory; synthetic data is generated if omitted")
    p.add_argument("--f-ckpt", default=None, help="F checkpoint (required for --stage g)")
    p.add_argument("--resume", default=None, help="training checkpoint to continue from")
    p.add_argument("--iters", type=int, default=5000, help="training iterations")
    p.add_argument("--batch-size", type=int, default=4, help="mini-batch size")
    p.add_argument("--n-unroll", type=int, default=5, help="G applications unrolled in training (N)")
    p.add_argument("--lambda", dest="lam", type=float, default=5e-6, help="perceptual loss weight")
    p.add_argument("--lr", type=float, default=1e-3, help="initial Adam learning rate")
    p.add_argument("--lr-gamma", type=float, default=0.3, help="decay base; lr falls to lr * gamma**11")
    p.add_argument(
        "--lr-steps", type=int, default=None,
        help="steps over which lr decays by gamma^11; 0 = --iters (default: 500000 for f, 200000 for g)",
    )
    p.add_argument("--f-loss", choices=("overall", "mse"), default="overall", help="loss used for F")
    p.add_argument("--filters-f", type=int, default=8, help="F width")
    p.add_argument("--filters-g", type=int, default=8, help="G width")
    p.add_argument("--checkpoint-every", type=int, default=500, help="steps between checkpoints (0 = off)")
    p.add_argument("--log-every", type=int, default=100, help="steps between progress lines")
    _add_data_flags(p)

    p = command("infer", cmd_infer, "restore images with a trained model")
    p.add_argument("--ckpt", required=True, help="model checkpoint")
    p.add_argument("--input", required=True, help="directory of blurry .ppm images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ref", default=None, help="directory of sharp references with matching names")
    p.add_argument("--iters", type=int, default=3, help="G iterations at test time")
    p.add_argument("--trajectory", action="store_true", help="also write every iterate x_0..x_N")

    p = command("toy", cmd_toy, "two-pixel prior experiment (classifier prior vs gradient prior)")
    p.add_argument("--out", required=True, help="output directory for CSV/SVG artifacts")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--n-train", type=int, default=16_000, help="training samples")
    p.add_argument("--iters", type=int, default=4_000, help="Adam iterations")
    p.add_argument("--lr", type=float, default=1e-3, help="learning rate")
    p.add_argument("--batch-size", type=int, default=4, help="mini-batch size")
    p.add_argument("--n-test", type=int, default=1_000, help="test pairs")
    p.add_argument("--grid", type=int, default=101, help="surface grid resolution")
    p.add_argument("--use-logits", action="store_true", help="use the classifier logit instead of its probability")

    p = command("eval", cmd_eval, "score restored images against references")
    p.add_argument("--pred", required=True, help="directory of restored .ppm images")
    p.add_argument("--ref", required=True, help="directory of references with matching names")
    p.add_argument("--out", default=None, help="CSV report path")

    p = command("params", cmd_params, "print the parameter table of F and G")
    p.add_argument("--paper-scale", action="store_true", help="use widths 32 (F) and 16 (G) and check the totals")
    p.add_argument("--filters-f", type=int, default=8, help="F width")
    p.add_argument("--filters-g", type=int, default=8, help="G width")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    settings = read_config_file(known.config)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for subparser in sub_action.choices.values():
        defaults = {}
        for action in subparser._actions:
            keys = {action.dest} | {o.lstrip("-").replace("-", "_") for o in action.option_strings}
            key = next((k for k in keys if k in settings), None)
            if key is None or action.dest in ("help", "config"):
                continue
            raw = settings[key]
            if isinstance(action, argparse._StoreTrueAction):
                defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
            else:
                defaults[action.dest] = action.type(raw) if action.type else raw
                action.required = False
        subparser.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
    except (UsageError, OSError, ValueError) as exc:
        print(f"golfopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"golfopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PPMFormatError, CheckpointError) as exc:
        print(f"golfopt: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
