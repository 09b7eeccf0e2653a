"""Command-line entry point: ``gas train|apply|bench|gradcheck|eval``.

Exit codes: 0 success, 1 usage or I/O error, 2 numerical failure (training
halted on a non-finite loss, gradient check over threshold).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import kvfile
from .errors import GasError, TrainingHalted

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2

log = logging.getLogger("gas")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; here 2 means a numerical failure
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _train_flags(p):
    from .trainer import TrainConfig

    d = TrainConfig()
    p.add_argument("--source", required=True, metavar="DIR", help="folder of source PNG renders")
    p.add_argument("--target", required=True, metavar="DIR", help="folder of target PNG photographs")
    p.add_argument("--out", required=True, metavar="FILE", help="where to write the final parameter file")
    p.add_argument("--run-dir", metavar="DIR", help="metrics, checkpoints and report (default: <out>.run)")
    p.add_argument("--config", metavar="FILE", help="key = value training config; flags override it (default: none)")
    p.add_argument("--init", metavar="FILE", help="start from this parameter file (default: identity init)")
    # None means "not given", so a config file value is not clobbered
    for flag, typ, default, text in (
        ("--steps", _nonneg_int, d.steps, "training steps"),
        ("--crop", _positive_int, d.crop, "random crop size in pixels"),
        ("--edge-crop", _nonneg_int, d.edge_crop, "pixels trimmed from every side before the discriminator"),
        ("--batch", _positive_int, d.batch, "crops per batch"),
        ("--lr-g", float, d.lr_g, "pipeline learning rate"),
        ("--lr-d", float, d.lr_d, "discriminator learning rate"),
        ("--lr-decay-from", float, d.lr_decay_from, "fraction of steps after which both rates fall linearly to 0"),
        ("--ema-decay", float, d.ema_decay, "running average of the pipeline parameters, 0 disables"),
        ("--instance-noise-start", float, d.instance_noise_start, "instance noise sigma at step 0"),
        ("--instance-noise-end", float, d.instance_noise_end, "instance noise sigma at the last step"),
        ("--checkpoint-every", _nonneg_int, d.checkpoint_every, "steps between checkpoints, 0 disables"),
        ("--plateau-window", _nonneg_int, d.plateau_window, "early-stop window in steps, 0 disables"),
        ("--gamma", float, d.gamma, "display gamma"),
    ):
        p.add_argument(flag, type=typ, default=None, help=f"{text} (default: {default})")
    p.add_argument("--freeze", default=None, metavar="STAGES",
                   help="comma list of stages kept at init: lens,color,bloom,noise (default: none)")
    p.add_argument("--disc-channels", default=None, metavar="N,N,N",
                   help=f"discriminator widths (default: {','.join(map(str, d.disc_channels))})")
    p.add_argument("--resume", action="store_true", help="continue from the run directory checkpoint (default: off)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gas", description="Train and apply adversarially tuned camera shaders.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr (default: off)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("train", help="adversarial training of the pipeline")
    _train_flags(p)
    p.add_argument("--seed", type=int, default=None, help="seed for crops, noise and init (default: 0)")

    p = sub.add_parser("apply", help="run trained parameters over one image")
    p.add_argument("--params", required=True, metavar="FILE", help="parameter file")
    p.add_argument("--input", required=True, metavar="IMG", help="input PNG")
    p.add_argument("--output", required=True, metavar="IMG", help="output PNG")
    p.add_argument("--frame", type=_nonneg_int, default=0, help="frame index for the noise field (default: 0)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--no-noise", action="store_true", help="skip the sensor noise stage (default: off)")
    p.add_argument("--lut", action="store_true", help="table lookup for the inverse gamma (default: off)")

    p = sub.add_parser("bench", help="time the fused path against the reference path")
    p.add_argument("--params", metavar="FILE", help="parameter file (default: identity init)")
    p.add_argument("--width", type=_positive_int, default=1920, help="frame width (default: 1920)")
    p.add_argument("--height", type=_positive_int, default=1080, help="frame height (default: 1080)")
    p.add_argument("--frames", type=int, default=10, help="timed fused frames, at least 10 (default: 10)")
    p.add_argument("--ref-frames", type=_nonneg_int, default=3, help="timed reference frames, 0 skips (default: 3)")
    p.add_argument("--lut", action="store_true", help="table lookup for the inverse gamma (default: off)")
    p.add_argument("--seed", type=int, default=0, help="seed for the synthetic frame and noise (default: 0)")
    p.add_argument("--report", metavar="DIR", help="write bench.txt and bench.png here (default: none)")

    p = sub.add_parser("gradcheck", help="finite-difference check of all 42 pipeline gradients")
    p.add_argument("--params", metavar="FILE", help="parameter file (default: identity init)")
    p.add_argument("--random-params", action="store_true",
                   help="check at a seeded random parameter point instead (default: off)")
    p.add_argument("--size", type=_positive_int, default=16, help="random test image size, at most 64 (default: 16)")
    p.add_argument("--step", type=float, default=2e-3, help="central difference step (default: 0.002)")
    p.add_argument("--threshold", type=float, default=1e-3, help="max relative error (default: 0.001)")
    p.add_argument("--seed", type=int, default=0, help="seed for image, projection and noise (default: 0)")
    p.add_argument("--report", metavar="DIR", help="write gradcheck.txt and gradcheck.png here (default: none)")

    p = sub.add_parser("eval", help="histogram distances to a target set")
    p.add_argument("--params", metavar="FILE", help="parameter file (default: identity init)")
    p.add_argument("--source", required=True, metavar="DIR", help="folder of source PNGs")
    p.add_argument("--target", required=True, metavar="DIR", help="folder of target PNGs")
    p.add_argument("--no-noise", action="store_true", help="skip the sensor noise stage (default: off)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--report", metavar="DIR", help="write eval.txt and histogram figures here (default: none)")
    return parser


def _params_or_init(path):
    from .pipeline import PipelineParams, load_params

    return load_params(path) if path else PipelineParams()


# --- subcommands --------------------------------------------------------------


def cmd_train(args) -> int:
    from .pipeline import load_params, save_params
    from .trainer import TrainConfig, config_from_mapping, config_items, train

    cfg = config_from_mapping(kvfile.read(args.config)) if args.config else TrainConfig()
    run_dir = Path(args.run_dir) if args.run_dir else Path(str(args.out) + ".run")
    cfg.source_dir, cfg.target_dir, cfg.out_dir = args.source, args.target, str(run_dir)
    for name in ("steps", "crop", "edge_crop", "batch", "lr_g", "lr_d", "lr_decay_from", "ema_decay",
                 "instance_noise_start", "instance_noise_end", "checkpoint_every", "plateau_window", "gamma", "seed"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    if args.freeze is not None:
        cfg.freeze = tuple(s for s in args.freeze.replace(",", " ").split())
    if args.disc_channels is not None:
        cfg.disc_channels = tuple(int(s) for s in args.disc_channels.replace(",", " ").split())
    cfg.resume = cfg.resume or args.resume
    init = load_params(args.init) if args.init else None

    run_dir.mkdir(parents=True, exist_ok=True)
    kvfile.write(run_dir / "config.txt", config_items(cfg))
    try:
        result = train(cfg, init=init)
    except TrainingHalted as exc:
        print(f"training halted: {exc} (checkpoint in {exc.checkpoint})", file=sys.stderr)
        return EXIT_NUMERIC
    save_params(result.params, args.out)
    if result.metrics:
        from .plotting import plot_losses

        plot_losses(result.metrics, run_dir / "losses.png")
    last = result.metrics[-1] if result.metrics else None
    print(f"steps = {result.steps_run}")
    print(f"stopped_early = {'true' if result.stopped_early else 'false'}")
    if last:
        print(f"loss_d = {last['loss_d']:.6g}")
        print(f"loss_g = {last['loss_g']:.6g}")
    print(f"params = {args.out}")
    return EXIT_OK


def cmd_apply(args) -> int:
    from .deploy import compile_pipeline, run_frame
    from .image import load_png, save_png

    params = _params_or_init(args.params)
    img = load_png(args.input)
    cp = compile_pipeline(params, use_lut=args.lut)
    out = run_frame(cp, img.data, args.frame, args.seed, noise=not args.no_noise)
    save_png(out, args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .deploy import bench, compile_pipeline, format_bench

    if args.frames < 10:
        raise UsageError("--frames must be at least 10")
    params = _params_or_init(args.params)
    cp = compile_pipeline(params, use_lut=args.lut)
    stats = bench(cp, args.width, args.height, args.frames,
                  params=params if args.ref_frames else None, ref_frames=args.ref_frames, seed=args.seed)
    text = format_bench([stats])
    sys.stdout.write(text)
    if args.report:
        from .plotting import plot_bench

        report = Path(args.report)
        report.mkdir(parents=True, exist_ok=True)
        (report / "bench.txt").write_text(text, encoding="utf-8")
        plot_bench([stats], report / "bench.png")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .evalkit import gradcheck, random_image, random_params

    if args.size > 64:
        raise UsageError("--size must be at most 64")
    params = random_params(args.seed) if args.random_params else _params_or_init(args.params)
    report = gradcheck(params, random_image(args.seed, args.size), seed=args.seed, h=args.step,
                       threshold=args.threshold)
    lines = report.lines()
    name, worst = report.worst
    lines += [f"worst = {name} {worst:.3e}", f"passed = {'true' if report.passed else 'false'}"]
    for bad in report.failures:
        lines.append(f"failed = {bad}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.report:
        from .plotting import plot_gradcheck

        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.txt").write_text(text, encoding="utf-8")
        plot_gradcheck(report, out / "gradcheck.png")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_eval(args) -> int:
    from .evalkit import color_histograms, compare_sets, enhance, gradient_histograms, load_image_dir

    params = _params_or_init(args.params)
    source, target = load_image_dir(args.source), load_image_dir(args.target)
    enhanced = enhance(params, source, args.seed, noise=not args.no_noise)
    metrics = compare_sets(source, enhanced, target)
    text = metrics.table() + kvfile.dumps(metrics.items())
    sys.stdout.write(text)
    if args.report:
        from .plotting import plot_histograms

        out = Path(args.report)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.txt").write_text(text, encoding="utf-8")
        for fn, name in ((color_histograms, "color"), (gradient_histograms, "gradient")):
            sets = {"source": fn(source), "enhanced": fn(enhanced), "target": fn(target)}
            plot_histograms(sets, out / f"{name}_hist.png", title=f"{name} histograms")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "apply": cmd_apply,
    "bench": cmd_bench,
    "gradcheck": cmd_gradcheck,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .threads import configure_threads

    configure_threads()
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gas {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, GasError, ValueError) as exc:
        print(f"gas {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
