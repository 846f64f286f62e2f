"""``awgan`` command-line entry point.

Configuration comes from an optional INI file (``--config``) whose sections
mirror the option groups below, overlaid by command-line flags. Every run
writes into its own directory under the output root (``--out-dir``, the
``[output] dir`` key, ``$AWGAN_OUTPUT_ROOT``, or ``./runs``).

Exit codes: 0 success, 1 run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import diagnostics, verify
from .awweights import AwConfig
from .nn import save_checkpoint
from .trainer import MODES, TrainConfig, run_summary, train, write_records_csv

OUTPUT_ENV = "AWGAN_OUTPUT_ROOT"
TASKS = {"ring8": 8}
DEFAULT_ALPHA1S = (0.4, 0.5, 0.6)
DEFAULT_ALPHA2S = (0.65, 0.75, 0.85)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    pass


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_pair(text: str) -> tuple[float, float] | None:
    if text.strip().lower() in ("", "none"):
        return None
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {text!r}")
    return parts[0], parts[1]


def _parse_task(text: str) -> str:
    if text not in TASKS:
        raise ValueError(f"unknown task {text!r} (known: {', '.join(TASKS)})")
    return text


_TRAIN_DEFAULTS = TrainConfig()
_AW_DEFAULTS = AwConfig()


@dataclasses.dataclass(frozen=True)
class Option:
    section: str
    key: str
    parse: object
    default: object
    help: str


def _opt(section: str, key: str, parse, help: str, default=None) -> Option:
    if default is None:
        source = _AW_DEFAULTS if section == "aw" else _TRAIN_DEFAULTS
        default = getattr(source, key, None)
    return Option(section, key, parse, default, help)


OPTIONS = [
    _opt("train", "mode", str, f"weighting mode, one of {', '.join(MODES)}"),
    _opt("train", "loss", str, "discriminator loss family (bce | hinge)"),
    _opt("train", "generator_loss", str, "generator loss (bce-nonsaturating | hinge)"),
    _opt("train", "pin_weights", _parse_pair, "fixed (w_r,w_f) replacing the adaptive selection, e.g. 1,1"),
    _opt("train", "iterations", int, "generator iterations"),
    _opt("train", "batch_size", int, "minibatch size for real, fake and latent batches"),
    _opt("train", "latent_dim", int, "generator latent dimension"),
    _opt("train", "hidden", int, "hidden width of both networks"),
    _opt("train", "d_steps", int, "discriminator steps per generator step"),
    _opt("train", "seed", int, "run seed"),
    _opt("train", "steps_per_epoch", int, "discriminator steps counted as one epoch"),
    _opt("train", "zero_init_disc_output", _parse_bool, "zero the discriminator's output layer at init"),
    _opt("optim", "optimizer", str, "adam | sgd"),
    _opt("optim", "d_lr", float, "discriminator learning rate"),
    _opt("optim", "g_lr", float, "generator learning rate"),
    _opt("optim", "beta1", float, "Adam beta1"),
    _opt("optim", "beta2", float, "Adam beta2"),
    _opt("optim", "adam_eps", float, "Adam numerical-stability constant"),
    _opt("optim", "lr_decay", str, "constant | linear"),
    _opt("aw", "alpha1", float, "lower real-score threshold"),
    _opt("aw", "alpha2", float, "upper real-score threshold"),
    _opt("aw", "epsilon", float, "constant added to both weights"),
    _opt("aw", "delta", float, "score margin between real and fake"),
    _opt("data", "task", _parse_task, "synthetic task", default="ring8"),
    _opt("data", "radius", float, "ring radius"),
    _opt("data", "std", float, "per-mode standard deviation"),
    Option("output", "dir", str, None, f"output root (default: ${OUTPUT_ENV} or ./runs)"),
]
_BY_KEY = {(o.section, o.key): o for o in OPTIONS}
_SECTIONS = sorted({o.section for o in OPTIONS})


def _flag(o: Option) -> str:
    name = "out-dir" if o.section == "output" else o.key.replace("_", "-")
    return f"--{name}"


def _dest(o: Option) -> str:
    return f"cfg__{o.section}__{o.key}"


def _fmt_default(value) -> str:
    if isinstance(value, tuple):
        return ",".join(f"{v:g}" for v in value)
    return "none" if value is None else str(value)


def _add_config_options(parser: argparse.ArgumentParser, skip=()) -> None:
    parser.add_argument("--config", metavar="FILE", help="INI file; sections: " + ", ".join(_SECTIONS))
    for section in _SECTIONS:
        group = parser.add_argument_group(f"[{section}] options")
        for o in OPTIONS:
            if o.section != section or (o.section, o.key) in skip:
                continue
            shown = "" if o.section == "output" else f" (default: {_fmt_default(o.default)})"
            group.add_argument(_flag(o), dest=_dest(o), default=argparse.SUPPRESS, metavar=o.key.upper(),
                               help=o.help + shown)


def read_config_file(path) -> dict[tuple[str, str], object]:
    """Parse an INI file into ``{(section, key): value}``; unknown keys are rejected."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise UsageError(f"{path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            opt = _BY_KEY.get((section, key))
            if opt is None:
                raise UsageError(f"{path}: unknown key {key!r} in [{section}]")
            try:
                out[(section, key)] = opt.parse(raw)
            except ValueError as exc:
                raise UsageError(f"{path}: [{section}] {key}: {exc}") from exc
    return out


def resolve_options(args: argparse.Namespace) -> dict[tuple[str, str], object]:
    values = {(o.section, o.key): o.default for o in OPTIONS}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for o in OPTIONS:
        raw = getattr(args, _dest(o), None)
        if raw is not None:
            try:
                values[(o.section, o.key)] = o.parse(raw)
            except ValueError as exc:
                raise UsageError(f"{_flag(o)}: {exc}") from exc
    return values


def build_train_config(values: dict) -> TrainConfig:
    aw = {k: v for (s, k), v in values.items() if s == "aw"}
    kw = {k: v for (s, k), v in values.items() if s in ("train", "optim", "data") and k != "task"}
    kw["n_modes"] = TASKS[values[("data", "task")]]
    try:
        aw_cfg = AwConfig(**aw, normalized=kw["mode"] != "aw-nonnormalized")
        return TrainConfig(aw=aw_cfg, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def write_config_snapshot(values: dict, path: Path) -> Path:
    parser = configparser.ConfigParser(interpolation=None)
    for section in _SECTIONS:
        if section == "output":
            continue
        parser[section] = {k: _fmt_default(v) if not isinstance(v, float) else repr(v)
                           for (s, k), v in values.items() if s == section}
    with path.open("w") as fh:
        parser.write(fh)
    return path


def output_root(values: dict) -> Path:
    explicit = values.get(("output", "dir"))
    return Path(explicit or os.environ.get(OUTPUT_ENV) or "runs")


def run_dir(values: dict, *parts: str) -> Path:
    cfg_mode = values[("train", "mode")]
    if values[("train", "pin_weights")] is not None:
        cfg_mode += "-pinned"
    name = "-".join([*parts, cfg_mode, f"seed{values[('train', 'seed')]}"])
    path = output_root(values) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- subcommands ---------------------------------------------------------------------


def cmd_train(args) -> int:
    values = resolve_options(args)
    cfg = build_train_config(values)
    out = run_dir(values, "train", values[("data", "task")])
    write_config_snapshot(values, out / "config.ini")
    run = train(cfg)
    if run.records:
        write_records_csv(run.records, out / "steps.csv")
    save_checkpoint(run.generator, out / "generator.json")
    save_checkpoint(run.discriminator, out / "discriminator.json")
    summary = run_summary(run)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{out}: coverage={summary['coverage']}/{cfg.n_modes} L_r={summary['L_r']:.4f} "
          f"L_f={summary['L_f']:.4f} g_loss={summary['g_loss']:.4f}")
    return EXIT_OK


def _parse_int_list(text: str) -> list[int]:
    try:
        out = [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc
    if not out or any(v < 1 for v in out):
        raise UsageError(f"bad integer list {text!r}")
    return out


def _parse_float_list(text: str) -> list[float]:
    try:
        out = [float(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc
    if not out:
        raise UsageError("empty list")
    return out


def cmd_verify(args) -> int:
    dims = _parse_int_list(args.dims)
    results = verify.run_all(dims=dims, pairs=args.pairs, epsilon=args.epsilon)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} suites passed")
    return EXIT_FAILURE if failed else EXIT_OK


def _parse_window(text: str) -> tuple[int, int]:
    try:
        start, stop = (int(p) for p in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"--window expects START:STOP, got {text!r}") from exc
    return start, stop


def cmd_diagnose(args) -> int:
    values = resolve_options(args)
    if args.iters is not None:
        values[("train", "iterations")] = args.iters
    study = args.study
    if study == "angles":
        start, stop = _parse_window(args.window)
        if args.iters is None:
            # Only the window is analysed; train just far enough to cover it.
            d_steps = values[("train", "d_steps")]
            values[("train", "iterations")] = -(-stop // d_steps)
    cfg = build_train_config(values)
    out = run_dir(values, "diagnose", study)
    write_config_snapshot(values, out / "config.ini")
    if study == "angles":
        trace = diagnostics.angle_trace(train(cfg), (start, stop))
        diagnostics.export_csv(trace, out / "angles.csv")
        diagnostics.export_svg(trace.figure(), out / "angles.svg")
        fr = trace.fraction_obtuse()
        print(f"{out}: {len(trace.iterations)} iterations, obtuse fraction "
              + " ".join(f"{k}={v:.3f}" for k, v in fr.items()))
    elif study == "scoregap":
        table = diagnostics.score_gap_study(cfg, args.epochs)
        diagnostics.export_csv(table, out / "scoregap.csv")
        diagnostics.export_svg(table.figure(), out / "scoregap.svg")
        means = table.epoch_means()[-1]
        print(f"{out}: epoch {args.epochs} means real_plain={means['real_plain']:.4f} real_aw={means['real_aw']:.4f} "
              f"gap_plain={means['gaot']:.4f} gap_aw={means['gaawt']:.4f}")
    else:
        panel, _ = diagnostics.mode_panel(cfg, args.checkpoint_every)
        diagnostics.export_csv(panel, out / "modes.csv")
        diagnostics.export_svg(panel.figure(), out / "modes.svg")
        print(f"{out}: coverage by checkpoint " + " ".join(f"{c}:{v}" for c, v in zip(panel.checkpoints, panel.coverage)))
    return EXIT_OK


def cmd_grid(args) -> int:
    values = resolve_options(args)
    cfg = build_train_config(values)
    a1 = _parse_float_list(args.alpha1) if args.alpha1 else list(DEFAULT_ALPHA1S)
    a2 = _parse_float_list(args.alpha2) if args.alpha2 else list(DEFAULT_ALPHA2S)
    out = run_dir(values, "grid")
    write_config_snapshot(values, out / "config.ini")
    result = diagnostics.alpha_grid(cfg, a1, a2, budget=args.budget, workers=args.workers)
    diagnostics.export_csv(result, out / "grid.csv")
    diagnostics.export_svg(result.figure(), out / "grid.svg")
    for i, x in enumerate(result.alpha1):
        for j, y in enumerate(result.alpha2):
            if not result.valid[i, j]:
                print(f"cell alpha1={x:g} alpha2={y:g}: invalid (alpha1 > alpha2), not run")
    print(f"{out}: {int(result.valid.sum())} cells run")
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="awgan",
        description="Adaptive weighted discriminator loss: training, checks and diagnostics on toy data.",
        epilog=f"Output root: --out-dir, [output] dir, ${OUTPUT_ENV}, or ./runs. Exit codes: 0 ok, 1 run failure, 2 usage error.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train one GAN and write its run log and checkpoints")
    _add_config_options(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run the property suites and print pass/fail per suite")
    p.add_argument("--dims", default=",".join(map(str, verify.DEFAULT_DIMS)),
                   help="comma-separated dimensions for the geometry suite (default: %(default)s)")
    p.add_argument("--pairs", type=int, default=1000, help="random pairs per dimension (default: %(default)s)")
    p.add_argument("--epsilon", type=float, default=0.0,
                   help="weight offset; the geometry suite is skipped unless 0 (default: %(default)s)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("diagnose", help="run one of the angle, score-gap or mode studies")
    p.add_argument("study", choices=("angles", "scoregap", "modes"))
    p.add_argument("--window", default="0:50", help="angles: iteration window START:STOP (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=1, help="scoregap: epochs (default: %(default)s)")
    p.add_argument("--iters", type=int, default=None,
                   help="generator iterations; overrides --iterations (angles default: just enough for --window)")
    p.add_argument("--checkpoint-every", type=int, default=5000, help="modes: checkpoint spacing (default: %(default)s)")
    _add_config_options(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("grid", help="sweep (alpha1, alpha2) and write a heat map")
    p.add_argument("--alpha1", default=None,
                   help=f"comma-separated alpha1 values (default: {','.join(map(str, DEFAULT_ALPHA1S))})")
    p.add_argument("--alpha2", default=None,
                   help=f"comma-separated alpha2 values (default: {','.join(map(str, DEFAULT_ALPHA2S))})")
    p.add_argument("--budget", type=int, default=1, help="seeds averaged per cell (default: %(default)s)")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes (default: %(default)s)")
    # The list flags above replace the scalar alpha options.
    _add_config_options(p, skip={("aw", "alpha1"), ("aw", "alpha2")})
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"awgan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any run failure maps to exit 1
        print(f"awgan: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
