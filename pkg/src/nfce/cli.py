"""Command-line front end: generate, train, sweep/eval, gradcheck.

Exit codes: 0 success, 1 usage, 2 I/O or file-format failure,
3 numerical failure. Every error path emits a single stderr line with a
greppable prefix (E_USAGE:, E_IO:, E_FORMAT:, E_NUMERIC:).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .channel import ArrayConfig, ScenarioSpec
from .datastore import (
    FormatError,
    generate_dataset,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .evaluation import (
    LsEstimator,
    MmseEstimator,
    ModelEstimator,
    parse_count,
    parse_scenario_grid,
    parse_snr_grid,
    run_sweep,
)
from .model import ModelConfig, build_model
from .nn.gradcheck import LAYER_NAMES, run_all_checks
from .seeding import mix_seed
from .training import NonFiniteLossError, TrainConfig, train

_VARIANT_FLAGS = {"racnn": "racnn", "cnn": "cnn_only"}

# default path-count specs keyed by --scenario
_SCENARIO_DEFAULTS = {
    "far": ("3", "0"),
    "near": ("0", "3"),
    "hybrid": ("u0-10", "u0-10"),
}


class UsageError(Exception):
    """Bad flags or malformed flag values; maps to exit code 1."""


class NumericalFailure(Exception):
    """Numerical breakage (divergence, failed checks); exit code 3."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _image_dims(num_antennas: int) -> tuple[int, int]:
    """Most-square H x W factorization with H <= W."""
    h = int(np.sqrt(num_antennas))
    while num_antennas % h:
        h -= 1
    return h, num_antennas // h


def _usage_wrap(fn, *args, **kwargs):
    """Run a value parser, converting ValueError into a usage failure."""
    try:
        return fn(*args, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nfce",
                     description="Channel estimation workbench: dataset "
                                 "generation, denoiser training, NMSE sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a clean-channel dataset")
    gen.add_argument("--out", required=True, help="output dataset path")
    gen.add_argument("--samples", type=int, required=True)
    gen.add_argument("--antennas", type=int, default=256)
    gen.add_argument("--wavelength", type=float, default=0.01)
    gen.add_argument("--scenario", choices=("far", "near", "hybrid"),
                     default="hybrid")
    gen.add_argument("--lf", default=None,
                     help="far path count: fixed like 3 or range like u0-10")
    gen.add_argument("--ln", default=None,
                     help="near path count, same grammar as --lf")
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train a denoiser on a dataset")
    tr.add_argument("--data", required=True, help="dataset path")
    tr.add_argument("--out", required=True, help="output model path")
    tr.add_argument("--loss-csv", default=None,
                    help="per-epoch loss CSV path (default: <out>.loss.csv)")
    tr.add_argument("--variant", choices=tuple(_VARIANT_FLAGS), default="racnn")
    tr.add_argument("--epochs", type=int, required=True)
    tr.add_argument("--lr", type=float, default=0.001)
    tr.add_argument("--batch", type=int, default=128)
    tr.add_argument("--snrs", default="10,15",
                    help="training SNR levels in dB, comma list")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--depth", type=int, default=3)
    tr.add_argument("--width", type=int, default=64)
    tr.set_defaults(func=cmd_train)

    for name in ("sweep", "eval"):
        sw = sub.add_parser(name, help="NMSE-vs-SNR sweep over estimators")
        sw.add_argument("--model", action="append", default=[],
                        help="trained model file; repeatable")
        sw.add_argument("--baselines", default="ls,mmse",
                        help="comma list from {ls,mmse}; empty for none")
        sw.add_argument("--scenario-grid", default="hybrid:u0-10+u0-10")
        sw.add_argument("--snrs", default="0:4:20")
        sw.add_argument("--samples-per-cell", type=int, default=1000)
        sw.add_argument("--antennas", type=int, default=None,
                        help="default: from the first model, else 256")
        sw.add_argument("--wavelength", type=float, default=0.01)
        sw.add_argument("--mmse-calibration", type=int, default=10_000)
        sw.add_argument("--seed", type=int, default=0)
        sw.add_argument("--out", default=None,
                        help="report path (default: print to stdout)")
        sw.add_argument("--format", choices=("csv", "json"), default="csv")
        sw.set_defaults(func=cmd_sweep)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    gc.add_argument("--layer", action="append", default=None,
                    help=f"restrict to a check; repeatable; one of {LAYER_NAMES}")
    gc.add_argument("--tolerance", type=float, default=None,
                    help="max relative error for every check "
                         "(default: 1e-4 layers, 1e-3 end-to-end model)")
    gc.add_argument("--step", type=float, default=1e-5)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)

    return parser


def cmd_generate(args) -> int:
    if args.samples < 1:
        raise UsageError(f"--samples must be >= 1, got {args.samples}")
    lf_default, ln_default = _SCENARIO_DEFAULTS[args.scenario]
    lf_text = args.lf if args.lf is not None else lf_default
    ln_text = args.ln if args.ln is not None else ln_default
    if args.scenario == "far" and ln_text != "0":
        raise UsageError("--scenario far requires --ln 0")
    if args.scenario == "near" and lf_text != "0":
        raise UsageError("--scenario near requires --lf 0")
    lf = _usage_wrap(parse_count, lf_text)
    ln = _usage_wrap(parse_count, ln_text)
    cfg = _usage_wrap(ArrayConfig, num_antennas=args.antennas,
                      wavelength=args.wavelength)
    scenario = _usage_wrap(ScenarioSpec, far_paths=lf, near_paths=ln)
    ds = generate_dataset(cfg, scenario, args.samples, args.seed)
    save_dataset(ds, args.out)
    energy = np.sum(np.abs(ds.h.astype(np.complex128)) ** 2, axis=1)
    print(f"wrote {args.out}: {ds.num_samples} samples, M={ds.num_antennas}, "
          f"scenario {args.scenario} (L_f={lf_text}, L_n={ln_text}), seed {args.seed}")
    print(f"per-sample energy mean {energy.mean():.4f}, std {energy.std():.4f}, "
          f"mean L_f {ds.lf.mean():.2f}, mean L_n {ds.ln.mean():.2f}")
    return 0


def cmd_train(args) -> int:
    ds = load_dataset(args.data)
    height, width = _image_dims(ds.num_antennas)
    config = _usage_wrap(
        ModelConfig,
        image_height=height, image_width=width,
        width=args.width, body_depth=args.depth,
        variant=_VARIANT_FLAGS[args.variant],
    )
    snrs = _usage_wrap(parse_snr_grid, args.snrs)
    tcfg = _usage_wrap(
        TrainConfig,
        epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch,
        train_snrs_db=tuple(snrs), seed=args.seed,
    )
    model = build_model(config, init_seed=mix_seed(args.seed, 4))
    model, history = train(model, ds, tcfg)
    save_model(model, args.out)
    loss_path = args.loss_csv if args.loss_csv else f"{args.out}.loss.csv"
    with open(loss_path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for epoch, train_mse, val_mse in history:
            fh.write(f"{epoch},{train_mse!r},{val_mse!r}\n")
    final = history[-1]
    print(f"wrote {args.out} ({model.num_parameters} parameters) and {loss_path}")
    print(f"epoch {final[0]}: train_mse {final[1]:.6g}, val_mse {final[2]:.6g}")
    return 0


def cmd_sweep(args) -> int:
    if args.samples_per_cell < 1:
        raise UsageError(f"--samples-per-cell must be >= 1, got "
                         f"{args.samples_per_cell}")
    estimators = []
    antennas = args.antennas
    for path in args.model:
        model = load_model(path)
        name = Path(path).stem
        if antennas is None:
            antennas = model.config.num_antennas
        if model.config.num_antennas != antennas:
            raise UsageError(
                f"model {path} has M={model.config.num_antennas}, "
                f"sweep uses M={antennas}"
            )
        estimators.append(ModelEstimator(model, name=name))
    for token in args.baselines.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "ls":
            estimators.append(LsEstimator())
        elif token == "mmse":
            estimators.append(MmseEstimator(args.mmse_calibration))
        else:
            raise UsageError(f"unknown baseline {token!r}, choose from ls,mmse")
    if not estimators:
        raise UsageError("no estimators: pass --model and/or --baselines")
    if antennas is None:
        antennas = 256

    scenarios = _usage_wrap(parse_scenario_grid, args.scenario_grid)
    snrs = _usage_wrap(parse_snr_grid, args.snrs)
    cfg = _usage_wrap(ArrayConfig, num_antennas=antennas,
                      wavelength=args.wavelength)
    report = _usage_wrap(
        run_sweep, estimators, cfg, scenarios, snrs,
        args.samples_per_cell, args.seed,
    )
    text = report.to_csv() if args.format == "csv" else report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {args.out} ({len(report.cells)} cells, "
              f"fingerprint {report.fingerprint[:12]})")
    else:
        print(text, end="")
    failed = [c for c in report.cells if c.error is not None]
    if failed:
        print(f"warning: {len(failed)} cells failed "
              f"({sorted({c.estimator for c in failed})})", file=sys.stderr)
    return 0


def cmd_gradcheck(args) -> int:
    tolerance = 1e-4 if args.tolerance is None else args.tolerance
    model_tolerance = 1e-3 if args.tolerance is None else args.tolerance
    results = _usage_wrap(
        run_all_checks,
        seed=args.seed, step=args.step,
        tolerance=tolerance, model_tolerance=model_tolerance,
        layer_names=args.layer,
    )
    for result in results.values():
        print(result.summary())
    failures = [name for name, r in results.items() if not r.passed]
    if failures:
        raise NumericalFailure(f"gradient checks failed: {', '.join(failures)}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help path; argparse errors raise UsageError
            return int(exc.code or 0)
        return args.func(args)
    except UsageError as exc:
        print(f"E_USAGE: {exc}", file=sys.stderr)
        return 1
    except FormatError as exc:
        print(f"E_FORMAT: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return 2
    except NonFiniteLossError as exc:
        print(f"E_NUMERIC: {exc}", file=sys.stderr)
        return 3
    except np.linalg.LinAlgError as exc:
        print(f"E_NUMERIC: {exc}", file=sys.stderr)
        return 3
    except NumericalFailure as exc:
        print(f"E_NUMERIC: {exc}", file=sys.stderr)
        return 3


def main_entry() -> None:
    raise SystemExit(main(sys.argv[1:]))
