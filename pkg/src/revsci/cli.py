"""Command-line entry point: ``revsci <command> [flags]``.

Every command prints a JSON object on stdout. Failures print a JSON object
``{"error": ..., "type": ...}`` on stderr and exit with 1 (usage or input
error) or 2 (numerical failure).
"""
import argparse
import json
import sys
import tracemalloc
from pathlib import Path

import numpy as np

from .autograd import ENGINES, finite_difference_check, get_engine, gradient_parity
from .errors import NumericalError, RevSCIError
from .harness import TrainConfig, evaluate, load_checkpoint, random_scene, synth_video, train
from .harness.scenes import SceneSpec, SYNTHETIC_KINDS
from .numerics import DTYPES, read_meta, read_tensor, set_backend, write_tensor
from .revnet import Network, NetworkConfig
from .sci import MaskScheme, MaskSet, Measurement, bayer_mosaic, capture, generate_masks, prepare_input

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so usage errors map to exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(obj, stream=None):
    (stream or sys.stdout).write(json.dumps(obj, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("need at least one positive integer")
    return values


def _with_dtype(net, dtype):
    """The same network with parameters cast to ``dtype`` (a no-op if it already matches)."""
    if dtype is None or dtype == net.config.dtype:
        return net
    cfg = NetworkConfig.from_dict({**net.config.to_dict(), "dtype": dtype})
    other = Network(cfg, init="zeros")
    other.load_parameters(net.parameter_dict())
    return other


# ---- commands -------------------------------------------------------------

def cmd_simulate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dt = DTYPES[args.dtype]
    size = (3, args.B, args.nx, args.ny) if args.color else (args.B, args.nx, args.ny)
    if args.kind == "random":
        spec = random_scene(args.seed, size)
    else:
        spec = SceneSpec(args.kind, size, tuple(args.velocity), args.seed)
    truth = synth_video(spec, dt)
    masks = generate_masks(args.B, args.nx, args.ny, args.scheme, args.seed, dtype=dt, require_coverage=False)
    meas = capture(bayer_mosaic(truth) if args.color else truth, masks, args.sigma, args.seed, color=args.color)
    common = {"seed": args.seed, "B": args.B, "color": args.color}
    files = {
        "truth": write_tensor(out / "truth.rvt", truth, {**common, "role": "truth", "kind": spec.kind.value,
                                                          "velocity": list(spec.velocity)}),
        "masks": write_tensor(out / "masks.rvt", masks.masks, {**common, "role": "masks", "scheme": args.scheme}),
        "measurement": write_tensor(out / "measurement.rvt", meas.y, {**common, "role": "measurement",
                                                                      "noise_sigma": args.sigma}),
    }
    return {"command": "simulate", "files": {k: str(v) for k, v in files.items()}, "shape": list(truth.shape)}


def _load_train_config(args):
    data = json.loads(Path(args.config).read_text()) if args.config else {}
    cfg = TrainConfig.from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.dtype is not None:
        cfg.network.dtype = args.dtype
    for key in ("epochs", "engine", "lr0"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    return TrainConfig.from_dict(cfg.to_dict())


def cmd_train(args):
    cfg = _load_train_config(args)
    result = train(cfg, args.out)
    return {"command": "train", "epochs": len(result.history), "last": result.history[-1] if result.history else None,
            "final": str(result.final_checkpoint), "best": str(result.best_checkpoint) if result.best_checkpoint else None}


def cmd_reconstruct(args):
    net, _, _ = load_checkpoint(args.ckpt)
    net = _with_dtype(net, args.dtype)
    dt = net.config.np_dtype
    y = read_tensor(args.measurement).astype(dt)
    meta = read_meta(args.measurement)
    masks = MaskSet(read_tensor(args.masks).astype(dt), MaskScheme(read_meta(args.masks).get("scheme", "bernoulli")),
                    read_meta(args.masks).get("seed", 0))
    if masks.B != net.config.B:
        raise ValueError(f"masks hold {masks.B} frames but the network expects B={net.config.B}")
    if bool(meta.get("color", net.config.color)) != net.config.color:
        raise ValueError("measurement color mode does not match the checkpoint")
    ce = prepare_input(Measurement(y, color=net.config.color), masks, guard=True)
    xhat = net(ce.network_input)
    if not np.isfinite(xhat).all():
        raise NumericalError("reconstruction contains non-finite values")
    out = Path(args.out) if args.out else Path(args.measurement).with_name("xhat.rvt")
    write_tensor(out, xhat, {"role": "reconstruction", "checkpoint": str(args.ckpt), "seed": args.seed})
    return {"command": "reconstruct", "out": str(out), "shape": list(xhat.shape)}


def cmd_eval(args):
    net, masks, _ = load_checkpoint(args.ckpt)
    net = _with_dtype(net, args.dtype)
    if args.masks:
        masks = MaskSet(read_tensor(args.masks), MaskScheme(read_meta(args.masks).get("scheme", "bernoulli")),
                        read_meta(args.masks).get("seed", 0))
    table = evaluate(net, args.data, masks=masks, noise_sigma=args.sigma, seed=args.seed)
    result = {"command": "eval", **table.to_json()}
    if args.no_timing:
        for row in result["rows"]:
            row.pop("seconds")
        result["mean"].pop("seconds")
    return result


def _tiny_problem(args):
    cfg = NetworkConfig(c1=args.c1, m=args.m, L=args.L, B=args.B, dtype=args.dtype, seed=args.seed)
    net = Network(cfg)
    rng = np.random.default_rng(args.seed)
    ce = rng.random((1, args.B, args.nx, args.ny))
    truth = rng.random((args.B, args.nx, args.ny))
    return net, ce, truth


def cmd_gradcheck(args):
    net, ce, truth = _tiny_problem(args)
    parity, _, _, _ = gradient_parity(net, ce, truth)
    fd = {}
    for engine in sorted(ENGINES):
        report = finite_difference_check(net, ce, truth, step=args.step, engine=engine,
                                         samples=args.samples, seed=args.seed)
        fd[engine] = {"max_rel_error": report.max_rel_error, "checked": report.checked,
                      "skipped_kinks": report.skipped_kinks}
    ok = parity < args.parity_tol and all(v["max_rel_error"] < args.fd_tol for v in fd.values())
    result = {"command": "gradcheck", "parity": parity, "finite_difference": fd, "pass": ok}
    if not ok:
        raise NumericalError(json.dumps(result, sort_keys=True))
    return result


def cmd_membench(args):
    engines = sorted(ENGINES) if args.engine == "both" else [args.engine]
    rng = np.random.default_rng(args.seed)
    ce = rng.random((1, args.B, args.nx, args.ny))
    truth = rng.random((args.B, args.nx, args.ny))
    rows = []
    for engine in engines:
        for L in args.L:
            net = Network(NetworkConfig(c1=args.c1, m=args.m, L=L, B=args.B, dtype=args.dtype, seed=args.seed))
            if args.tracemalloc:
                tracemalloc.start()
            _, mem = get_engine(engine)(net, ce, truth)
            row = {"engine": engine, "L": L, "peak_activation_bytes": mem.peak_activation_bytes,
                   "stored_tensor_count": mem.stored_tensor_count}
            if args.tracemalloc:
                row["tracemalloc_peak_bytes"] = tracemalloc.get_traced_memory()[1]
                tracemalloc.stop()
            rows.append(row)
    summary = {}
    for engine in engines:
        pts = sorted((r["L"], r["peak_activation_bytes"]) for r in rows if r["engine"] == engine)
        (l0, p0), (l1, p1) = pts[0], pts[-1]
        # exact integer collinearity: every point on the line through the extremes
        affine = all((p - p0) * (l1 - l0) == (p1 - p0) * (l - l0) for l, p in pts)
        summary[engine] = {"constant": len({p for _, p in pts}) == 1, "affine": affine,
                           "bytes_per_block": (p1 - p0) / (l1 - l0) if l1 > l0 else 0.0}
    return {"command": "membench", "rows": rows, "summary": summary}


# ---- parser ---------------------------------------------------------------

def _common(p, dtype_default="f32"):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--dtype", choices=sorted(DTYPES), default=dtype_default, help="floating-point precision")


def build_parser():
    parser = Parser(prog="revsci", description="Snapshot compressive imaging with reversible 3D CNNs.")
    parser.add_argument("--backend", choices=["auto", "compiled", "python"], default=None,
                        help="convolution kernel backend (default: REVSCI_BACKEND or auto)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("simulate", help="render a synthetic scene and capture one snapshot")
    _common(p)
    p.add_argument("--B", type=int, default=8, help="frames per snapshot")
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--scheme", choices=[s.value for s in MaskScheme], default="shifting")
    p.add_argument("--kind", choices=["random"] + [k.value for k in SYNTHETIC_KINDS], default="random")
    p.add_argument("--velocity", type=float, nargs=2, default=(1.0, 0.0), metavar=("VR", "VC"))
    p.add_argument("--sigma", type=float, default=0.0, help="measurement noise standard deviation")
    p.add_argument("--color", action="store_true", help="RGB scene captured through an RGGB Bayer filter")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a network on synthetic or ingested data")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--dtype", choices=sorted(DTYPES), default=None, help="override the network dtype")
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--engine", choices=sorted(ENGINES))
    p.add_argument("--lr0", type=float)
    p.add_argument("--out", required=True, help="run directory for metrics and checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="reconstruct a video from a snapshot")
    p.add_argument("--seed", type=int, default=0, help="recorded in the output metadata")
    p.add_argument("--dtype", choices=sorted(DTYPES), default=None, help="compute precision (default: checkpoint's)")
    p.add_argument("--measurement", required=True)
    p.add_argument("--masks", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", help="output file (default: xhat.rvt next to the measurement)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on ground-truth videos")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--dtype", choices=sorted(DTYPES), default=None, help="compute precision (default: checkpoint's)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True, help="directory of .rvt/.npy ground-truth videos")
    p.add_argument("--masks", help="mask file (default: masks stored with the checkpoint)")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--no-timing", action="store_true", help="omit wall-clock columns for reproducible output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="engine parity and finite-difference gradient check")
    _common(p, dtype_default="f64")
    p.add_argument("--c1", type=int, default=4)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--L", type=int, default=2)
    p.add_argument("--B", type=int, default=4)
    p.add_argument("--nx", type=int, default=8)
    p.add_argument("--ny", type=int, default=8)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--parity-tol", type=float, default=1e-8)
    p.add_argument("--fd-tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("membench", help="activation-ledger peaks across depths")
    _common(p)
    p.add_argument("--L", type=_int_list, default=[18, 28, 50], help="comma-separated depths")
    p.add_argument("--engine", choices=sorted(ENGINES) + ["both"], default="both")
    p.add_argument("--c1", type=int, default=8)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--B", type=int, default=8)
    p.add_argument("--nx", type=int, default=16)
    p.add_argument("--ny", type=int, default=16)
    p.add_argument("--tracemalloc", action="store_true", help="also report the Python allocator peak")
    p.set_defaults(func=cmd_membench)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.backend:
            set_backend(args.backend)
        result = args.func(args)
    except UsageError as err:
        _emit({"error": str(err), "type": "usage"}, sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as err:
        payload = {"error": str(err), "type": "numerical"}
        if getattr(err, "checkpoint", None):
            payload["checkpoint"] = str(err.checkpoint)
        _emit(payload, sys.stderr)
        return EXIT_NUMERICAL
    except (RevSCIError, ValueError, OSError, KeyError) as err:
        _emit({"error": str(err), "type": type(err).__name__}, sys.stderr)
        return EXIT_USAGE
    _emit(result)
    return EXIT_OK


run = main

if __name__ == "__main__":
    sys.exit(main())
