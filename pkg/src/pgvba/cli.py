"""Command-line front end: ``pgvba {degrade,restore,metrics,nltv-weights,phantom}``."""
import argparse
import logging
import math
import os
import sys

import numpy as np

from . import io, operators, simulation, vba
from .likelihoods import FAMILIES, NoiseFamily
from .solver import CgParams

PRIORS = ("tv", "hessian", "sltv", "nltv")

# restore settings that may also come from --config; value is the parser
RESTORE_KEYS = {
    "family": str,
    "prior": str,
    "cov": str,
    "ns": int,
    "seed": int,
    "stop_tol": float,
    "max_iter": int,
    "kappa": float,
    "eps": float,
    "alpha": float,
    "beta": float,
    "cg_tol": float,
    "cg_iters": int,
    "sample_cg_tol": float,
    "sample_cg_iters": int,
    "trace": str,
    "truth": str,
    "weights": str,
    "meta": str,
}
RESTORE_DEFAULTS = {
    "family": "spoiss",
    "prior": "tv",
    "cov": "diag",
    "ns": 160,
    "seed": 0,
    "stop_tol": 1e-6,
    "max_iter": 500,
    "kappa": 0.5,
    "eps": 1e-3,
    "alpha": 1e-3,
    "beta": 1e-3,
    "cg_tol": 1e-6,
    "cg_iters": 500,
    "sample_cg_tol": 1e-4,
    "sample_cg_iters": 200,
}

log = logging.getLogger("pgvba")


class CliError(Exception):
    pass


def parse_kernel(spec):
    """``uniform:N`` or ``gaussian:N:STD`` to normalized taps."""
    parts = spec.split(":")
    try:
        if parts[0] == "uniform" and len(parts) == 2:
            size = int(parts[1])
            taps = None if size < 1 or size % 2 == 0 else operators.uniform_kernel(size)
        elif parts[0] == "gaussian" and len(parts) == 3:
            size, std = int(parts[1]), float(parts[2])
            if not std > 0:
                raise CliError(f"kernel std must be positive in {spec!r}")
            taps = None if size < 1 or size % 2 == 0 else operators.gaussian_kernel(size, std)
        else:
            raise CliError(f"bad kernel spec {spec!r}; use uniform:N or gaussian:N:STD")
    except ValueError:
        raise CliError(f"bad number in kernel spec {spec!r}") from None
    if taps is None:
        raise CliError(f"kernel size must be a positive odd integer in {spec!r}")
    return taps


def _tmp_name(path):
    root, ext = os.path.splitext(path)
    return f"{root}.tmp-{os.getpid()}{ext}"


def _commit(path, writer):
    """Write through a temporary file so that ``path`` is all or nothing."""
    tmp = _tmp_name(path)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def _read(path, what="image"):
    try:
        return io.read_image(path)
    except OSError as exc:
        raise CliError(f"cannot read {what} {path}: {exc.strerror or exc}") from None


def _positive(name, value):
    if not value > 0:
        raise CliError(f"{name} must be positive")
    return value


def cmd_degrade(args):
    taps = parse_kernel(args.kernel)
    if args.sigma2 < 0:
        raise CliError("sigma2 must be non-negative")
    _positive("x-plus", args.x_plus)
    x = _read(args.input)
    if args.no_rescale:
        x = operators.as_image(x)
    else:
        x = simulation.rescale(x, args.x_plus)
    spec = simulation.DegradeSpec(taps, args.sigma2, args.x_plus, args.seed)
    y = simulation.degrade(x, spec)
    meta = {
        "kernel": args.kernel,
        "sigma2": repr(float(args.sigma2)),
        "x_plus": repr(float(args.x_plus)),
        "seed": args.seed,
        "shape": f"{y.shape[0]}x{y.shape[1]}",
    }
    _commit(args.output, lambda p: io.write_image(p, y))
    _commit(io.meta_path(args.output), lambda p: io.write_meta(p, meta))
    if args.truth_out:
        _commit(args.truth_out, lambda p: io.write_image(p, x))
    print(f"snr_degraded={simulation.snr(x, y):.17g}" if np.any(x) else "snr_degraded=nan")


def _read_config(path):
    try:
        raw = io.read_meta(path)
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out = {}
    for key, value in raw.items():
        norm = key.replace("-", "_")
        if norm not in RESTORE_KEYS:
            raise CliError(f"unknown config key {key!r}")
        try:
            out[norm] = RESTORE_KEYS[norm](value)
        except ValueError:
            raise CliError(f"bad value for config key {key!r}: {value!r}") from None
    return out


def _settings(args):
    """Defaults, then the config file, then explicit flags."""
    settings = dict(RESTORE_DEFAULTS)
    if args.config:
        settings.update(_read_config(args.config))
    for key in RESTORE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    if settings["family"] not in FAMILIES:
        raise CliError(f"unknown family {settings['family']!r}")
    if settings["prior"] not in PRIORS:
        raise CliError(f"unknown prior {settings['prior']!r}")
    if settings["cov"] not in vba.COV_MODES:
        raise CliError(f"unknown covariance mode {settings['cov']!r}")
    return settings


def _vba_config(s, stop_tol=None, cov=None):
    try:
        return vba.VbaConfig(
            kappa=s["kappa"],
            hyper_alpha=s["alpha"],
            hyper_beta=s["beta"],
            eps_floor=s["eps"],
            cov_mode=cov or s["cov"],
            n_samples=s["ns"],
            stop_tol=stop_tol or s["stop_tol"],
            max_outer_iters=s["max_iter"],
            mean_cg=CgParams(s["cg_tol"], s["cg_iters"]),
            sample_cg=CgParams(s["sample_cg_tol"], s["sample_cg_iters"]),
            master_seed=s["seed"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _shape_from_meta(text):
    try:
        ny, nx = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise CliError(f"bad shape entry {text!r} in metadata") from None
    return ny, nx


def cmd_restore(args):
    s = _settings(args)
    config = _vba_config(s)
    meta_file = s.get("meta") or io.meta_path(args.degraded)
    meta = {}
    if os.path.exists(meta_file):
        meta = io.read_meta(meta_file)
    elif s.get("meta"):
        raise CliError(f"metadata file {meta_file} not found")
    kernel = args.kernel or meta.get("kernel")
    sigma2 = args.sigma2 if args.sigma2 is not None else meta.get("sigma2")
    if kernel is None or sigma2 is None:
        raise CliError("kernel and sigma2 must come from metadata or --kernel/--sigma2")
    taps = parse_kernel(kernel)
    try:
        sigma2 = float(sigma2)
    except ValueError:
        raise CliError(f"bad sigma2 {sigma2!r}") from None
    if sigma2 < 0:
        raise CliError("sigma2 must be non-negative")
    try:
        family = NoiseFamily(s["family"], math.sqrt(sigma2))
    except ValueError as exc:
        raise CliError(str(exc)) from None

    y = _read(args.degraded)
    if "shape" in meta and _shape_from_meta(meta["shape"]) != y.shape:
        raise CliError(f"metadata shape {meta['shape']} does not match image {y.shape}")
    truth = None
    if s.get("truth"):
        truth = _read(s["truth"], "ground truth")
        if truth.shape != y.shape:
            raise CliError("ground truth and degraded image differ in shape")
    H = operators.Convolution(taps, y.shape)
    if s["prior"] == "nltv":
        if s.get("weights"):
            weights = io.load_weights(s["weights"])
        else:
            log.info("no NLTV weights given; computing them from a TV restoration")
            ref = vba.run(y, H, operators.make_tv(y.shape), family, _vba_config(s, cov="diag")).m
            weights = operators.nltv_weights(ref)
        D = operators.make_nltv(y.shape, weights=weights)
    else:
        D = {"tv": operators.make_tv, "hessian": operators.make_hessian, "sltv": operators.make_sltv}[s["prior"]](y.shape)

    result = vba.run(y, H, D, family, config, ground_truth=truth)
    _commit(args.output, lambda p: io.write_image(p, result.m))
    if s.get("trace"):
        _commit(s["trace"], result.trace.to_csv)
        _commit(io.meta_path(s["trace"]), lambda p: io.write_meta(p, result.trace.meta()))
    print(f"gamma={result.gamma.mean:.17g}")
    print(f"iterations={len(result.trace)}")
    if truth is not None:
        print(f"snr={simulation.snr(truth, result.m):.17g}")


def cmd_metrics(args):
    _positive("x-plus", args.x_plus)
    ref = _read(args.reference, "reference")
    est = _read(args.estimate, "estimate")
    if ref.shape != est.shape:
        raise CliError(f"shape mismatch {ref.shape} vs {est.shape}")
    print(f"snr={simulation.snr(ref, est):.17g}")
    print(f"ssim={simulation.ssim(ref, est, args.x_plus):.17g}")


def cmd_nltv_weights(args):
    ref = _read(args.reference, "reference")
    if not args.output.endswith(".npy"):
        raise CliError("weight files use the .npy extension")
    if args.h is not None:
        _positive("h", args.h)
    w = operators.nltv_weights(ref, args.h, args.half_window, args.half_patch)
    _commit(args.output, lambda p: io.save_weights(p, w))


def cmd_phantom(args):
    if args.size < 8:
        raise CliError("phantom size must be at least 8")
    _positive("x-plus", args.x_plus)
    img = simulation.phantom((args.size, args.size), args.x_plus)
    _commit(args.output, lambda p: io.write_image(p, img))


def build_parser():
    p = argparse.ArgumentParser(prog="pgvba", description="Variational Bayesian restoration under Poisson-Gaussian noise.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("degrade", help="blur and corrupt an image with Poisson-Gaussian noise")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--kernel", default="uniform:5", help="uniform:N or gaussian:N:STD")
    d.add_argument("--sigma2", type=float, default=4.0)
    d.add_argument("--x-plus", type=float, default=10.0)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--no-rescale", action="store_true", help="use the input intensities unchanged")
    d.add_argument("--truth-out", help="also write the rescaled clean image here")
    d.set_defaults(func=cmd_degrade)

    r = sub.add_parser("restore", help="restore a degraded image")
    r.add_argument("degraded")
    r.add_argument("output")
    r.add_argument("--config", help="key=value file; explicit flags take precedence")
    r.add_argument("--meta", help="metadata file (default: DEGRADED.meta)")
    r.add_argument("--kernel", help="override the metadata kernel")
    r.add_argument("--sigma2", type=float, help="override the metadata noise variance")
    r.add_argument("--family", choices=FAMILIES)
    r.add_argument("--prior", choices=PRIORS)
    r.add_argument("--cov", choices=vba.COV_MODES)
    r.add_argument("--ns", type=int, help="posterior samples per iteration (mc mode)")
    r.add_argument("--seed", type=int)
    r.add_argument("--stop-tol", type=float)
    r.add_argument("--max-iter", type=int)
    r.add_argument("--kappa", type=float)
    r.add_argument("--eps", type=float)
    r.add_argument("--alpha", type=float)
    r.add_argument("--beta", type=float)
    r.add_argument("--cg-tol", type=float)
    r.add_argument("--cg-iters", type=int)
    r.add_argument("--sample-cg-tol", type=float)
    r.add_argument("--sample-cg-iters", type=int)
    r.add_argument("--trace", help="CSV trace output")
    r.add_argument("--truth", help="ground truth image for SNR tracking")
    r.add_argument("--weights", help="NLTV weights (.npy)")
    r.set_defaults(func=cmd_restore)

    m = sub.add_parser("metrics", help="print SNR and SSIM")
    m.add_argument("reference")
    m.add_argument("estimate")
    m.add_argument("--x-plus", type=float, required=True, help="dynamic range for SSIM")
    m.set_defaults(func=cmd_metrics)

    w = sub.add_parser("nltv-weights", help="precompute nonlocal TV weights")
    w.add_argument("reference")
    w.add_argument("output")
    w.add_argument("--h", type=float, help="filtering parameter (default: 10%% of the range)")
    w.add_argument("--half-window", type=int, default=3)
    w.add_argument("--half-patch", type=int, default=2)
    w.set_defaults(func=cmd_nltv_weights)

    ph = sub.add_parser("phantom", help="write a synthetic test image")
    ph.add_argument("output")
    ph.add_argument("--size", type=int, default=64)
    ph.add_argument("--x-plus", type=float, default=20.0)
    ph.set_defaults(func=cmd_phantom)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except (CliError, ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"pgvba {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
