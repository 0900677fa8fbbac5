"""Command-line front end: coeffs / density / simulate / compare / sweep.

Flag precedence is command line > config file > defaults; the config file is
flat key=value text mirroring the long flag names.  Exit codes: 0 success
(and comparison pass), 1 comparison failure, 2 usage or parameter error,
3 resource limit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import ensemble as en
from . import kernels as kn
from . import limitlaw as ll
from . import verify as vf
from .polybasis import expansion_coefficients, gaussian_inner_moments

EXIT_OK = 0
EXIT_COMPARE_FAIL = 1
EXIT_USAGE = 2
EXIT_RESOURCE = 3


class UsageError(ValueError):
    pass


def _read_config_file(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, val = line.partition("=")
            if not eq:
                raise UsageError(f"malformed config line {raw.strip()!r}")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _resolve(args, key, cast, default=None):
    """Command line > config file > default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    fileval = args._config_values.get(key)
    if fileval is not None:
        return cast(fileval)
    return default


def _resolve_pn_gamma(args):
    p = _resolve(args, "p", int)
    n = _resolve(args, "n", int)
    gamma = _resolve(args, "gamma", float)
    given = sum(v is not None for v in (p, n, gamma))
    if given != 2:
        raise UsageError("exactly two of --p, --n, --gamma must be given")
    if p is None:
        p = max(1, round(gamma * n))
    elif n is None:
        n = max(2, round(p / gamma))
    gamma = p / n
    return p, n, gamma


def _config_comments(resolved: dict):
    items = " ".join(f"{k}={v}" for k, v in resolved.items())
    return [f"config {items}", f"tool_version={__version__}"]


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_grid(spec: str):
    parts = spec.split(",")
    if len(parts) != 3:
        raise UsageError("--grid expects lo,hi,points")
    lo, hi, pts = float(parts[0]), float(parts[1]), int(parts[2])
    if not lo < hi or pts < 2:
        raise UsageError("--grid needs lo < hi and points >= 2")
    return np.linspace(lo, hi, pts)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_coeffs(args) -> int:
    spec = _resolve(args, "kernel", str)
    if spec is None:
        raise UsageError("--kernel is required")
    kernel = kn.parse_kernel_spec(spec)
    L = _resolve(args, "L", int, 10)
    p = _resolve(args, "p", int)
    lc = kn.limit_constants(kernel)
    if p is None:
        coeffs = expansion_coefficients(kernel, basis="hermite", L=L)
    else:
        moments = gaussian_inner_moments(p, 2 * L)
        coeffs = expansion_coefficients(kernel, basis=moments, L=L, weight="matched")
    running = np.cumsum(coeffs[1:] ** 2)
    resolved = {"command": "coeffs", "kernel": spec, "L": L, "p": p,
                "a": lc.a, "nu": lc.nu}
    fmt = _resolve(args, "format", str, "csv")
    if fmt == "json":
        payload = {
            "config": resolved, "tool_version": __version__,
            "a": lc.a, "nu": lc.nu,
            "coefficients": coeffs.tolist(),
            "running_sum_sq": [0.0] + running.tolist(),
        }
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        lines = [f"# {c}" for c in _config_comments(resolved)]
        lines.append(f"# a={lc.a!r} nu={lc.nu!r}")
        lines.append("l,c_l,running_sum_sq")
        for l, c in enumerate(coeffs):
            acc = 0.0 if l == 0 else float(running[l - 1])
            lines.append(f"{l},{float(c)!r},{acc!r}")
        _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _params_from_args(args):
    spec = _resolve(args, "kernel", str)
    a = _resolve(args, "a", float)
    nu = _resolve(args, "nu", float)
    if spec is not None and (a is not None or nu is not None):
        raise UsageError("give either --kernel or --a/--nu, not both")
    if spec is not None:
        lc = kn.limit_constants(kn.parse_kernel_spec(spec))
        return lc.a, lc.nu, spec
    if a is None or nu is None:
        raise UsageError("need --kernel or both --a and --nu")
    return a, nu, None


def cmd_density(args) -> int:
    a, nu, spec = _params_from_args(args)
    gamma = _resolve(args, "gamma", float)
    if gamma is None:
        p = _resolve(args, "p", int)
        n = _resolve(args, "n", int)
        if p is not None and n is not None:
            gamma = p / n
        else:
            raise UsageError("need --gamma (or both --p and --n)")
    params = ll.ModelParams(a=a, nu=nu, gamma=gamma)
    grid_spec = _resolve(args, "grid", str)
    points = _resolve(args, "grid_points", int, 8001)
    grid = _parse_grid(grid_spec) if grid_spec else ll.default_grid(params, points=points)
    curve = ll.density_curve(params, grid)
    resolved = {"command": "density", "kernel": spec, "a": a, "nu": nu,
                "gamma": gamma, "points": grid.size}
    fmt = _resolve(args, "format", str, "csv")
    if fmt == "json":
        payload = curve.to_json_dict() if hasattr(curve, "to_json_dict") else ll.curve_to_json_dict(curve)
        payload["config"] = resolved
        payload["tool_version"] = __version__
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        _emit(ll.curve_to_csv(curve, header_comments=_config_comments(resolved)), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = _resolve(args, "kernel", str)
    if spec is None:
        raise UsageError("--kernel is required")
    kernel = kn.parse_kernel_spec(spec)
    p, n, gamma = _resolve_pn_gamma(args)
    model = _resolve(args, "model", str, "gaussian")
    seed = _resolve(args, "seed", int, 0)
    cfg = en.EnsembleConfig(p=p, n=n, kernel=kernel, vector_model=model, seed=seed)
    sample = en.spectrum_sample(cfg)
    resolved = {"command": "simulate", "kernel": spec, "p": p, "n": n,
                "gamma": gamma, "model": model, "seed": seed}
    fmt = _resolve(args, "format", str, "csv")
    if fmt == "json":
        payload = {
            "config": resolved, "tool_version": __version__,
            "eigenvalues": sample.eigenvalues.tolist(),
            "spectral_norm": sample.spectral_norm,
        }
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        _emit(en.spectrum_to_csv(sample, header_comments=_config_comments(resolved)), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    spec = _resolve(args, "kernel", str)
    if spec is None:
        raise UsageError("--kernel is required")
    kernel = kn.parse_kernel_spec(spec)
    p, n, gamma = _resolve_pn_gamma(args)
    model = _resolve(args, "model", str, "gaussian")
    seed = _resolve(args, "seed", int, 0)
    bins = _resolve(args, "bins", int, 60)
    lc = kn.limit_constants(kernel)
    params = ll.ModelParams(a=lc.a, nu=lc.nu, gamma=gamma)
    cfg = en.EnsembleConfig(p=p, n=n, kernel=kernel, vector_model=model, seed=seed)
    sample = en.spectrum_sample(cfg)
    curve = ll.density_curve(params, ll.default_grid(params))
    tol = {}
    for flag, key in (
        ("cdf_tol", "cdf_sup_distance"),
        ("hist_tol", "hist_l1"),
        ("m2_tol", "second_moment_rel"),
        ("stieltjes_tol", "stieltjes_abs"),
    ):
        val = _resolve(args, flag, float)
        if val is not None:
            tol[key] = val
    report = vf.compare(sample, curve, params, bins=bins, tolerances=tol)
    payload = report.to_json_dict()
    payload["config"].update({"command": "compare"})
    payload["tool_version"] = __version__
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_COMPARE_FAIL


def cmd_sweep(args) -> int:
    sweep_type = _resolve(args, "type", str)
    if sweep_type not in ("concentration", "norm-growth"):
        raise UsageError("--type must be concentration or norm-growth")
    sizes_spec = _resolve(args, "sizes", str, "250,500,1000,2000")
    sizes = tuple(int(s) for s in sizes_spec.split(","))
    trials = _resolve(args, "trials", int, 20)
    seed = _resolve(args, "seed", int, 0)
    threads = _resolve(args, "threads", int,
                       int(os.environ.get("KERNEL_SPECTRA_THREADS", "1")))
    gamma = _resolve(args, "gamma", float, 1.0)
    fmt = _resolve(args, "format", str, "csv")
    if sweep_type == "concentration":
        spec = _resolve(args, "kernel", str)
        if spec is None:
            raise UsageError("--kernel is required for a concentration sweep")
        z_spec = _resolve(args, "z", str, "0,1")
        zre, _, zim = z_spec.partition(",")
        z = complex(float(zre), float(zim or "1"))
        base = en.EnsembleConfig(p=max(1, round(gamma * sizes[0])), n=sizes[0],
                                 kernel=kn.parse_kernel_spec(spec), seed=seed)
        res = vf.concentration_sweep(base, z, sizes, trials, threads=threads)
        resolved = {"command": "sweep", "type": sweep_type, "kernel": spec,
                    "gamma": gamma, "sizes": sizes_spec, "trials": trials,
                    "seed": seed, "z": z_spec, "threads": threads}
        if fmt == "json":
            payload = {"config": resolved, "tool_version": __version__,
                       "n": list(res.sizes), "std_mA": list(res.stds),
                       "slope": res.slope,
                       "trial_ids": {str(k): v for k, v in res.trial_ids.items()}}
            _emit(json.dumps(payload, indent=2) + "\n", args.out)
        else:
            lines = [f"# {c}" for c in _config_comments(resolved)]
            lines.append(f"# slope={res.slope!r}")
            lines.append("n,std_mA")
            lines.extend(f"{n},{s!r}" for n, s in res.table())
            _emit("\n".join(lines) + "\n", args.out)
    else:
        l = _resolve(args, "l", int)
        if l is None:
            raise UsageError("--l is required for a norm-growth sweep")
        model = _resolve(args, "model", str, "gaussian")
        res = vf.norm_growth_sweep(l, gamma, sizes, trials, seed=seed,
                                   model=model, threads=threads)
        resolved = {"command": "sweep", "type": sweep_type, "l": l,
                    "gamma": gamma, "sizes": sizes_spec, "trials": trials,
                    "seed": seed, "model": model, "threads": threads}
        if fmt == "json":
            payload = {"config": resolved, "tool_version": __version__,
                       "n": list(res.sizes),
                       "mean_spectral_norm": list(res.mean_spectral_norm),
                       "ratio_n_quarter": list(res.ratios),
                       "ratio_non_increasing": res.ratio_non_increasing,
                       "raw_bounded_hint": res.raw_bounded_hint}
            _emit(json.dumps(payload, indent=2) + "\n", args.out)
        else:
            lines = [f"# {c}" for c in _config_comments(resolved)]
            lines.append(f"# ratio_non_increasing={res.ratio_non_increasing}")
            lines.append("n,mean_s,ratio_n_quarter")
            lines.extend(
                f"{n},{m!r},{r!r}" for n, m, r in res.table()
            )
            _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernel-spectra",
        description="Limiting spectra of random inner-product kernel matrices",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--threads", type=int)

    sp = sub.add_parser("coeffs", help="kernel expansion coefficients")
    common(sp)
    sp.add_argument("--kernel")
    sp.add_argument("-L", "--L", dest="L", type=int)
    sp.add_argument("--p", type=int, help="use the finite-p basis at this dimension")
    sp.set_defaults(func=cmd_coeffs)

    sp = sub.add_parser("density", help="theoretical limiting density curve")
    common(sp)
    sp.add_argument("--kernel")
    sp.add_argument("--a", type=float)
    sp.add_argument("--nu", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--p", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--grid", help="lo,hi,points")
    sp.add_argument("--grid-points", dest="grid_points", type=int)
    sp.set_defaults(func=cmd_density)

    sp = sub.add_parser("simulate", help="one seeded kernel-matrix spectrum")
    common(sp)
    sp.add_argument("--kernel")
    sp.add_argument("--p", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--model", choices=("gaussian", "sphere", "hypercube"))
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="empirical vs theory comparison report")
    common(sp)
    sp.add_argument("--kernel")
    sp.add_argument("--p", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--model", choices=("gaussian", "sphere", "hypercube"))
    sp.add_argument("--seed", type=int)
    sp.add_argument("--bins", type=int)
    sp.add_argument("--cdf-tol", dest="cdf_tol", type=float)
    sp.add_argument("--hist-tol", dest="hist_tol", type=float)
    sp.add_argument("--m2-tol", dest="m2_tol", type=float)
    sp.add_argument("--stieltjes-tol", dest="stieltjes_tol", type=float)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="concentration / norm-growth sweeps")
    common(sp)
    sp.add_argument("--type", choices=("concentration", "norm-growth"))
    sp.add_argument("--kernel")
    sp.add_argument("--l", type=int)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--sizes")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--z", help="re,im of the test point")
    sp.add_argument("--model", choices=("gaussian", "sphere", "hypercube"))
    sp.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config_values = _read_config_file(args.config) if args.config else {}
        return args.func(args)
    except (UsageError, kn.KernelSpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except en.ResourceLimitError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
