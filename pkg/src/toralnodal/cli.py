"""Command line front end: lattice, curve, simulate, chaos, kacrice, report, run."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import __version__
from .errors import ToralNodalError


def _dump(obj, path=None) -> None:
    from .runner import _jsonable

    text = json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _add_curve_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("curve")
    g.add_argument("--family", choices=("circle", "ellipse", "flower"), default="circle")
    g.add_argument("--center", type=float, nargs=2, default=(0.5, 0.5), metavar=("X", "Y"))
    g.add_argument("--radius", type=float, default=0.2)
    g.add_argument("--a", type=float, default=0.25, help="ellipse semi-axis along x")
    g.add_argument("--b", type=float, default=0.15, help="ellipse semi-axis along y")
    g.add_argument("--r0", type=float, default=0.2, help="flower base radius")
    g.add_argument("--eps", type=float, default=0.05, help="flower petal amplitude")
    g.add_argument("--k", type=int, default=3, help="flower petal count")
    g.add_argument("--phase", type=float, default=0.0)
    g.add_argument("--angle", type=float, default=0.0, help="rotation about the center")
    g.add_argument("--arc", type=float, nargs=2, default=None, metavar=("S0", "S1"),
                   help="restrict the native parameter to [S0, S1] (open curve)")


def _curve(args):
    from .curve import CurveSpec, build_unit_speed

    spec = CurveSpec(
        family=args.family, center=tuple(args.center), radius=args.radius, a=args.a, b=args.b,
        r0=args.r0, eps=args.eps, k=args.k, phase=args.phase, angle=args.angle,
        arc=tuple(args.arc) if args.arc else None,
    )
    return build_unit_speed(spec)


def _measure(text: str):
    from .lattice import cilleruelo_measure, enumerate_level, spectral_measure, uniform_measure

    if text == "uniform":
        return uniform_measure()
    if text == "cilleruelo":
        return cilleruelo_measure()
    if text.startswith("level:"):
        return spectral_measure(enumerate_level(int(text.split(":", 1)[1])))
    raise argparse.ArgumentTypeError("measure must be uniform, cilleruelo or level:<n>")


# --- subcommands -----------------------------------------------------------------


def cmd_lattice(args) -> int:
    from .lattice import lattice_report

    _dump(lattice_report(args.n, args.delta, args.order), args.out)
    return 0


def cmd_curve(args) -> int:
    from .curve import curve_report

    _dump(curve_report(_curve(args), _measure(args.measure)), args.out)
    return 0


def cmd_simulate(args) -> int:
    from .crossings import run_campaign
    from .field import sample_coefficients
    from .lattice import enumerate_level
    from .runner import _histogram, write_histogram_csv
    from .svg import histogram_svg

    level = enumerate_level(args.n)
    curve = _curve(args)
    if args.dump_sample is not None:
        _dump(sample_coefficients(level, args.seed, args.dump_sample).to_dict(), args.dump_path)
    mc = run_campaign(level, curve, args.trials, args.seed, args.resolution, args.regime,
                      check_doubling=args.check_doubling)
    _dump(mc.to_dict(include_counts=args.counts), args.out)
    ref = "circle" if mc.regime == "static" else "normal"
    edges, counts, density, refd = _histogram(mc.standardized, args.bins, ref)
    if args.hist:
        write_histogram_csv(args.hist, edges, counts, density, refd)
    if args.svg:
        xs = np.linspace(edges[0], edges[-1], 400)
        ys = (np.exp(-xs**2 / 2) / math.sqrt(2 * math.pi) if ref == "normal"
              else np.where(xs <= 1.0, np.exp(-(1.0 - np.minimum(xs, 1.0))), 0.0))
        with open(args.svg, "w") as fh:
            fh.write(histogram_svg(edges, density, (xs, ys), f"n={args.n}, {curve.spec.label}"))
    return 0 if mc.flag_rate < 1e-3 else 1


def cmd_chaos(args) -> int:
    from .chaos import (ChaosBasis, chaos_variances, exact_chaos_variances, project_all,
                        sample_circle_law, sample_limit_I, sample_limit_M)
    from .crossings import ks_distance
    from .curve import A_functional, is_static, limit_coefficients
    from .field import sample_batch
    from .lattice import enumerate_level, spectral_measure

    level = enumerate_level(args.n)
    curve = _curve(args)
    basis = ChaosBasis(level, curve)
    proj = project_all(basis, sample_batch(level, args.seed, range(args.trials)))
    out = {
        "n": args.n, "N": level.count, "curve": curve.spec.label, "trials": args.trials, "seed": args.seed,
        "variance": {
            "z2a": float(np.var(proj.z2a, ddof=1)),
            "z2b": float(np.var(proj.z2b, ddof=1)),
            "z4a": float(np.var(proj.z4a, ddof=1)),
        },
        "prediction": {k: v for k, v in chaos_variances(level, curve).items() if k in ("z2a", "z4a")},
        "exact_finite_N": exact_chaos_variances(level, curve, basis),
        "max_residual": float(np.max(np.abs(proj.residual))),
        "static": is_static(curve),
    }
    if out["static"]:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([args.seed, 2**31 - 1])))
        mu = spectral_measure(level)
        draws = {
            "I": sample_limit_I(curve, mu, rng, args.samples),
            "M": sample_limit_M(limit_coefficients(curve, mu.fourth_coefficient.real),
                                16 * A_functional(curve, mu) - curve.length**2, rng, args.samples),
            "circle": sample_circle_law(rng, args.samples),
        }
        names = list(draws)
        out["ks"] = {f"{a}-{b}": ks_distance(draws[a], draws[b])
                     for i, a in enumerate(names) for b in names[i + 1:]}
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([args.limit])
                w.writerows([[f"{x:.10g}"] for x in draws[args.limit]])
    _dump(out, args.out)
    return 0


def cmd_kacrice(args) -> int:
    from .kacrice import lipschitz_ratio, moment_integrals, square_partition, variance_numeric
    from .lattice import enumerate_level

    level = enumerate_level(args.n)
    curve = _curve(args)
    orders = tuple(int(x) for x in args.orders.split(","))
    out = {
        "n": args.n, "N": level.count, "curve": curve.spec.label,
        "moments": moment_integrals(level, curve, orders),
        "partition": square_partition(level, curve, args.c0).to_dict(level.count),
        "lipschitz_ratio": lipschitz_ratio(level, curve),
    }
    if args.variance:
        out["variance"] = variance_numeric(level, curve, None).to_dict()
    _dump(out, args.out)
    return 0


def cmd_report(args) -> int:
    from .runner import report

    if not args.manifests:
        print("report: at least one manifest is required", file=sys.stderr)
        return 2
    _, text = report(args.manifests, args.csv, args.text)
    print(text, end="")
    return 0


def cmd_run(args) -> int:
    from .runner import bundled_config, load_config, run

    cfg = load_config(args.config) if args.config else bundled_config()
    if args.trials:
        cfg.trials = args.trials
    m = run(cfg, args.out)
    for c in m.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} n={c['n']} value={c['value']} bound={c['bound']}")
    return 0 if m.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="toralnodal", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("lattice", help="lattice points and spectral statistics of a level")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--order", type=int, default=None, choices=(4, 6))
    s.add_argument("--out")
    s.set_defaults(func=cmd_lattice)

    s = sub.add_parser("curve", help="curve functionals against a spectral measure")
    _add_curve_flags(s)
    s.add_argument("--measure", default="uniform")
    s.add_argument("--out")
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("simulate", help="Monte Carlo campaign of nodal intersection counts")
    s.add_argument("--n", type=int, required=True)
    _add_curve_flags(s)
    s.add_argument("--trials", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--resolution", type=float, default=20.0, help="samples per wavelength")
    s.add_argument("--regime", choices=("auto", "static", "generic"), default="auto")
    s.add_argument("--check-doubling", action="store_true")
    s.add_argument("--counts", action="store_true", help="include raw counts in the JSON")
    s.add_argument("--bins", type=int, default=40)
    s.add_argument("--out")
    s.add_argument("--hist")
    s.add_argument("--svg")
    s.add_argument("--dump-sample", type=int, default=None, metavar="TRIAL")
    s.add_argument("--dump-path", default=None)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("chaos", help="chaos projections, their variances and limit-law samplers")
    s.add_argument("--n", type=int, required=True)
    _add_curve_flags(s)
    s.add_argument("--trials", type=int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--limit", choices=("M", "I", "circle"), default="I")
    s.add_argument("--samples", type=int, default=20000)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_chaos)

    s = sub.add_parser("kacrice", help="moment integrals, singular squares and the Kac-Rice variance")
    s.add_argument("--n", type=int, required=True)
    _add_curve_flags(s)
    s.add_argument("--c0", type=float, default=0.5)
    s.add_argument("--orders", default="2,4,6")
    s.add_argument("--variance", action="store_true", help="also integrate the exact two-point correlation")
    s.add_argument("--out")
    s.set_defaults(func=cmd_kacrice)

    s = sub.add_parser("report", help="cross-level table from run manifests")
    s.add_argument("manifests", nargs="*")
    s.add_argument("--csv")
    s.add_argument("--text")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", help="run an experiment config (bundled static circle by default)")
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--trials", type=int, default=None, help="override the configured trial count")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ToralNodalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
