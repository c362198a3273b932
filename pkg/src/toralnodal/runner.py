"""Experiment configuration, reproducible runs, manifests and cross-level reports."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .chaos import ChaosBasis, chaos_variances, exact_chaos_variances, project_all
from .crossings import run_campaign
from .curve import CurveSpec, build_unit_speed, curve_report, is_static
from .errors import ConfigInvalid, ToralNodalError
from .field import sample_batch
from .lattice import enumerate_level, is_representable, lattice_report, spectral_measure, uniform_measure
from .svg import histogram_svg

WORKERS_ENV = "TORALNODAL_WORKERS"
REGIMES = ("auto", "static", "generic")
LIMIT_ROUTES = ("I", "M", "circle")


@dataclass
class Checks:
    """Tolerances of the acceptance checks a run evaluates; None disables a check."""

    mean_sigma: float | None = 3.0
    flag_rate: float | None = 1e-3
    doubling_agreement: float | None = 0.999
    variance_ratio: tuple[float, float] | None = None
    ks_max: float | None = None
    kacrice_rtol: float | None = None
    chaos_residual: float | None = 1e-8


@dataclass
class ExperimentConfig:
    name: str
    levels: list[int]
    curve: CurveSpec
    trials: int = 2000
    seed: int = 0
    resolution: float = 20.0
    regime: str = "auto"
    limit_route: str = "I"
    limit_samples: int = 20000
    chaos_trials: int = 0
    kacrice: bool = False
    output_dir: str = "results"
    svg: bool = False
    bins: int = 40
    checks: Checks = field(default_factory=Checks)
    source: str = ""

    def canonical(self) -> str:
        """Sorted, whitespace-normalized text of the settings that affect results."""
        d = {
            "name": self.name, "levels": self.levels, "curve": self.curve.to_dict(),
            "trials": self.trials, "seed": self.seed, "resolution": self.resolution,
            "regime": self.regime, "limit_route": self.limit_route,
            "limit_samples": self.limit_samples, "chaos_trials": self.chaos_trials,
            "kacrice": self.kacrice, "bins": self.bins, "checks": self.checks.__dict__,
        }
        return json.dumps(d, sort_keys=True, default=list)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def parse_config(text: str, source: str = "") -> ExperimentConfig:
    """Read an experiment from INI-style text with [experiment], [curve], [checks], [output]."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid(str(exc)) from exc
    if "experiment" not in cp or "curve" not in cp:
        raise ConfigInvalid("config needs [experiment] and [curve] sections")
    ex = cp["experiment"]
    try:
        levels = [int(x) for x in ex.get("levels", "").replace(",", " ").split()]
        cv = cp["curve"]
        kw = {"family": cv.get("family", "circle")}
        for key in ("radius", "a", "b", "r0", "eps", "phase", "angle"):
            if key in cv:
                kw[key] = cv.getfloat(key)
        if "k" in cv:
            kw["k"] = cv.getint("k")
        if "center" in cv:
            kw["center"] = tuple(_floats(cv["center"]))
        if "arc" in cv:
            kw["arc"] = tuple(_floats(cv["arc"]))
        curve = CurveSpec(**kw)
        ck = Checks()
        if "checks" in cp:
            sec = cp["checks"]
            for key in ("mean_sigma", "flag_rate", "doubling_agreement", "ks_max", "kacrice_rtol", "chaos_residual"):
                if key in sec:
                    v = sec[key].strip()
                    setattr(ck, key, None if v.lower() == "off" else float(v))
            if "variance_ratio" in sec:
                v = sec["variance_ratio"].strip()
                ck.variance_ratio = None if v.lower() == "off" else tuple(_floats(v))
        out = cp["output"] if "output" in cp else {}
        cfg = ExperimentConfig(
            name=ex.get("name", "experiment"),
            levels=levels,
            curve=curve,
            trials=ex.getint("trials", 2000),
            seed=ex.getint("seed", 0),
            resolution=ex.getfloat("resolution", 20.0),
            regime=ex.get("regime", "auto"),
            limit_route=ex.get("limit_route", "I"),
            limit_samples=ex.getint("limit_samples", 20000),
            chaos_trials=ex.getint("chaos_trials", 0),
            kacrice=ex.getboolean("kacrice", False),
            output_dir=out.get("dir", "results"),
            svg=str(out.get("svg", "false")).lower() in ("1", "true", "yes", "on"),
            bins=int(out.get("bins", 40)),
            checks=ck,
            source=source,
        )
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if not cfg.levels:
        raise ConfigInvalid("no levels given")
    bad = [n for n in cfg.levels if n < 1 or not is_representable(n)]
    if bad:
        raise ConfigInvalid(f"levels not representable as a sum of two squares: {bad}")
    if cfg.trials < 2:
        raise ConfigInvalid("trials must be at least 2")
    if cfg.regime not in REGIMES:
        raise ConfigInvalid(f"regime must be one of {REGIMES}")
    if cfg.limit_route not in LIMIT_ROUTES:
        raise ConfigInvalid(f"limit_route must be one of {LIMIT_ROUTES}")
    try:
        curve = build_unit_speed(cfg.curve)
    except ToralNodalError as exc:
        raise ConfigInvalid(f"curve: {exc}") from exc
    static = is_static(curve)
    if cfg.regime == "static" and not static:
        raise ConfigInvalid("regime 'static' given for a non-static curve")
    if cfg.regime == "generic" and static:
        raise ConfigInvalid("regime 'generic' given for a static curve")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    p = Path(path)
    return parse_config(p.read_text(), str(p))


def bundled_config(name: str = "static_circle") -> ExperimentConfig:
    text = resources.files("toralnodal").joinpath("data", f"{name}.cfg").read_text()
    return parse_config(text, f"bundled:{name}")


# --- running -------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    version: str
    config: dict
    levels: list[dict]
    curve: dict
    checks: list[dict]
    tolerances: dict
    started: str = ""
    finished: str = ""
    reproduced: bool | None = None

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "version": self.version,
            "config": self.config,
            "curve": self.curve,
            "levels": self.levels,
            "checks": self.checks,
            "tolerances": self.tolerances,
            "passed": self.passed,
            "reproduced": self.reproduced,
            "timestamps": {"started": self.started, "finished": self.finished},
        }

    def results_json(self) -> str:
        """Deterministic JSON without timestamps, used for reproducibility checks."""
        d = self.to_dict()
        d.pop("timestamps")
        d.pop("reproduced")
        return json.dumps(d, sort_keys=True, indent=2, default=_jsonable)


def _check(checks: list, name: str, n, value, bound, passed: bool) -> None:
    checks.append({"name": name, "n": n, "value": value, "bound": bound, "passed": bool(passed)})


def _histogram(z, bins: int, route: str):
    lo, hi = min(-4.0, float(np.min(z))), max(4.0, float(np.max(z)))
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(z, edges)
    density = counts / (len(z) * np.diff(edges))
    mids = 0.5 * (edges[:-1] + edges[1:])
    if route == "normal":
        ref = np.exp(-mids**2 / 2) / math.sqrt(2 * math.pi)
    else:
        ref = np.where(mids <= 1.0, np.exp(-(1.0 - np.minimum(mids, 1.0))), 0.0)
    return edges, counts, density, ref


def _limit_sample(cfg: ExperimentConfig, curve, level) -> np.ndarray:
    from .chaos import sample_circle_law, sample_limit_I, sample_limit_M
    from .curve import limit_coefficients, A_functional

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 2**31 - 1])))
    if cfg.limit_route == "circle":
        return sample_circle_law(rng, cfg.limit_samples)
    mu = spectral_measure(level)
    if cfg.limit_route == "I":
        return sample_limit_I(curve, mu, rng, cfg.limit_samples)
    mu4 = mu.fourth_coefficient.real
    denom = 16 * A_functional(curve, mu) - curve.length**2
    return sample_limit_M(limit_coefficients(curve, mu4), denom, rng, cfg.limit_samples)


def run_level(cfg: ExperimentConfig, n: int) -> tuple[dict, list, dict]:
    """Everything computed for one level: summary, checks and histogram data."""
    from .kacrice import moment_integrals, variance_numeric

    curve = build_unit_speed(cfg.curve)
    level = enumerate_level(n)
    static = is_static(curve)
    regime = cfg.regime if cfg.regime != "auto" else ("static" if static else "generic")
    lat = lattice_report(n)
    lat.pop("points", None)
    summary = {"n": n, "N": level.count, "lattice": lat}
    checks: list = []
    if "s4" in lat:
        _check(checks, "s4_identity", n, lat["s4"], 3 * level.count * (level.count - 1),
               lat["s4"] == 3 * level.count * (level.count - 1))
    limit = _limit_sample(cfg, curve, level) if regime == "static" else None
    ck = cfg.checks
    mc = run_campaign(level, curve, cfg.trials, cfg.seed, cfg.resolution, regime,
                      check_doubling=ck.doubling_agreement is not None, limit_sample=limit)
    summary["campaign"] = mc.to_dict()
    if ck.mean_sigma is not None:
        dev = abs(mc.mean - mc.theoretical_mean) / mc.standard_error
        _check(checks, "mean", n, dev, ck.mean_sigma, dev <= ck.mean_sigma)
    if ck.flag_rate is not None:
        _check(checks, "flag_rate", n, mc.flag_rate, ck.flag_rate, mc.flag_rate < ck.flag_rate)
    if ck.doubling_agreement is not None:
        _check(checks, "doubling_agreement", n, mc.doubling_agreement, ck.doubling_agreement,
               mc.doubling_agreement >= ck.doubling_agreement)
    if ck.variance_ratio is not None:
        lo, hi = ck.variance_ratio
        _check(checks, "variance_ratio", n, mc.variance_ratio, [lo, hi], lo <= mc.variance_ratio <= hi)
    ref = "circle" if regime == "static" else "normal"
    if ck.ks_max is not None:
        ks = mc.ks["limit_sample"] if limit is not None else mc.ks["normal"]
        _check(checks, f"ks_{'limit' if limit is not None else 'normal'}", n, ks, ck.ks_max, ks < ck.ks_max)
    if cfg.chaos_trials > 0:
        basis = ChaosBasis(level, curve, with_z2b=False)
        proj = project_all(basis, sample_batch(level, cfg.seed, range(cfg.chaos_trials)))
        pred = chaos_variances(level, curve)
        exact = exact_chaos_variances(level, curve, basis)
        summary["chaos"] = {
            "z2a_variance": float(np.var(proj.z2a, ddof=1)),
            "z4a_variance": float(np.var(proj.z4a, ddof=1)),
            "z2a_prediction": pred["z2a"], "z4a_prediction": pred["z4a"],
            "z2a_exact": exact["z2a"], "z4a_exact": exact["z4a"],
            "max_residual": float(np.max(np.abs(proj.residual))),
        }
        if ck.chaos_residual is not None and static:
            r = summary["chaos"]["max_residual"]
            _check(checks, "chaos_residual", n, r, ck.chaos_residual, r < ck.chaos_residual)
    if cfg.kacrice:
        kr = variance_numeric(level, curve)
        summary["kacrice"] = kr.to_dict()
        summary["moments"] = moment_integrals(level, curve)
        if ck.kacrice_rtol is not None:
            rel = abs(kr.variance - mc.variance) / kr.variance
            _check(checks, "kacrice_vs_mc", n, rel, ck.kacrice_rtol, rel <= ck.kacrice_rtol)
    hist = _histogram(mc.standardized, cfg.bins, ref)
    return summary, checks, {"hist": hist, "route": ref}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _run_level_args(args):
    return run_level(*args)


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> RunManifest:
    """Run all levels of an experiment and write manifest.json, histogram CSVs and SVGs."""
    validate_config(cfg)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    jobs = [(cfg, n) for n in cfg.levels]
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_level_args, jobs))
    else:
        results = [run_level(*j) for j in jobs]
    curve = build_unit_speed(cfg.curve)
    levels, checks = [], []
    for (summary, ch, extra), n in zip(results, cfg.levels):
        levels.append(summary)
        checks.extend(ch)
        edges, counts, density, ref = extra["hist"]
        write_histogram_csv(out / f"hist_n{n}.csv", edges, counts, density, ref)
        if cfg.svg:
            xs = np.linspace(edges[0], edges[-1], 400)
            ys = (np.exp(-xs**2 / 2) / math.sqrt(2 * math.pi) if extra["route"] == "normal"
                  else np.where(xs <= 1.0, np.exp(-(1.0 - np.minimum(xs, 1.0))), 0.0))
            (out / f"hist_n{n}.svg").write_text(histogram_svg(edges, density, (xs, ys), f"n={n}"))
    manifest = RunManifest(
        config_hash=cfg.hash,
        version=__version__,
        config=json.loads(cfg.canonical()),
        levels=levels,
        curve=curve_report(curve, uniform_measure()),
        checks=checks,
        tolerances=dict(cfg.checks.__dict__),
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
    )
    path = out / "manifest.json"
    if path.exists():
        old = json.loads(path.read_text())
        if old.get("config_hash") == manifest.config_hash:
            old.pop("timestamps", None)
            old.pop("reproduced", None)
            manifest.reproduced = json.dumps(old, sort_keys=True, indent=2) == manifest.results_json()
    path.write_text(json.dumps(manifest.to_dict(), sort_keys=True, indent=2, default=_jsonable))
    return manifest


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def write_histogram_csv(path, edges, counts, density, reference) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["left", "right", "count", "density", "reference_density"])
        for row in zip(edges[:-1], edges[1:], counts, density, reference):
            w.writerow([f"{row[0]:.6g}", f"{row[1]:.6g}", int(row[2]), f"{row[3]:.6g}", f"{row[4]:.6g}"])


# --- reporting -----------------------------------------------------------------

REPORT_COLUMNS = ("config", "n", "N", "trials", "mean", "theoretical_mean", "variance",
                  "theoretical_variance", "variance_ratio", "ks_normal", "ks_circle", "kacrice_variance")


def report(manifest_paths, csv_path=None, text_path=None) -> tuple[list[dict], str]:
    """Cross-level table of variance ratios and KS distances from one or more manifests."""
    paths = list(manifest_paths)
    if not paths:
        raise ValueError("report needs at least one manifest")
    rows = []
    for p in paths:
        m = json.loads(Path(p).read_text())
        for lv in m["levels"]:
            c = lv["campaign"]
            rows.append({
                "config": m["config"]["name"], "n": lv["n"], "N": lv["N"], "trials": c["trials"],
                "mean": c["mean"], "theoretical_mean": c["theoretical_mean"],
                "variance": c["variance"], "theoretical_variance": c["theoretical_variance"],
                "variance_ratio": c["variance_ratio"], "ks_normal": c["ks"]["normal"],
                "ks_circle": c["ks"]["circle"],
                "kacrice_variance": lv.get("kacrice", {}).get("variance", ""),
            })
    rows.sort(key=lambda r: (r["config"], r["n"]))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if csv_path:
        Path(csv_path).write_text(buf.getvalue())
    text = format_table(rows)
    if text_path:
        Path(text_path).write_text(text)
    return rows, text


def format_table(rows: list[dict]) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    cells = [list(REPORT_COLUMNS)] + [[fmt(r[c]) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(s.rjust(wd) for s, wd in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"

