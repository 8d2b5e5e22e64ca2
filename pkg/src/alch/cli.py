"""Command-line pipeline: JSON config in, report.json plus CSV series out.

Exit codes: 0 when every enabled stage passes, 2 when a stage verdict fails,
1 on configuration or execution errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chart import Chart
from .models import ModelSpec

__all__ = ["ConfigError", "RunConfig", "RunReport", "run", "compare_runs", "main", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1.0"
STAGES = ("oracle", "deficits", "boundary", "cr", "rates")
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

log = logging.getLogger("alch")

DEFAULT_TOLERANCES = {
    "oracle": None,  # model default: 1e-8 analytic, 1e-4 finite differences
    "beta_norm": 1e-6,
    "xi0_routes": 1e-5,
    "gamma_psd": 1e-6,
    "invariants": 1e-6,
    "phi_identities": 1e-5,
    "evolution": 1e-5,
    "contact": 1e-3,
    "levi": 1e-3,
    "reeb": 1e-3,
    "nijenhuis": 1e-3,
    "smoothness_budget": 1e3,
    "band_rel": 0.15,
    "band_abs": 0.05,
}


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec
    chart: Chart
    stages: tuple
    tolerances: dict
    output_dir: Path
    formats: str = "both"
    seed: int = 0
    workers: int = 1
    rate_window: tuple = (6.0, 12.0)
    rates_mode: str = "one_sided"
    plus: bool = False
    faults: dict = field(default_factory=lambda: {"gamma_scale": 1.0, "phi_sign": 1.0})
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc: dict, out: str | None = None, seed: int | None = None,
                  stages: tuple | None = None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        known = {"model", "chart", "pipeline", "tolerances", "output", "seed", "workers", "faults"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config block(s): {sorted(extra)}")
        mdoc = dict(doc.get("model", {}))
        try:
            model = ModelSpec(**mdoc)
        except TypeError as exc:
            raise ConfigError(f"model: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        cdoc = dict(doc.get("chart", {}))
        cdoc.setdefault("dim_boundary", model.dim_boundary)
        if cdoc["dim_boundary"] != model.dim_boundary:
            raise ConfigError("chart.dim_boundary must equal 2 model.n + 1")
        d = cdoc["dim_boundary"]
        cdoc.setdefault("base_box", ((-0.25, 0.25),) * d)
        cdoc.setdefault("grid", (7,) * d)
        if "base_box" in cdoc:
            cdoc["base_box"] = tuple(tuple(b) for b in cdoc["base_box"])
        if isinstance(cdoc.get("grid"), list):
            cdoc["grid"] = tuple(cdoc["grid"])
        try:
            chart = Chart(**cdoc)
        except TypeError as exc:
            raise ConfigError(f"chart: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        pdoc = dict(doc.get("pipeline", {}))
        req = stages if stages is not None else pdoc.get("stages", "all")
        if isinstance(req, str):
            req = [req]
        req = list(req)
        if "all" in req:
            req = [s for s in STAGES if s != "oracle" or model.exact]
        bad = [s for s in req if s not in STAGES]
        if bad:
            raise ConfigError(f"pipeline.stages: unknown stage(s) {bad}")
        if "cr" in req and "boundary" not in req:
            raise ConfigError("pipeline.stages: 'cr' requires 'boundary'")
        if "rates" in req and not ({"deficits", "boundary"} & set(req)):
            raise ConfigError("pipeline.stages: 'rates' requires 'deficits' or 'boundary'")
        if "oracle" in req and not model.exact:
            raise ConfigError("pipeline.stages: 'oracle' needs an exact model kind")
        ordered = tuple(s for s in STAGES if s in req)
        window = tuple(float(v) for v in pdoc.get("rate_window", (6.0, 12.0)))
        if len(window) != 2 or not window[0] < window[1]:
            raise ConfigError("pipeline.rate_window must be [lo, hi] with lo < hi")
        mode = pdoc.get("rates_mode", "one_sided")
        if mode not in ("one_sided", "two_sided"):
            raise ConfigError("pipeline.rates_mode must be 'one_sided' or 'two_sided'")

        tol = dict(DEFAULT_TOLERANCES)
        for k, v in dict(doc.get("tolerances", {})).items():
            if k not in tol:
                raise ConfigError(f"tolerances.{k}: unknown tolerance")
            if v is not None and not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerances.{k} must be positive")
            tol[k] = v

        odoc = dict(doc.get("output", {}))
        fmt = odoc.get("formats", "both")
        if fmt not in ("json", "csv", "both"):
            raise ConfigError("output.formats must be 'json', 'csv' or 'both'")
        outdir = Path(out if out is not None else odoc.get("directory", "alch_out"))

        s = doc.get("seed", 0) if seed is None else seed
        if int(s) != s or s < 0:
            raise ConfigError("seed must be a non-negative integer")
        w = doc.get("workers", 1)
        if int(w) != w or w < 1:
            raise ConfigError("workers must be a positive integer")
        fdoc = {"gamma_scale": 1.0, "phi_sign": 1.0, **dict(doc.get("faults", {}))}
        if set(fdoc) - {"gamma_scale", "phi_sign"}:
            raise ConfigError(f"faults: unknown key(s) {sorted(set(fdoc) - {'gamma_scale', 'phi_sign'})}")
        if fdoc["phi_sign"] not in (1, -1, 1.0, -1.0):
            raise ConfigError("faults.phi_sign must be +1 or -1")
        if not fdoc["gamma_scale"] > 0:
            raise ConfigError("faults.gamma_scale must be positive")

        raw = {
            "model": model.to_dict(),
            "chart": chart.to_dict(),
            "pipeline": {"stages": list(ordered), "rate_window": list(window), "rates_mode": mode,
                         "plus": bool(pdoc.get("plus", False))},
            "tolerances": tol,
            "output": {"directory": str(outdir), "formats": fmt},
            "seed": int(s),
            "workers": int(w),
            "faults": fdoc,
        }
        return cls(model, chart, ordered, tol, outdir, fmt, int(s), int(w), window, mode,
                   bool(pdoc.get("plus", False)), fdoc, raw)

    @classmethod
    def load(cls, path, **kw) -> "RunConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, **kw)


@dataclass
class RunReport:
    config: dict
    stages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    fit_tables: dict = field(default_factory=dict)
    boundary: object = None
    cr: object = None

    @property
    def status(self) -> str:
        if self.errors:
            return "ERROR"
        return "PASS" if all(self.verdicts.values()) else "FAIL"

    @property
    def exit_code(self) -> int:
        return {"PASS": EXIT_PASS, "FAIL": EXIT_FAIL, "ERROR": EXIT_ERROR}[self.status]

    def to_dict(self) -> dict:
        return _clean({
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            **self.stages,
            "timings": self.timings,
            "verdicts": {k: ("PASS" if v else "FAIL") for k, v in self.verdicts.items()},
            "errors": self.errors,
            "status": self.status,
        })


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


# -- stages -------------------------------------------------------------------------

def _stage_oracle(cfg, ctx, rep):
    from .models import model_oracle

    res = model_oracle(cfg.model, cfg.chart, cfg.tolerances["oracle"])
    rep.stages["oracle"] = res.to_dict()
    return res.passed


def _classify(cfg, name, fit):
    from .rates import RATE_MAP, classify_regime

    if cfg.model.exact or name not in RATE_MAP:
        return None
    return classify_regime(cfg.model.a, fit, name, band_rel=cfg.tolerances["band_rel"],
                           band_abs=cfg.tolerances["band_abs"], one_sided=cfg.rates_mode == "one_sided")


def _stage_deficits(cfg, ctx, rep):
    from .curvature import curvature_bundle, deficits
    from .rates import fit_decay

    bundle = curvature_bundle(cfg.model, cfg.chart, plus=cfg.plus)
    series = deficits(bundle)
    table = {}
    for name, s in series.items():
        rep.series[name] = s
        win = s.window(*cfg.rate_window)
        if win.r.size >= 6:
            fit = fit_decay(win, allow_log=True, a_nominal=None if cfg.model.exact else cfg.model.a)
            ctx.setdefault("fits", {})[name] = fit
            table[name] = {"fit": fit.to_dict(), "max": s.max()}
    rep.stages["deficits"] = {"slopes": table}
    return True


def _stage_boundary(cfg, ctx, rep):
    from .boundary import boundary_data
    from .models import GeometricModel

    model = ctx.setdefault("model", GeometricModel(cfg.model, cfg.chart.h_x))
    tol = cfg.tolerances
    data = boundary_data(model, cfg.chart, seed=cfg.seed, rate_window=cfg.rate_window,
                         tol={k: tol[k] for k in ("beta_norm", "xi0_routes", "gamma_psd")})
    f = cfg.faults
    if f["gamma_scale"] != 1.0 or f["phi_sign"] != 1.0:
        data = data.with_fault(f["gamma_scale"], f["phi_sign"])
    ctx["boundary"] = data
    rep.boundary = data
    for name, s in data.series.items():
        rep.series[name] = s
    for name, fit in data.fits.items():
        ctx.setdefault("fits", {})[name] = fit
    inv = data.invariants
    checks = {
        "eta0_xi0": inv["eta0_xi0_minus_1"] <= tol["invariants"],
        "gamma_xi0_xi0": inv["gamma_xi0_xi0"] <= tol["invariants"],
        "phi_xi0": inv["phi_xi0"] <= tol["invariants"],
        "eta0_phi": inv["eta0_phi"] <= tol["invariants"],
        "phi_sq": inv["phi_sq_plus_id"] <= tol["phi_identities"],
        "phi_cubed": inv["phi_cubed_plus_phi"] <= tol["phi_identities"],
        "gamma_phi": inv["gamma_phi_invariance"] <= tol["phi_identities"],
        "evolution": inv["phi_evolution_max"] <= tol["evolution"],
        "xi0_routes": inv["xi0_route_gap"] <= tol["xi0_routes"],
        "pinching": bool(data.diagnostics["pinching_holds"]),
    }
    summary = data.summary()
    summary["checks"] = {k: ("PASS" if v else "FAIL") for k, v in checks.items()}
    rep.stages["boundary"] = summary
    return all(checks.values())


def _stage_cr(cfg, ctx, rep):
    from .cr import cr_report

    tol = {k: cfg.tolerances[k] for k in ("contact", "levi", "reeb", "nijenhuis", "smoothness_budget")}
    res = cr_report(ctx["boundary"], tol=tol)
    rep.cr = res
    out = res.to_dict()
    out["regularity"] = "C1-consistent" if res.verdict["nijenhuis"] else "first differences above budget"
    rep.stages["cr"] = out
    return res.passed


def _stage_rates(cfg, ctx, rep):
    from .cr import expansion_residual
    from .models import GeometricModel
    from .rates import fit_decay

    fits = dict(ctx.get("fits", {}))
    if "boundary" in ctx:
        model = ctx.setdefault("model", GeometricModel(cfg.model, cfg.chart.h_x))
        floor = ctx["boundary"].diagnostics.get("decay_noise_floor", 1e-12)
        exp = expansion_residual(model, ctx["boundary"], window=cfg.rate_window,
                                 a_nominal=None if cfg.model.exact else cfg.model.a, noise_floor=floor)
        rep.series["g_minus_ghat"] = exp["series"]
        if exp["fit"] is not None:
            fits["g_minus_ghat"] = exp["fit"]
    table, ok = {}, True
    for name, fit in fits.items():
        ver = _classify(cfg, name, fit)
        table[name] = {"fit": fit.to_dict(), "verdict": None if ver is None else ver.to_dict()}
        if ver is not None:
            ok = ok and ver.passed
        rep.fit_tables[name] = fit
    rep.stages["rates"] = {"mode": cfg.rates_mode, "window": list(cfg.rate_window), "table": table}
    return ok


_RUNNERS = {"oracle": _stage_oracle, "deficits": _stage_deficits, "boundary": _stage_boundary,
            "cr": _stage_cr, "rates": _stage_rates}


def run(cfg: RunConfig, write: bool = True) -> RunReport:
    """Execute the configured stages in dependency order and persist the outputs."""
    rep = RunReport(cfg.raw)
    ctx: dict = {}
    for stage in cfg.stages:
        t0 = time.perf_counter()
        try:
            rep.verdicts[stage] = bool(_RUNNERS[stage](cfg, ctx, rep))
        except Exception as exc:  # recorded with the stage name; later stages that depend on it are skipped
            log.debug("stage %s failed", stage, exc_info=True)
            rep.errors[stage] = f"{type(exc).__name__}: {exc}"
            rep.timings[stage] = time.perf_counter() - t0
            break
        rep.timings[stage] = time.perf_counter() - t0
        log.info("stage %s: %s (%.2f s)", stage, "PASS" if rep.verdicts[stage] else "FAIL", rep.timings[stage])
    if write:
        write_outputs(cfg, rep)
    return rep


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


def write_outputs(cfg: RunConfig, rep: RunReport) -> None:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(rep.to_dict(), fh, indent=1)
    if cfg.formats in ("csv", "both"):
        for name, s in rep.series.items():
            _write_csv(out / f"series_{name}.csv", ("r", "value"), zip(s.r, s.values))
        for name, fit in rep.fit_tables.items():
            s = rep.series.get(name)
            if s is None:
                continue
            win = s.window(*fit.r_window)
            fitted = np.exp(fit.intercept - fit.slope * win.r) * ((1.0 + win.r) if fit.log_corrected else 1.0)
            _write_csv(out / f"fit_{name}.csv", ("r", "value", "fitted"), zip(win.r, win.values, fitted))
    if cfg.formats in ("json", "both") and rep.boundary is not None:
        rep.boundary.dump(out / "boundary_data.json")


# -- comparison ----------------------------------------------------------------------

def _load_run(obj) -> tuple[dict, dict | None]:
    if isinstance(obj, RunReport):
        bd = None if obj.boundary is None else obj.boundary.to_json()
        return obj.to_dict(), bd
    p = Path(obj)
    rpath = p / "report.json" if p.is_dir() else p
    with open(rpath) as fh:
        report = json.load(fh)
    bpath = rpath.parent / "boundary_data.json"
    bd = None
    if bpath.exists():
        with open(bpath) as fh:
            bd = json.load(fh)
    return report, bd


def compare_runs(a, b) -> dict:
    """Componentwise max differences of boundary fields and CR gaps between two runs.

    ``a`` and ``b`` are :class:`RunReport` objects, run directories or report paths.
    """
    ra, ba = _load_run(a)
    rb, bb = _load_run(b)
    ca, cb = ra.get("config", {}), rb.get("config", {})
    if ca.get("model") != cb.get("model") or ca.get("chart") != cb.get("chart"):
        raise ValueError("incomparable configs: model and chart blocks differ")
    diff: dict = {"fields": {}, "cr": {}}
    if ba is not None and bb is not None:
        for key in ("eta0", "gamma", "xi0", "phi"):
            diff["fields"][key] = float(np.max(np.abs(np.asarray(ba[key]) - np.asarray(bb[key]))))
    cra, crb = ra.get("cr"), rb.get("cr")
    if cra and crb:
        for key in ("levi_gap", "reeb_gap", "nijenhuis_gap", "levi_eigen_min", "contact_coefficient_min_abs"):
            if cra.get(key) is not None and crb.get(key) is not None:
                diff["cr"][key] = abs(cra[key] - crb[key])
    vals = list(diff["fields"].values())
    diff["max_field_diff"] = max(vals) if vals else None
    diff["seeds"] = [ca.get("seed"), cb.get("seed")]
    return diff


# -- entry point ---------------------------------------------------------------------

_SUBCOMMAND_STAGES = {
    "boundary": ("boundary",),
    "cr-check": ("boundary", "cr"),
    "rates": ("deficits", "boundary", "rates"),
    "run-all": None,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alch", description="Boundary-at-infinity pipeline for ALCH model metrics.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("validate-model", "boundary", "cr-check", "rates", "run-all"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("compare")
    p.add_argument("runs", nargs=2, help="two run directories or report.json paths")
    p.add_argument("--out", default=None, help="write the diff summary to this file")
    p.add_argument("--tol", type=float, default=1e-6, help="field difference threshold for the verdict")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "compare":
            diff = compare_runs(*args.runs)
            text = json.dumps(_clean(diff), indent=1)
            if args.out:
                Path(args.out).write_text(text)
            print(text)
            m = diff["max_field_diff"]
            return EXIT_PASS if m is None or m <= args.tol else EXIT_FAIL
        if args.command == "validate-model":
            with open(args.config) as fh:
                doc = json.load(fh)
            exact = dict(doc.get("model", {})).get("kind", "cph_horo") in ("cph_horo", "cph_polar")
            stages = ("oracle",) if exact else ("deficits",)
        else:
            stages = _SUBCOMMAND_STAGES[args.command]
        cfg = RunConfig.load(args.config, out=args.out, seed=args.seed, stages=stages)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        rep = run(cfg)
    except Exception:
        traceback.print_exc()
        return EXIT_ERROR
    for stage in cfg.stages:
        if stage in rep.errors:
            print(f"{stage}: ERROR {rep.errors[stage]}", file=sys.stderr)
        elif stage in rep.verdicts:
            print(f"{stage}: {'PASS' if rep.verdicts[stage] else 'FAIL'}")
    print(f"status: {rep.status} -> {cfg.output_dir / 'report.json'}")
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
