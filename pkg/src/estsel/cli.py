"""Command-line interface.

Subcommands cover the full workflow: ``evaluate`` prices an estimand grid
against a CSV dataset, ``select`` turns a finished grid into contour
bands and selected estimands, ``balance`` emits a covariate balance
table, ``simulate`` runs synthetic scenario studies, and
``verify-variance`` checks variance-optimality claims by Monte Carlo.

Every run writes a manifest echoing the fully resolved configuration plus
library versions and an input checksum, sufficient to reproduce the
artifacts byte for byte.  Exit codes: 2 configuration error, 3 data
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from importlib import metadata as _metadata
from pathlib import Path

import numpy as np
import scipy
import yaml

from .data import ColumnSchema, compute_smd, ingest_csv
from .errors import ConfigError, DataError, EstselError, NumericalError
from .estimands import EstimandSpec, build_grid, compute_weights, estimate_tau
from .evaluate import evaluate_grid, read_grid_csv
from .propensity import DesignSpec, fit_propensity
from .simulate import SimConfig, run_scenario, verify_min_variance
from .surfaces import (
    default_levels,
    extract_bands,
    interpolate_lattice,
    krige_se,
    raw_surface,
    select_estimands,
    smooth_pvalues,
)

logger = logging.getLogger(__name__)


def _package_version() -> str:
    try:
        return _metadata.version("estsel")
    except _metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# config handling


def _load_yaml(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"config root must be a mapping, got {type(cfg).__name__}")
    return cfg


class _Section:
    """A config mapping that tracks key consumption and rejects leftovers."""

    def __init__(self, mapping: dict, name: str):
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        self._map = dict(mapping)
        self._name = name

    def take(self, key: str, default=None):
        return self._map.pop(key, default)

    def require(self, key: str):
        if key not in self._map:
            raise ConfigError(f"missing required config key {self._name}{key!r}")
        return self._map.pop(key)

    def section(self, key: str) -> "_Section":
        return _Section(self.take(key, {}), f"{self._name}{key}.")

    def finish(self) -> None:
        if self._map:
            raise ConfigError(
                f"unknown config keys in {self._name or 'top level'}: "
                f"{sorted(self._map)}"
            )


def _parse_schema(section: _Section) -> ColumnSchema:
    treatment = section.require("treatment")
    outcome = section.require("outcome")
    covariates = section.require("covariates")
    if not isinstance(covariates, list) or not covariates:
        raise ConfigError("schema.covariates must be a non-empty list")
    categorical = section.take("categorical", []) or []
    t_levels = section.take("treatment_levels")
    o_levels = section.take("outcome_levels")
    section.finish()

    def pair(value, what):
        if value is None:
            return None
        if not isinstance(value, list) or len(value) != 2:
            raise ConfigError(f"{what} must be a [zero_level, one_level] pair")
        return (str(value[0]), str(value[1]))

    return ColumnSchema(
        treatment=str(treatment),
        outcome=str(outcome),
        covariates=tuple(str(c) for c in covariates),
        categorical=tuple(str(c) for c in categorical),
        treatment_levels=pair(t_levels, "schema.treatment_levels"),
        outcome_levels=pair(o_levels, "schema.outcome_levels"),
    )


def _parse_design(section: _Section) -> tuple[DesignSpec, float]:
    columns = section.take("columns")
    poly = section.take("poly", []) or []
    ridge = float(section.take("ridge", 0.0))
    section.finish()
    if columns is not None:
        columns = tuple(str(c) for c in columns)
    try:
        poly_terms = tuple((str(col), int(power)) for col, power in poly)
    except (TypeError, ValueError):
        raise ConfigError("design.poly must be a list of [column, power] pairs") from None
    return DesignSpec(columns=columns, poly=poly_terms), ridge


def _parse_axis(value, name: str):
    if value is None:
        return None
    if not isinstance(value, list) or len(value) < 1:
        raise ConfigError(f"grid.{name} must be a list of values")
    return np.asarray([float(v) for v in value])


def _parse_estimand(value) -> EstimandSpec:
    if isinstance(value, str):
        return EstimandSpec.from_alias(value)
    if isinstance(value, list) and len(value) == 2:
        return EstimandSpec(float(value[0]), float(value[1]))
    raise ConfigError(f"estimand must be an alias or a [c, d] pair, got {value!r}")


def _resolve_run_config(raw: dict) -> dict:
    """Validate an evaluate/select/balance config and fill in defaults."""
    top = _Section(raw, "")
    resolved: dict = {}
    resolved["input"] = str(top.require("input"))
    schema_section = top.section("schema")
    schema = _parse_schema(schema_section)
    resolved["schema"] = {
        "treatment": schema.treatment,
        "outcome": schema.outcome,
        "covariates": list(schema.covariates),
        "categorical": list(schema.categorical),
        "treatment_levels": (
            list(schema.treatment_levels) if schema.treatment_levels else None
        ),
        "outcome_levels": list(schema.outcome_levels) if schema.outcome_levels else None,
    }
    design_section = top.section("design")
    design, ridge = _parse_design(design_section)
    resolved["design"] = {
        "columns": list(design.columns) if design.columns is not None else None,
        "poly": [list(t) for t in design.poly],
        "ridge": ridge,
    }
    grid_section = top.section("grid")
    c_axis = _parse_axis(grid_section.take("c"), "c")
    d_axis = _parse_axis(grid_section.take("d"), "d")
    grid_section.finish()
    default_axis = np.linspace(0.0, 1.0, 21)
    resolved["grid"] = {
        "c": [float(v) for v in (c_axis if c_axis is not None else default_axis)],
        "d": [float(v) for v in (d_axis if d_axis is not None else default_axis)],
    }
    resolved["b_permutation"] = int(top.take("b_permutation", 1000))
    resolved["b_bootstrap"] = int(top.take("b_bootstrap", 1000))
    if "seed" not in raw:
        raise ConfigError("config must set an explicit seed")
    resolved["seed"] = int(top.require("seed"))
    resolved["standardize_covariates"] = bool(top.take("standardize_covariates", True))
    resolved["refit_bootstrap"] = bool(top.take("refit_bootstrap", True))
    levels = top.take("mismatch_levels")
    resolved["mismatch_levels"] = (
        [float(v) for v in levels] if levels is not None else default_levels()
    )
    resolved["resolution"] = int(top.take("resolution", 500))
    resolved["raw_contours"] = bool(top.take("raw_contours", False))
    estimand = top.take("estimand", "ato")
    spec = _parse_estimand(estimand)
    resolved["estimand"] = [spec.c, spec.d]
    resolved["out"] = top.take("out")
    top.finish()
    return resolved


def _schema_from_resolved(cfg: dict) -> ColumnSchema:
    s = cfg["schema"]
    return ColumnSchema(
        treatment=s["treatment"],
        outcome=s["outcome"],
        covariates=tuple(s["covariates"]),
        categorical=tuple(s["categorical"]),
        treatment_levels=tuple(s["treatment_levels"]) if s["treatment_levels"] else None,
        outcome_levels=tuple(s["outcome_levels"]) if s["outcome_levels"] else None,
    )


def _design_from_resolved(cfg: dict) -> DesignSpec:
    d = cfg["design"]
    return DesignSpec(
        columns=tuple(d["columns"]) if d["columns"] is not None else None,
        poly=tuple((c, p) for c, p in d["poly"]),
    )


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, command: str, config: dict, extra: dict | None = None):
    manifest = {
        "command": command,
        "config": config,
        "versions": {
            "estsel": _package_version(),
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    if extra:
        manifest.update(extra)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(cfg: dict, override: str | None, default: str) -> Path:
    out = override or cfg.get("out") or default
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_evaluate(config_path: str, out: str | None = None, seed: int | None = None) -> Path:
    """Evaluate the estimand grid on a dataset; write grid.csv and surfaces."""
    cfg = _resolve_run_config(_load_yaml(config_path))
    if seed is not None:
        cfg["seed"] = int(seed)
    out_dir = _out_dir(cfg, out, "estsel-run")
    data = ingest_csv(cfg["input"], _schema_from_resolved(cfg))
    logger.info(
        "dataset: n=%d (%d treated, %d control), %d covariate columns",
        data.n, data.n_treated, data.n_control, len(data.column_names),
    )
    ge = evaluate_grid(
        data,
        design=_design_from_resolved(cfg),
        grid=(np.asarray(cfg["grid"]["c"]), np.asarray(cfg["grid"]["d"])),
        B=cfg["b_permutation"],
        B_boot=cfg["b_bootstrap"],
        seed=cfg["seed"],
        standardize=cfg["standardize_covariates"],
        refit_bootstrap=cfg["refit_bootstrap"],
        ridge=cfg["design"]["ridge"],
    )
    ge.to_csv(out_dir / "grid.csv")
    with open(out_dir / "model.json", "w") as fh:
        fh.write(ge.model.to_json())
        fh.write("\n")
    resolution = cfg["resolution"]
    smooth_pvalues(ge, "mismatch", resolution).to_csv(out_dir / "surface_mismatch.csv")
    smooth_pvalues(ge, "statbias", resolution).to_csv(out_dir / "surface_statbias.csv")
    krige_se(ge, resolution).to_csv(out_dir / "surface_se.csv")
    _write_manifest(
        out_dir, "evaluate", cfg, {"input_sha256": _sha256(cfg["input"])}
    )
    logger.info("evaluate artifacts written to %s", out_dir)
    return out_dir


def cmd_select(
    config_path: str, out: str | None = None, run: str | None = None
) -> Path:
    """Contour bands and estimand selection from a finished grid run."""
    cfg = _resolve_run_config(_load_yaml(config_path))
    out_dir = _out_dir(cfg, out or run, "estsel-run")
    grid_path = out_dir / "grid.csv"
    if not grid_path.exists():
        raise DataError(
            f"{grid_path} not found; run `estsel evaluate` first or pass --run"
        )
    ge = read_grid_csv(grid_path)
    resolution = cfg["resolution"]
    levels = cfg["mismatch_levels"]
    mismatch = smooth_pvalues(ge, "mismatch", resolution)
    statbias = smooth_pvalues(ge, "statbias", resolution)
    se = krige_se(ge, resolution)
    tau = interpolate_lattice(ge, "tau", resolution)
    selection = select_estimands(
        mismatch, statbias, se, mismatch_levels=levels, tau=tau
    )

    payload = selection.to_json_dict()
    payload["mismatch_levels"] = list(levels)
    recommended = selection.recommended
    payload["recommended"] = recommended.to_json_dict() if recommended else None
    with open(out_dir / "selection.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    def band_payload(pairs):
        payload = {}
        for name, surface in pairs:
            bands = extract_bands(surface, levels)
            payload[name] = {
                "levels": list(levels),
                "bands": [
                    {
                        "lower": band.lower,
                        "upper": band.upper,
                        "empty": band.empty,
                        "polylines": [
                            [[round(float(x), 4), round(float(y), 4)] for x, y in line]
                            for line in band.polylines
                        ],
                    }
                    for band in bands
                ],
            }
        return payload

    contours = band_payload((("mismatch", mismatch), ("statbias", statbias)))
    with open(out_dir / "contours.json", "w") as fh:
        json.dump(contours, fh, sort_keys=True)
        fh.write("\n")
    if cfg["raw_contours"]:
        raw = band_payload(
            (("mismatch", raw_surface(ge, "mismatch")), ("statbias", raw_surface(ge, "statbias")))
        )
        with open(out_dir / "contours_raw.json", "w") as fh:
            json.dump(raw, fh, sort_keys=True)
            fh.write("\n")

    svg = _selection_figure(contours, selection)
    with open(out_dir / "figure.svg", "w") as fh:
        fh.write(svg)
    _write_manifest(out_dir, "select", cfg, {"grid_csv_sha256": _sha256(grid_path)})
    print(selection.to_table())
    logger.info("selection artifacts written to %s", out_dir)
    return out_dir


def cmd_balance(
    config_path: str, out: str | None = None, estimand: str | None = None
) -> Path:
    """Covariate balance (SMD) table before and after weighting."""
    cfg = _resolve_run_config(_load_yaml(config_path))
    if estimand is not None:
        spec = _parse_estimand(
            estimand if not ("," in estimand) else [v for v in estimand.split(",")]
        )
    else:
        spec = EstimandSpec(*cfg["estimand"])
    out_dir = _out_dir(cfg, out, "estsel-run")
    data = ingest_csv(cfg["input"], _schema_from_resolved(cfg))
    model = fit_propensity(
        data, _design_from_resolved(cfg), ridge=cfg["design"]["ridge"]
    )
    weights = compute_weights(model.fitted_scores, data.treatment, spec)
    report = compute_smd(data, weights)
    report.to_csv(out_dir / "balance.csv")
    est = estimate_tau(data, weights)
    print(f"estimand: {spec}")
    print(f"mean |SMD| after weighting: {report.mean_abs_smd:.4f}")
    print(f"max  |SMD| after weighting: {report.max_abs_smd:.4f}")
    print(
        f"effective sample size: treated {est.n_eff_treated:.1f}, "
        f"control {est.n_eff_control:.1f}"
    )
    _write_manifest(out_dir, "balance", cfg, {"input_sha256": _sha256(cfg["input"])})
    return out_dir


def _resolve_sim_config(raw: dict) -> dict:
    top = _Section(raw, "")
    resolved: dict = {}
    scenarios = top.require("scenarios")
    if not isinstance(scenarios, list) or not scenarios:
        raise ConfigError("scenarios must be a non-empty list")
    parsed = []
    for i, sc in enumerate(scenarios):
        sec = _Section(sc, f"scenarios[{i}].")
        name = str(sec.take("name", f"scenario{i}"))
        entry = {
            "name": name,
            "gamma": float(sec.take("gamma", 1.0)),
            "treated_fraction": float(sec.take("treated_fraction", 0.5)),
            "heterogeneity": str(sec.take("heterogeneity", "medium")),
            "delta_constant": float(sec.take("delta_constant", 1.0)),
            "delta_linear": [float(v) for v in sec.take("delta_linear", [0.0, 4.0])],
        }
        sec.finish()
        parsed.append(entry)
    if len({e["name"] for e in parsed}) != len(parsed):
        raise ConfigError("scenario names must be unique")
    resolved["scenarios"] = parsed
    resolved["n"] = int(top.take("n", 1000))
    resolved["replicates"] = int(top.require("replicates"))
    resolved["b_permutation"] = int(top.take("b_permutation", 500))
    resolved["b_bootstrap"] = int(top.take("b_bootstrap", 500))
    if "seed" not in raw:
        raise ConfigError("config must set an explicit seed")
    resolved["seed"] = int(top.require("seed"))
    grid_section = top.section("grid")
    c_axis = _parse_axis(grid_section.take("c"), "c")
    d_axis = _parse_axis(grid_section.take("d"), "d")
    grid_section.finish()
    default_axis = np.linspace(0.0, 1.0, 21)
    resolved["grid"] = {
        "c": [float(v) for v in (c_axis if c_axis is not None else default_axis)],
        "d": [float(v) for v in (d_axis if d_axis is not None else default_axis)],
    }
    levels = top.take("mismatch_levels")
    resolved["mismatch_levels"] = (
        [float(v) for v in levels] if levels is not None else default_levels()
    )
    resolved["resolution"] = int(top.take("resolution", 500))
    components = top.take("components", ["mismatch", "statbias", "bootstrap", "selection"])
    known = {"mismatch", "statbias", "bootstrap", "selection"}
    if not isinstance(components, list) or set(components) - known:
        raise ConfigError(f"components must be a subset of {sorted(known)}")
    resolved["components"] = sorted(set(components))
    resolved["threads"] = int(top.take("threads", 1))
    resolved["mc_truth"] = int(top.take("mc_truth", 1_000_000))
    resolved["out"] = top.take("out")
    top.finish()
    return resolved


def cmd_simulate(config_path: str, out: str | None = None, threads: int | None = None) -> Path:
    """Run synthetic scenario studies; one summary table per scenario."""
    cfg = _resolve_sim_config(_load_yaml(config_path))
    if threads is not None:
        cfg["threads"] = int(threads)
    out_dir = _out_dir(cfg, out, "estsel-sim")
    comp = set(cfg["components"])
    for entry in cfg["scenarios"]:
        sim_cfg = SimConfig(
            gamma=entry["gamma"],
            treated_fraction=entry["treated_fraction"],
            heterogeneity=entry["heterogeneity"],
            n=cfg["n"],
            seed=cfg["seed"],
            delta_constant=entry["delta_constant"],
            delta_linear=tuple(entry["delta_linear"]),
        )
        logger.info("running scenario %s", entry["name"])
        result = run_scenario(
            sim_cfg,
            replicates=cfg["replicates"],
            grid=(np.asarray(cfg["grid"]["c"]), np.asarray(cfg["grid"]["d"])),
            B=cfg["b_permutation"],
            B_boot=cfg["b_bootstrap"],
            seed=cfg["seed"],
            levels=cfg["mismatch_levels"],
            resolution=cfg["resolution"],
            with_mismatch="mismatch" in comp,
            with_statbias="statbias" in comp,
            with_bootstrap="bootstrap" in comp,
            with_selection="selection" in comp,
            mc_truth=cfg["mc_truth"],
            threads=cfg["threads"],
        )
        sc_dir = out_dir / entry["name"]
        sc_dir.mkdir(parents=True, exist_ok=True)
        result.to_csv(sc_dir / "table.csv")
        if result.mean_p_mismatch is not None or result.mean_p_statbias is not None:
            with open(sc_dir / "mean_pvalues.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["c", "d", "mean_p_mismatch", "mean_p_statbias"])
                pm = result.mean_p_mismatch
                ps = result.mean_p_statbias
                k = 0
                for ci in result.c_values:
                    for dj in result.d_values:
                        writer.writerow(
                            [
                                repr(float(ci)),
                                repr(float(dj)),
                                repr(float(pm[k])) if pm is not None else "",
                                repr(float(ps[k])) if ps is not None else "",
                            ]
                        )
                        k += 1
        summary = {
            "scenario": entry["name"],
            "n_ok": result.n_ok,
            "failures": list(result.failures),
            "tau_true_ate": result.tau_true_ate,
            "tau_true_ato": result.tau_true_ato,
        }
        with open(sc_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    _write_manifest(out_dir, "simulate", cfg)
    logger.info("simulation artifacts written to %s", out_dir)
    return out_dir


def _resolve_variance_config(raw: dict) -> dict:
    top = _Section(raw, "")
    resolved = {
        "case": str(top.take("case", "homoscedastic")),
        "gamma": float(top.take("gamma", 1.0)),
        "treated_fraction": float(top.take("treated_fraction", 0.5)),
        "v": float(top.take("v", 1.0)),
        "mc_samples": int(top.take("mc_samples", 1_000_000)),
        "seed": int(top.take("seed", 0)),
        "candidates": str(top.take("candidates", "grid")),
        "out": top.take("out"),
    }
    h_star = top.take("h_star")
    top.finish()
    if resolved["case"] not in ("homoscedastic", "constant-k"):
        raise ConfigError(
            f"case must be 'homoscedastic' or 'constant-k', got {resolved['case']!r}"
        )
    if resolved["candidates"] not in ("grid", "corners"):
        raise ConfigError("candidates must be 'grid' or 'corners'")
    if h_star is None:
        h_star = [1.0, 1.0] if resolved["case"] == "homoscedastic" else None
    if h_star is None:
        raise ConfigError("case 'constant-k' requires h_star: [a, b] powers")
    if not isinstance(h_star, list) or len(h_star) != 2:
        raise ConfigError("h_star must be an [a, b] pair of powers")
    resolved["h_star"] = [float(h_star[0]), float(h_star[1])]
    return resolved


def cmd_verify_variance(config_path: str, out: str | None = None) -> dict:
    """Monte Carlo verification of a variance-optimality claim."""
    cfg = _resolve_variance_config(_load_yaml(config_path))
    sim_cfg = SimConfig(
        gamma=cfg["gamma"], treated_fraction=cfg["treated_fraction"]
    )
    a, b = cfg["h_star"]

    def h_star(e, a=a, b=b):
        return np.power(e, a) * np.power(1.0 - e, b)

    if cfg["case"] == "homoscedastic":
        k0 = lambda e: e  # noqa: E731
        k1 = lambda e: 1.0 - e  # noqa: E731
    else:
        k0 = lambda e: np.ones_like(e)  # noqa: E731
        k1 = lambda e: np.ones_like(e)  # noqa: E731

    if cfg["candidates"] == "grid":
        candidates: list = list(build_grid())
    else:
        candidates = [EstimandSpec.from_alias(al) for al in ("ate", "att", "atc", "ato")]
    candidates.append((f"h*=e^{a:g}(1-e)^{b:g}", h_star))

    report = verify_min_variance(
        sim_cfg,
        h_star,
        k0,
        k1,
        cfg["v"],
        candidates,
        mc_samples=cfg["mc_samples"],
        seed=cfg["seed"],
    )
    payload = report.to_json_dict()
    payload["config"] = cfg
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    target = out or cfg.get("out")
    if target:
        Path(target).parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w") as fh:
            fh.write(text)
        logger.info("variance report written to %s", target)
    else:
        sys.stdout.write(text)
    return payload


# ---------------------------------------------------------------------------
# SVG rendering


_PALETTE = (
    "#67001f", "#b2182b", "#d6604d", "#f4a582", "#fddbc7", "#f7f7f7",
    "#d1e5f0", "#92c5de", "#4393c3", "#2166ac", "#053061", "#334455",
    "#112233",
)


def _selection_figure(contours: dict, selection) -> str:
    """Two-panel SVG: band boundaries for both surfaces, selections marked."""
    size, margin, gap = 360, 50, 60
    width = 2 * size + 3 * margin + gap
    height = size + 2 * margin + 40

    def sx(panel: int, c: float) -> float:
        x0 = margin + panel * (size + gap + margin)
        return x0 + c * size

    def sy(d: float) -> float:
        return margin + (1.0 - d) * size

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    titles = ("estimand mismatch p", "statistical bias p")
    for panel, (name, title) in enumerate(zip(("mismatch", "statbias"), titles)):
        x0 = margin + panel * (size + gap + margin)
        parts.append(
            f'<rect x="{x0}" y="{margin}" width="{size}" height="{size}" '
            f'fill="none" stroke="#333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x0 + size / 2:.1f}" y="{margin - 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>'
        )
        for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
            parts.append(
                f'<text x="{sx(panel, tick):.1f}" y="{margin + size + 18}" '
                f'text-anchor="middle" font-family="sans-serif" font-size="11">'
                f"{tick:g}</text>"
            )
            parts.append(
                f'<text x="{x0 - 8:.1f}" y="{sy(tick) + 4:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="11">{tick:g}</text>'
            )
        parts.append(
            f'<text x="{x0 + size / 2:.1f}" y="{margin + size + 36}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="13">c</text>'
        )
        parts.append(
            f'<text x="{x0 - 32:.1f}" y="{margin + size / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">d</text>'
        )
        for k, band in enumerate(contours[name]["bands"]):
            color = _PALETTE[k % len(_PALETTE)]
            for line in band["polylines"]:
                if len(line) < 2:
                    continue
                points = " ".join(
                    f"{sx(panel, x):.2f},{sy(y):.2f}" for x, y in line
                )
                parts.append(
                    f'<polyline points="{points}" fill="none" stroke="{color}" '
                    f'stroke-width="1.2"/>'
                )
    for entry in selection.entries:
        color = "#d62728" if entry.recommended else "#111111"
        x, y = sx(0, entry.spec.c), sy(entry.spec.d)
        parts.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{color}" '
            f'stroke="white" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x + 6:.2f}" y="{y - 6:.2f}" font-family="sans-serif" '
            f'font-size="10" fill="{color}">({entry.spec.c:.2f},{entry.spec.d:.2f})'
            f"</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="estsel",
        description=(
            "Estimand selection for causal inference under limited overlap: "
            "evaluate a family of weighted estimands, test each for estimand "
            "mismatch and residual statistical bias, and select the best "
            "supported targets."
        ),
    )
    parser.add_argument("--version", action="version", version=_package_version())
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="evaluate the estimand grid on a dataset")
    p_eval.add_argument("--config", required=True, help="YAML run configuration")
    p_eval.add_argument("--out", default=None, help="output directory (overrides config)")
    p_eval.add_argument(
        "--seed", type=int, default=None, help="master seed (overrides config)"
    )

    p_sel = sub.add_parser("select", help="contour bands and selection from a grid run")
    p_sel.add_argument("--config", required=True, help="YAML run configuration")
    p_sel.add_argument("--out", default=None, help="output directory (overrides config)")
    p_sel.add_argument("--run", default=None, help="directory holding grid.csv")

    p_bal = sub.add_parser("balance", help="covariate balance table for one estimand")
    p_bal.add_argument("--config", required=True, help="YAML run configuration")
    p_bal.add_argument("--out", default=None, help="output CSV path (default: stdout)")
    p_bal.add_argument("--estimand", default=None, help="alias or 'c,d'")

    p_sim = sub.add_parser("simulate", help="synthetic scenario studies")
    p_sim.add_argument("--config", required=True, help="YAML scenario configuration")
    p_sim.add_argument("--out", default=None, help="output directory (overrides config)")
    p_sim.add_argument(
        "--threads", type=int, default=None, help="worker threads (overrides config)"
    )

    p_var = sub.add_parser(
        "verify-variance", help="Monte Carlo check of variance-optimality claims"
    )
    p_var.add_argument("--config", required=True, help="YAML verification configuration")
    p_var.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "evaluate":
            cmd_evaluate(args.config, out=args.out, seed=args.seed)
        elif args.command == "select":
            cmd_select(args.config, out=args.out, run=args.run)
        elif args.command == "balance":
            cmd_balance(args.config, out=args.out, estimand=args.estimand)
        elif args.command == "simulate":
            cmd_simulate(args.config, out=args.out, threads=args.threads)
        elif args.command == "verify-variance":
            cmd_verify_variance(args.config, out=args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 4
    except EstselError as exc:  # pragma: no cover -- base-class safety net
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
