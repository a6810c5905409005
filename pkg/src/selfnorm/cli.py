"""Batch experiment runner.

Reads a flat INI-style config describing one model and one experiment,
executes the selected suite, and writes five kinds of artifact into the
output directory: ``results.csv`` (fixed, versioned schema), ``results.json``
(the same records plus every inequality report and the resolved config),
``report.txt`` (human-readable), gnuplot-compatible ``.dat`` files, and
rendered ``.png`` figures.

Exit codes: 0 when every asserted check passed, 1 when at least one failed
(the report lists which), 2 on unusable input (config parse or validation
error, reported with line and column).

Config schema (all keys in two sections; comments start with '#' or ';'):

  [model]
  kind = iid | moving-average | graph-edge-sum
  family = rademacher | uniform_centered | exponential_centered |
           two_point_asymmetric | pareto_centered
  scale = 1.0            # innovation scale, > 0
  p = 0.3                # two_point_asymmetric only
  alpha = 4.5            # pareto_centered only, > 2
  dimension = 2          # lattice rank for moving-average (default 1)
  radius = 1             # moving-average window radius, >= 0
  coefficients = 1, 1, 1 # moving-average window, (2*radius+1)^dimension values
  generator = cycle | path | matching   # built-in graph families
  edges = graph.txt      # or an explicit edge-list file
  vertices = 100         # vertex count when edges= is used
  label = my-model       # optional; names the CSV group column

  [experiment]
  statistic = W | Wbar | Wtilde
  sweep = 64, 128, 256   # sizes: lattice sides or vertex counts
  replications = 20000
  seed = 0               # u64; --seed and SELFNORM_SEED override
  delta = 0.01           # DKW confidence parameter
  constant = 1.0         # theorem constant C for bound columns
  suite = rate           # optional; used when run() is called without a suite

The seed resolves as: --seed flag, then SELFNORM_SEED, then the config
value.  Workers resolve as: --workers flag, then SELFNORM_WORKERS, then 1;
the worker count never changes any output byte, only wall-clock time.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .bounds import (
    BoundComponents,
    compute_components,
    lemma_oracle_41,
    lemma_oracle_42,
    lemma_oracle_43,
    remark_inequalities,
    theorem1_rhs,
    theorem2_rhs,
    theorem3_rhs,
)
from .dependence import (
    cycle_edges,
    matching_edges,
    neighborhood_stats,
    path_edges,
    read_edge_list,
)
from .errors import NoiseDominatedError, UnsupportedMomentError
from .models import FieldModel, InnovationSpec, edge_sum_model, iid_model, moving_average_model
from .montecarlo import (
    STATISTIC_KINDS,
    ExperimentRecord,
    dkw_band,
    ks_distance_vs_normal,
    rate_fit,
    run_experiment,
    truncation_gap_check,
)
from . import plotting

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "SCHEMA_VERSION",
    "SUITES",
    "build_model",
    "calibrate_constant",
    "load_config",
    "main",
    "run",
]

SCHEMA_VERSION = "v1"
CSV_COLUMNS = ("n", "R", "kind", "ks", "dkw", "bound", "group", "seed", "schema")
SUITES = ("simulate", "rate", "verify", "bound", "calibrate")
ENV_SEED = "SELFNORM_SEED"
ENV_WORKERS = "SELFNORM_WORKERS"

_FAMILIES = (
    "rademacher",
    "uniform_centered",
    "exponential_centered",
    "two_point_asymmetric",
    "pareto_centered",
)
_KINDS = ("iid", "moving-average", "graph-edge-sum")
_GENERATORS = ("cycle", "path", "matching")


class ConfigError(Exception):
    """Config problem with a source position; the CLI maps it to exit 2."""

    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


# ---------------------------------------------------------------------------
# INI parsing
# ---------------------------------------------------------------------------

class _Raw:
    """A raw config value plus where it came from, for error reporting."""

    __slots__ = ("text", "line", "column")

    def __init__(self, text: str, line: int, column: int):
        self.text = text
        self.line = line
        self.column = column


def _parse_ini(text: str) -> dict[str, dict[str, _Raw]]:
    sections: dict[str, dict[str, _Raw]] = {}
    current: dict[str, _Raw] | None = None
    current_name = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped[0] in "#;":
            continue
        indent = len(raw) - len(raw.lstrip())
        if stripped.startswith("["):
            if not stripped.endswith("]") or len(stripped) < 3:
                raise ConfigError(lineno, indent + 1, "malformed section header")
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(lineno, indent + 2, "empty section name")
            if name in sections:
                raise ConfigError(lineno, indent + 1, f"duplicate section [{name}]")
            current = {}
            current_name = name
            sections[name] = current
            continue
        if current is None:
            raise ConfigError(lineno, indent + 1, "key outside any [section]")
        if "=" not in stripped:
            raise ConfigError(lineno, indent + 1, "expected 'key = value'")
        key_part, value_part = raw.split("=", 1)
        key = key_part.strip()
        if not key:
            raise ConfigError(lineno, indent + 1, "empty key")
        value = value_part.strip()
        if not value:
            raise ConfigError(lineno, raw.index("=") + 2, f"empty value for '{key}'")
        if key in current:
            raise ConfigError(lineno, indent + 1,
                              f"duplicate key '{key}' in [{current_name}]")
        column = raw.index(value_part.lstrip()[0], raw.index("=")) + 1
        current[key] = _Raw(value, lineno, column)
    return sections


def _take(section: dict[str, _Raw], key: str) -> _Raw | None:
    return section.pop(key, None)


def _as_choice(raw: _Raw, key: str, choices) -> str:
    if raw.text not in choices:
        raise ConfigError(raw.line, raw.column,
                          f"{key} must be one of {', '.join(choices)}")
    return raw.text


def _as_int(raw: _Raw, key: str, low: int | None = None, high: int | None = None) -> int:
    try:
        value = int(raw.text)
    except ValueError:
        raise ConfigError(raw.line, raw.column, f"{key} must be an integer") from None
    if low is not None and value < low:
        raise ConfigError(raw.line, raw.column, f"{key} must be >= {low}")
    if high is not None and value > high:
        raise ConfigError(raw.line, raw.column, f"{key} must be <= {high}")
    return value


def _as_float(raw: _Raw, key: str) -> float:
    try:
        value = float(raw.text)
    except ValueError:
        raise ConfigError(raw.line, raw.column, f"{key} must be a number") from None
    if not math.isfinite(value):
        raise ConfigError(raw.line, raw.column, f"{key} must be finite")
    return value


def _as_int_list(raw: _Raw, key: str, low: int = 1) -> tuple[int, ...]:
    out = []
    for piece in raw.text.split(","):
        piece = piece.strip()
        try:
            value = int(piece)
        except ValueError:
            raise ConfigError(raw.line, raw.column,
                              f"{key} must be comma-separated integers") from None
        if value < low:
            raise ConfigError(raw.line, raw.column, f"{key} entries must be >= {low}")
        out.append(value)
    return tuple(out)


def _as_float_list(raw: _Raw, key: str) -> tuple[float, ...]:
    out = []
    for piece in raw.text.split(","):
        try:
            out.append(float(piece.strip()))
        except ValueError:
            raise ConfigError(raw.line, raw.column,
                              f"{key} must be comma-separated numbers") from None
    return tuple(out)


# ---------------------------------------------------------------------------
# Typed config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One resolved model + experiment description."""

    kind: str
    family: str
    scale: float
    p: float | None
    alpha: float | None
    dimension: int
    radius: int | None
    coefficients: tuple[float, ...] | None
    generator: str | None
    edges_path: str | None
    vertices: int | None
    label: str
    statistic: str
    sweep: tuple[int, ...]
    replications: int
    seed: int
    delta: float
    constant: float
    suite: str | None

    def to_dict(self) -> dict:
        model = {"kind": self.kind, "family": self.family, "scale": self.scale,
                 "label": self.label}
        if self.p is not None:
            model["p"] = self.p
        if self.alpha is not None:
            model["alpha"] = self.alpha
        if self.kind == "moving-average":
            model["dimension"] = self.dimension
            model["radius"] = self.radius
            model["coefficients"] = list(self.coefficients)
        if self.kind == "graph-edge-sum":
            if self.generator is not None:
                model["generator"] = self.generator
            if self.edges_path is not None:
                model["edges"] = self.edges_path
                model["vertices"] = self.vertices
        return {
            "model": model,
            "experiment": {
                "statistic": self.statistic,
                "sweep": list(self.sweep),
                "replications": self.replications,
                "seed": self.seed,
                "delta": self.delta,
                "constant": self.constant,
            },
        }


def _reject_unknown(sections: dict[str, dict[str, _Raw]]) -> None:
    for name, body in sections.items():
        for key, raw in body.items():
            raise ConfigError(raw.line, raw.column,
                              f"unknown key '{key}' in [{name}]")


def _build_config(sections: dict[str, dict[str, _Raw]]) -> ExperimentConfig:
    for name in sections:
        if name not in ("model", "experiment"):
            raise ConfigError(1, 1, f"unknown section [{name}]")
    model = sections.get("model")
    experiment = sections.get("experiment")
    if model is None:
        raise ConfigError(1, 1, "missing [model] section")
    if experiment is None:
        raise ConfigError(1, 1, "missing [experiment] section")

    kind_raw = _take(model, "kind")
    if kind_raw is None:
        raise ConfigError(1, 1, "missing 'kind' in [model]")
    kind = _as_choice(kind_raw, "kind", _KINDS)
    family_raw = _take(model, "family")
    if family_raw is None:
        raise ConfigError(kind_raw.line, kind_raw.column, "missing 'family' in [model]")
    family = _as_choice(family_raw, "family", _FAMILIES)

    scale_raw = _take(model, "scale")
    scale = _as_float(scale_raw, "scale") if scale_raw else 1.0
    if scale <= 0:
        raise ConfigError(scale_raw.line, scale_raw.column, "scale must be > 0")

    p = alpha = None
    p_raw = _take(model, "p")
    if family == "two_point_asymmetric":
        if p_raw is None:
            raise ConfigError(family_raw.line, family_raw.column,
                              "two_point_asymmetric needs 'p'")
        p = _as_float(p_raw, "p")
        if not 0.0 < p < 1.0:
            raise ConfigError(p_raw.line, p_raw.column, "p must lie in (0, 1)")
    elif p_raw is not None:
        raise ConfigError(p_raw.line, p_raw.column, f"'p' is not used by {family}")
    alpha_raw = _take(model, "alpha")
    if family == "pareto_centered":
        if alpha_raw is None:
            raise ConfigError(family_raw.line, family_raw.column,
                              "pareto_centered needs 'alpha'")
        alpha = _as_float(alpha_raw, "alpha")
        if alpha <= 2.0:
            raise ConfigError(alpha_raw.line, alpha_raw.column,
                              "alpha must be > 2 (finite variance)")
    elif alpha_raw is not None:
        raise ConfigError(alpha_raw.line, alpha_raw.column,
                          f"'alpha' is not used by {family}")

    dimension = 1
    radius = None
    coefficients = None
    generator = None
    edges_path = None
    vertices = None

    dim_raw = _take(model, "dimension")
    radius_raw = _take(model, "radius")
    coef_raw = _take(model, "coefficients")
    gen_raw = _take(model, "generator")
    edges_raw = _take(model, "edges")
    vertices_raw = _take(model, "vertices")

    if kind == "moving-average":
        if dim_raw is not None:
            dimension = _as_int(dim_raw, "dimension", low=1, high=4)
        if radius_raw is None:
            raise ConfigError(kind_raw.line, kind_raw.column,
                              "moving-average needs 'radius'")
        radius = _as_int(radius_raw, "radius", low=0)
        if coef_raw is None:
            raise ConfigError(kind_raw.line, kind_raw.column,
                              "moving-average needs 'coefficients'")
        coefficients = _as_float_list(coef_raw, "coefficients")
        expected = (2 * radius + 1) ** dimension
        if len(coefficients) != expected:
            raise ConfigError(coef_raw.line, coef_raw.column,
                              f"need {expected} coefficients for radius {radius} "
                              f"in dimension {dimension}, got {len(coefficients)}")
    else:
        for raw, key in ((dim_raw, "dimension"), (radius_raw, "radius"),
                         (coef_raw, "coefficients")):
            if raw is not None:
                raise ConfigError(raw.line, raw.column,
                                  f"'{key}' is only used by moving-average")

    if kind == "graph-edge-sum":
        if gen_raw is not None and edges_raw is not None:
            raise ConfigError(edges_raw.line, edges_raw.column,
                              "give either 'generator' or 'edges', not both")
        if gen_raw is not None:
            generator = _as_choice(gen_raw, "generator", _GENERATORS)
        elif edges_raw is not None:
            edges_path = edges_raw.text
            if not Path(edges_path).is_file():
                raise ConfigError(edges_raw.line, edges_raw.column,
                                  f"edge-list file not found: {edges_path}")
            if vertices_raw is None:
                raise ConfigError(edges_raw.line, edges_raw.column,
                                  "'edges' needs 'vertices'")
            vertices = _as_int(vertices_raw, "vertices", low=1)
            vertices_raw = None
        else:
            raise ConfigError(kind_raw.line, kind_raw.column,
                              "graph-edge-sum needs 'generator' or 'edges'")
    else:
        for raw, key in ((gen_raw, "generator"), (edges_raw, "edges"),
                         (vertices_raw, "vertices")):
            if raw is not None:
                raise ConfigError(raw.line, raw.column,
                                  f"'{key}' is only used by graph-edge-sum")
    if vertices_raw is not None:
        raise ConfigError(vertices_raw.line, vertices_raw.column,
                          "'vertices' is only used with 'edges'")

    label_raw = _take(model, "label")
    label = label_raw.text if label_raw else f"{kind}-{family}"

    statistic_raw = _take(experiment, "statistic")
    statistic = (_as_choice(statistic_raw, "statistic", STATISTIC_KINDS)
                 if statistic_raw else "W")
    sweep_raw = _take(experiment, "sweep")
    if sweep_raw is None:
        raise ConfigError(1, 1, "missing 'sweep' in [experiment]")
    sweep = _as_int_list(sweep_raw, "sweep", low=1)
    if edges_path is not None and sweep != (vertices,):
        raise ConfigError(sweep_raw.line, sweep_raw.column,
                          "with a fixed edge list, sweep must equal 'vertices'")
    repl_raw = _take(experiment, "replications")
    if repl_raw is None:
        raise ConfigError(sweep_raw.line, sweep_raw.column,
                          "missing 'replications' in [experiment]")
    replications = _as_int(repl_raw, "replications", low=1)
    seed_raw = _take(experiment, "seed")
    seed = _as_int(seed_raw, "seed", low=0, high=2**64 - 1) if seed_raw else 0
    delta_raw = _take(experiment, "delta")
    delta = _as_float(delta_raw, "delta") if delta_raw else 0.01
    if not 0.0 < delta < 1.0:
        raise ConfigError(delta_raw.line, delta_raw.column, "delta must lie in (0, 1)")
    constant_raw = _take(experiment, "constant")
    constant = _as_float(constant_raw, "constant") if constant_raw else 1.0
    if constant <= 0:
        raise ConfigError(constant_raw.line, constant_raw.column,
                          "constant must be > 0")
    suite_raw = _take(experiment, "suite")
    suite = _as_choice(suite_raw, "suite", SUITES) if suite_raw else None

    _reject_unknown(sections)
    return ExperimentConfig(
        kind=kind, family=family, scale=scale, p=p, alpha=alpha,
        dimension=dimension, radius=radius, coefficients=coefficients,
        generator=generator, edges_path=edges_path, vertices=vertices,
        label=label, statistic=statistic, sweep=sweep,
        replications=replications, seed=seed, delta=delta,
        constant=constant, suite=suite,
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError on any problem."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(0, 0, f"cannot read config: {exc}") from None
    return _build_config(_parse_ini(text))


# ---------------------------------------------------------------------------
# Model construction
# ---------------------------------------------------------------------------

def build_model(cfg: ExperimentConfig, n: int) -> FieldModel:
    """The configured model at sweep point n (a side length or vertex count)."""
    innovations = InnovationSpec(cfg.family, scale=cfg.scale, p=cfg.p, alpha=cfg.alpha)
    if cfg.kind == "iid":
        return iid_model(n, innovations, label=cfg.label)
    if cfg.kind == "moving-average":
        return moving_average_model([n] * cfg.dimension, cfg.radius,
                                    cfg.coefficients, innovations, label=cfg.label)
    if cfg.edges_path is not None:
        edges = read_edge_list(cfg.edges_path)
        return edge_sum_model(edges, cfg.vertices, innovations, label=cfg.label)
    builder = {"cycle": cycle_edges, "path": path_edges,
               "matching": matching_edges}[cfg.generator]
    return edge_sum_model(builder(n), n, innovations, label=cfg.label)


# ---------------------------------------------------------------------------
# Suite execution
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(rows: list[dict]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_format_cell(row[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def _record_row(record: ExperimentRecord, group: str) -> dict:
    return {
        "n": record.n,
        "R": record.replications,
        "kind": record.statistic_kind,
        "ks": record.ks_estimate,
        "dkw": record.dkw_band,
        "bound": record.bound_value,
        "group": group,
        "seed": record.seed,
        "schema": SCHEMA_VERSION,
    }


def _record_dict(record: ExperimentRecord) -> dict:
    return {
        "n": record.n,
        "replications": record.replications,
        "seed": record.seed,
        "ks": record.ks_estimate,
        "dkw": record.dkw_band,
        "bound": record.bound_value,
        "statistic": record.statistic_kind,
    }


def _run_points(cfg: ExperimentConfig, seed: int, workers: int):
    """One experiment per sweep point, concurrently across points.

    Returns (records, distributions) in sweep order.  Single-point sweeps
    parallelize inside the experiment instead, so either way the worker
    budget is used and the results match the workers=1 run byte for byte.
    """
    def one(n: int, inner: int):
        model = build_model(cfg, n)
        dist = run_experiment(model, cfg.statistic, cfg.replications, seed,
                              workers=inner)
        ks = ks_distance_vs_normal(dist)
        record = ExperimentRecord(
            n=model.structure.size, replications=cfg.replications, seed=seed,
            ks_estimate=ks, dkw_band=dkw_band(cfg.replications, cfg.delta),
            bound_value=None, statistic_kind=cfg.statistic,
        )
        return record, dist

    if len(cfg.sweep) == 1 or workers == 1:
        pairs = [one(n, workers) for n in cfg.sweep]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(lambda n: one(n, 1), cfg.sweep))
    return [p[0] for p in pairs], [p[1] for p in pairs]


def _components_for(model: FieldModel, cfg: ExperimentConfig, seed: int,
                    workers: int) -> BoundComponents:
    return compute_components(model, replications=cfg.replications, seed=seed,
                              workers=workers)


def _theorem_bound(cfg: ExperimentConfig, model: FieldModel,
                   comps: BoundComponents) -> tuple[float | None, str]:
    """The matching theorem RHS for this model kind, or None with a reason."""
    try:
        if cfg.kind == "moving-average":
            comps.require("gamma")
            return theorem2_rhs(comps.gamma, 2 * cfg.radius, cfg.dimension,
                                comps.size_j, cfg.constant), "theorem-2"
        if cfg.kind == "graph-edge-sum":
            comps.require("gamma")
            stats = neighborhood_stats(model.structure)
            return theorem3_rhs(comps.gamma, stats.kappa1, comps.size_j,
                                cfg.constant), "theorem-3"
        return theorem1_rhs(comps, comps.size_j, cfg.constant), "theorem-1"
    except UnsupportedMomentError as exc:
        return None, f"unavailable ({exc})"


def _suite_simulate(cfg, seed, workers, out):
    records, dists = _run_points(cfg, seed, workers)
    rows = [_record_row(r, cfg.label) for r in records]
    lines = []
    for record, dist in zip(records, dists):
        xs, heights = plotting.thinned_ecdf(dist)
        plotting.write_xy_data(out / f"ecdf_n{record.n}.dat", xs, heights,
                               comment=f"{cfg.label}: empirical CDF, n={record.n}")
        plotting.distribution_figure(out / f"ecdf_n{record.n}.png", dist,
                                     label=f"{cfg.label}, n={record.n}")
        lines.append(
            f"n={record.n}: ks={record.ks_estimate:.6g} "
            f"dkw={record.dkw_band:.6g} degenerate={dist.degenerate_count}"
        )
    payload = {"records": [_record_dict(r) for r in records]}
    return rows, payload, lines, []


def _suite_rate(cfg, seed, workers, out):
    records, _ = _run_points(cfg, seed, workers)
    rows = [_record_row(r, cfg.label) for r in records]
    lines = [
        f"n={r.n}: ks={r.ks_estimate:.6g} dkw={r.dkw_band:.6g}" for r in records
    ]
    failures = []
    fit = None
    payload = {"records": [_record_dict(r) for r in records], "rate_fit": None}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            fit = rate_fit(records)
        except NoiseDominatedError as exc:
            failures.append("rate-fit-noise-dominated")
            lines.append(f"rate fit failed: {exc}")
    for w in caught:
        lines.append(f"note: {w.message}")
    if fit is not None:
        payload["rate_fit"] = {
            "slope": fit.slope, "intercept": fit.intercept,
            "r_squared": fit.r_squared, "used_sizes": list(fit.used_sizes),
            "excluded_sizes": list(fit.excluded_sizes),
        }
        lines.append(
            f"rate fit: slope={fit.slope:.4f} intercept={fit.intercept:.4f} "
            f"r2={fit.r_squared:.4f} used={list(fit.used_sizes)}"
        )
    plotting.write_xy_data(out / "rate.dat",
                           [r.n for r in records], [r.ks_estimate for r in records],
                           comment=f"{cfg.label}: KS distance by size")
    plotting.rate_figure(out / "rate.png", records, fit, label=cfg.label)
    return rows, payload, lines, failures


def _verify_reports(model: FieldModel, cfg: ExperimentConfig, seed: int,
                    workers: int) -> list:
    reports = []
    reports.extend(lemma_oracle_41(model, replications=cfg.replications,
                                   seed=seed, workers=workers))
    reports.append(lemma_oracle_42(model, "clip", replications=cfg.replications,
                                   seed=seed, workers=workers))
    reports.extend(lemma_oracle_43(model, replications=cfg.replications,
                                   seed=seed, workers=workers))
    reports.append(truncation_gap_check(model, cfg.replications, seed,
                                        workers=workers, delta=cfg.delta))
    reports.extend(remark_inequalities(
        compute_components(model, replications=cfg.replications, seed=seed,
                           workers=workers)))
    return reports


def _suite_verify(cfg, seed, workers, out):
    records, _ = _run_points(cfg, seed, workers)
    rows = []
    lines = []
    failures = []
    all_reports = []
    for record, n in zip(records, cfg.sweep):
        model = build_model(cfg, n)
        comps = _components_for(model, cfg, seed, workers)
        bound, bound_name = _theorem_bound(cfg, model, comps)
        rows.append(_record_row(ExperimentRecord(
            n=record.n, replications=record.replications, seed=record.seed,
            ks_estimate=record.ks_estimate, dkw_band=record.dkw_band,
            bound_value=bound, statistic_kind=record.statistic_kind,
        ), cfg.label))
        reports = _verify_reports(model, cfg, seed, workers)
        all_reports.append({"n": record.n,
                            "reports": [r.to_dict() for r in reports]})
        lines.append(f"n={record.n}: ks={record.ks_estimate:.6g} "
                     f"{bound_name} bound={'-' if bound is None else f'{bound:.6g}'}")
        for rep in reports:
            status = ("n/a" if not rep.applicable
                      else ("pass" if rep.passed else "FAIL"))
            lines.append(f"  [{status}] {rep.name}: lhs={rep.lhs:.6g} "
                         f"rhs={rep.rhs:.6g}")
            if rep.note:
                lines.append(f"        {rep.note}")
            if rep.applicable and not rep.passed:
                failures.append(f"n{record.n}:{rep.name}")
        margins = [rep.margin for rep in reports]
        plotting.write_xy_data(out / f"margins_n{record.n}.dat",
                               list(range(len(reports))), margins,
                               comment="\n".join(
                                   f"{i} {rep.name}" for i, rep in enumerate(reports)))
        plotting.margin_figure(out / f"margins_n{record.n}.png", reports,
                               label=f"{cfg.label}, n={record.n}")
    payload = {"records": [_record_dict(r) for r in records],
               "reports": all_reports}
    return rows, payload, lines, failures


def _suite_bound(cfg, seed, workers, out):
    records, _ = _run_points(cfg, seed, workers)
    rows = []
    lines = []
    bounds_list = []
    components = []
    for record, n in zip(records, cfg.sweep):
        model = build_model(cfg, n)
        comps = _components_for(model, cfg, seed, workers)
        bound, bound_name = _theorem_bound(cfg, model, comps)
        rows.append(_record_row(ExperimentRecord(
            n=record.n, replications=record.replications, seed=record.seed,
            ks_estimate=record.ks_estimate, dkw_band=record.dkw_band,
            bound_value=bound, statistic_kind=record.statistic_kind,
        ), cfg.label))
        bounds_list.append(bound)
        entry = {"n": record.n, "bound": bound, "rule": bound_name,
                 "components": comps.to_dict()}
        components.append(entry)
        vacuous = " (vacuous)" if bound is not None and bound >= 1.0 else ""
        lines.append(f"n={record.n}: ks={record.ks_estimate:.6g} "
                     f"{bound_name}={'-' if bound is None else f'{bound:.6g}'}"
                     f"{vacuous}")
    known = [(r.n, b) for r, b in zip(records, bounds_list) if b is not None]
    if known:
        plotting.write_xy_data(out / "bound.dat",
                               [k[0] for k in known], [k[1] for k in known],
                               comment=f"{cfg.label}: theorem bound at C={cfg.constant}")
    plotting.rate_figure(out / "bound.png",
                         [ExperimentRecord(r.n, r.replications, r.seed,
                                           r.ks_estimate, r.dkw_band, b,
                                           r.statistic_kind)
                          for r, b in zip(records, bounds_list)],
                         None, label=f"{cfg.label}: observed KS")
    payload = {"records": [_record_dict(r) for r in records],
               "bounds": components}
    return rows, payload, lines, []


def calibrate_constant(runs) -> float:
    """Smallest admissible theorem constant across completed runs.

    ``runs`` holds (record, rhs_at_unit_constant) pairs; since every theorem
    RHS scales linearly in C, the smallest C with ks + dkw <= RHS(C) for all
    runs is the largest of the per-run ratios.
    """
    ratios = []
    for record, rhs_one in runs:
        if rhs_one is None or not rhs_one > 0:
            raise ValueError("each run needs a positive unit-constant bound")
        ratios.append((record.ks_estimate + record.dkw_band) / rhs_one)
    if not ratios:
        raise ValueError("no completed runs to calibrate against")
    return max(ratios)


def _suite_calibrate(cfg, seed, workers, out):
    records, _ = _run_points(cfg, seed, workers)
    rows = []
    lines = []
    runs = []
    per_point = []
    for record, n in zip(records, cfg.sweep):
        model = build_model(cfg, n)
        comps = _components_for(model, cfg, seed, workers)
        unit = ExperimentConfig(**{**cfg.__dict__, "constant": 1.0})
        rhs_one, rule = _theorem_bound(unit, model, comps)
        rows.append(_record_row(ExperimentRecord(
            n=record.n, replications=record.replications, seed=record.seed,
            ks_estimate=record.ks_estimate, dkw_band=record.dkw_band,
            bound_value=rhs_one, statistic_kind=record.statistic_kind,
        ), cfg.label))
        if rhs_one is None:
            lines.append(f"n={record.n}: bound unavailable, skipped ({rule})")
            continue
        ratio = (record.ks_estimate + record.dkw_band) / rhs_one
        runs.append((record, rhs_one))
        per_point.append({"n": record.n, "rhs_at_unit": rhs_one, "ratio": ratio})
        lines.append(f"n={record.n}: ks+dkw={record.ks_estimate + record.dkw_band:.6g} "
                     f"rhs(C=1)={rhs_one:.6g} ratio={ratio:.6g}")
    payload = {"records": [_record_dict(r) for r in records],
               "calibration": None}
    failures = []
    if runs:
        constant = calibrate_constant(runs)
        payload["calibration"] = {"constant": constant, "points": per_point}
        lines.append(f"smallest admissible constant: C = {constant:.6g}")
        plotting.write_xy_data(out / "calibration.dat",
                               [p["n"] for p in per_point],
                               [p["ratio"] for p in per_point],
                               comment=f"{cfg.label}: per-run C ratios")
    else:
        failures.append("calibration-no-usable-runs")
        lines.append("no runs with a computable bound; nothing to calibrate")
    return rows, payload, lines, failures


_SUITE_RUNNERS = {
    "simulate": _suite_simulate,
    "rate": _suite_rate,
    "verify": _suite_verify,
    "bound": _suite_bound,
    "calibrate": _suite_calibrate,
}


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def run(config_path, suite: str | None = None, out_dir=".",
        seed: int | None = None, workers: int = 1) -> int:
    """Execute one suite described by the config; returns the exit code.

    Artifacts are assembled in memory and written once at the end, so a
    crash mid-suite leaves no partial files and reruns are idempotent.
    """
    cfg = load_config(config_path)
    chosen = suite or cfg.suite
    if chosen is None:
        raise ConfigError(0, 0, "no suite selected (subcommand or 'suite' key)")
    if chosen not in SUITES:
        raise ConfigError(0, 0, f"unknown suite '{chosen}'")
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(0, 0, "seed must be a u64")
        cfg = ExperimentConfig(**{**cfg.__dict__, "seed": seed})
    if workers < 1:
        raise ConfigError(0, 0, "workers must be >= 1")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, payload, lines, failures = _SUITE_RUNNERS[chosen](
        cfg, cfg.seed, workers, out)

    (out / "results.csv").write_text(_csv_text(rows), encoding="utf-8")
    body = {"schema": SCHEMA_VERSION, "suite": chosen, "config": cfg.to_dict()}
    body.update(payload)
    (out / "results.json").write_text(
        json.dumps(body, indent=2, allow_nan=True) + "\n", encoding="utf-8")

    header = [
        f"selfnorm {chosen} report",
        f"model: {cfg.label} ({cfg.kind}, {cfg.family})",
        f"statistic: {cfg.statistic}  R={cfg.replications}  seed={cfg.seed}  "
        f"delta={cfg.delta}",
        "",
    ]
    verdict = ("RESULT: ok" if not failures
               else "RESULT: FAIL " + ", ".join(failures))
    (out / "report.txt").write_text(
        "\n".join(header + lines + ["", verdict]) + "\n", encoding="utf-8")
    return 1 if failures else 0


def _env_int(name: str, low: int, high: int) -> int | None:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(0, 0, f"{name} must be an integer, got {raw!r}") from None
    if not low <= value <= high:
        raise ConfigError(0, 0, f"{name} must lie in [{low}, {high}]")
    return value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="selfnorm",
        description="Monte Carlo laboratory for self-normalized sums of "
                    "locally dependent random fields",
    )
    sub = parser.add_subparsers(dest="suite", required=True)
    helps = {
        "simulate": "sample the statistic and write its empirical CDF",
        "rate": "sweep sizes and fit the KS convergence rate",
        "verify": "run every inequality oracle against the model",
        "bound": "tabulate theorem bounds next to observed KS distances",
        "calibrate": "find the smallest admissible theorem constant",
    }
    for name in SUITES:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed (u64)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="thread count; never affects results")
    args = parser.parse_args(argv)

    try:
        seed = args.seed if args.seed is not None else _env_int(ENV_SEED, 0, 2**64 - 1)
        workers = (args.workers if args.workers is not None
                   else _env_int(ENV_WORKERS, 1, 1024)) or 1
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(0, 0, "--seed must be a u64")
        if workers < 1:
            raise ConfigError(0, 0, "--workers must be >= 1")
        return run(args.config, suite=args.suite, out_dir=args.out,
                   seed=seed, workers=workers)
    except ConfigError as exc:
        print(f"selfnorm: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
