"""Experiment orchestration: declarative specs, seeded replication sweeps,
method dispatch, result persistence, and summary tables.

Every replication's random streams are derived by hashing the experiment
base seed together with the cell coordinates, the replication index, and
the stream role, so execution order, thread width, and the presence of
other grid cells never change any emitted number. Within a replication
both methods receive identical data and an identical initializer, which
isolates the penalty's effect in paired comparisons.

``results.csv`` is the deterministic artifact: reruns of the same spec are
byte-identical, which is why its ``wall_time_s`` column is left blank.
Measured wall-clock times are recorded in ``results.json`` and enter the
summary table from there.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .affinity import PenaltyConfig, separation
from .em import EmConfig, em_fit, em_fit_restarts
from .errors import SpecError
from .fitter import FitterConfig, default_lambda, fit
from .metrics import MetricsReport, evaluate_fit
from .simgen import (
    DgpSpec,
    derive_seed,
    generate,
    init_random,
    make_rng,
    min_pairwise_mean_distance,
    truth_params,
)

__all__ = [
    "CellCoords",
    "ExperimentSpec",
    "RunRecord",
    "grid_cells",
    "parse_experiment_file",
    "run_experiment",
    "summarize",
    "write_results",
    "write_summary",
    "table1_spec",
    "robustness_spec",
    "highdim_spec",
]

METHODS = ("tamd", "em")

CELL_FIELDS = ("kind", "n", "d", "k", "delta", "kappa", "eps")

RESULT_COLUMNS = CELL_FIELDS + (
    "method", "replication", "seed", "success", "mean_mse",
    "cov_frobenius_error", "hellinger_to_truth", "ari", "heldout_loglik",
    "final_objective", "iterations", "backtracks", "wall_time_s", "error",
)

METRIC_COLUMNS = (
    "success", "mean_mse", "cov_frobenius_error", "hellinger_to_truth",
    "ari", "heldout_loglik", "final_objective", "iterations", "backtracks",
    "wall_time_s",
)


@dataclass(frozen=True)
class CellCoords:
    """One grid cell: the full coordinate tuple of a DGP."""

    kind: str
    n: int
    d: int
    k: int
    delta: float
    kappa: float
    eps: float

    def key(self) -> tuple:
        return (self.kind, self.n, self.d, self.k,
                self.delta, self.kappa, self.eps)

    def dgp_spec(self, seed: int, n: int | None = None) -> DgpSpec:
        return DgpSpec(kind=self.kind, n=self.n if n is None else n,
                       d=self.d, k_true=self.k,
                       separation_delta=self.delta,
                       condition_kappa=self.kappa,
                       contamination_eps=self.eps, seed=seed)


def grid_cells(kinds, ns, ds, ks, deltas, kappas, epsilons,
               mode: str = "product") -> tuple[CellCoords, ...]:
    """Build grid cells as the cartesian product of the lists, or with the
    ``n`` and ``d`` lists zipped (``mode='zip_nd'``) for ratio-style grids."""
    if mode == "product":
        combos = product(kinds, ns, ds, ks, deltas, kappas, epsilons)
        return tuple(CellCoords(kind, int(n), int(d), int(k), float(de),
                                float(ka), float(ep))
                     for kind, n, d, k, de, ka, ep in combos)
    if mode == "zip_nd":
        if len(ns) != len(ds):
            raise SpecError("zip_nd needs n and d lists of equal length")
        cells = []
        for n, d in zip(ns, ds):
            for kind, k, de, ka, ep in product(kinds, ks, deltas, kappas,
                                               epsilons):
                cells.append(CellCoords(kind, int(n), int(d), int(k),
                                        float(de), float(ka), float(ep)))
        return tuple(cells)
    raise SpecError(f"unknown grid mode {mode!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of one benchmark sweep."""

    name: str
    cells: tuple[CellCoords, ...]
    methods: tuple[str, ...] = METHODS
    replications: int = 1
    base_seed: int = 0
    fitter: FitterConfig = field(default_factory=FitterConfig)
    em: EmConfig = field(default_factory=EmConfig)
    heldout_n: int = 500
    init_scheme: str = "kmeanspp_like"
    init_noise: float = 0.25
    hellinger_draws: int = 10_000
    lambda_mode: str = "auto"
    output_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.cells:
            raise SpecError("experiment needs at least one grid cell")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise SpecError(f"methods must be a nonempty subset of {METHODS}")
        if self.replications < 1:
            raise SpecError("replications must be positive")
        if self.heldout_n < 2:
            raise SpecError("heldout_n must be at least 2")
        if self.lambda_mode not in ("auto", "fixed"):
            raise SpecError("lambda_mode must be 'auto' or 'fixed'")


@dataclass(frozen=True)
class RunRecord:
    """One row: a (cell, method, replication) outcome."""

    kind: str
    n: int
    d: int
    k: int
    delta: float
    kappa: float
    eps: float
    method: str
    replication: int
    seed: int
    success: bool | None = None
    mean_mse: float | None = None
    cov_frobenius_error: float | None = None
    hellinger_to_truth: float | None = None
    ari: float | None = None
    heldout_loglik: float | None = None
    final_objective: float | None = None
    iterations: int | None = None
    backtracks: int | None = None
    wall_time_s: float | None = None
    error: str = ""


def _tamd_config(spec: ExperimentSpec, cell: CellCoords) -> FitterConfig:
    pen = spec.fitter.penalty
    if spec.lambda_mode == "auto":
        pen = replace(pen, lambda_n=default_lambda(cell.n))
    return replace(spec.fitter, penalty=pen)


def _run_cell_replication(spec: ExperimentSpec, cell: CellCoords,
                          rep: int) -> list[RunRecord]:
    key = cell.key()
    data_seed = derive_seed(spec.base_seed, "data", *key, rep)
    base = dict(kind=cell.kind, n=cell.n, d=cell.d, k=cell.k,
                delta=cell.delta, kappa=cell.kappa, eps=cell.eps,
                replication=rep, seed=data_seed)
    try:
        sample = generate(cell.dgp_spec(seed=data_seed))
        # Held-out data comes from the clean mixture: out-of-sample scores
        # measure recovery of the signal, not accommodation of the junk.
        heldout_spec = replace(
            cell.dgp_spec(seed=derive_seed(spec.base_seed, "heldout", *key, rep),
                          n=spec.heldout_n),
            contamination_eps=0.0)
        heldout = generate(heldout_spec).data
        init_rng = make_rng(derive_seed(spec.base_seed, "init", *key, rep))
        init = init_random(sample.data, cell.k, spec.init_scheme, init_rng,
                           truth=sample.truth, noise_scale=spec.init_noise)
    except Exception as exc:  # per-row error capture; the sweep continues
        return [RunRecord(**base, method=m, error=_describe(exc))
                for m in spec.methods]

    records = []
    for method in spec.methods:
        try:
            if method == "tamd":
                result = fit(sample.data, init, _tamd_config(spec, cell))
            else:
                if spec.em.restarts > 1:
                    rng = make_rng(derive_seed(spec.base_seed, "em_restarts",
                                               *key, rep))
                    result = em_fit_restarts(sample.data, cell.k, spec.em,
                                             rng, first_init=init)
                else:
                    result = em_fit(sample.data, init, spec.em)
            metrics_rng = make_rng(derive_seed(spec.base_seed, "metrics",
                                               *key, rep, method))
            report = evaluate_fit(result, sample, heldout, metrics_rng,
                                  spec.hellinger_draws)
            records.append(RunRecord(
                **base, method=method,
                success=report.success,
                mean_mse=report.mean_mse,
                cov_frobenius_error=report.cov_frobenius_error,
                hellinger_to_truth=report.hellinger_to_truth,
                ari=report.ari,
                heldout_loglik=report.heldout_loglik,
                final_objective=result.objective_trace[-1],
                iterations=result.iterations,
                backtracks=result.backtrack_events,
                wall_time_s=result.wall_time))
        except Exception as exc:  # per-row error capture
            records.append(RunRecord(**base, method=method,
                                     error=_describe(exc)))
    return records


def _describe(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def run_experiment(spec: ExperimentSpec, threads: int = 1,
                   out_dir: str | Path | None = None,
                   quiet: bool = True) -> list[RunRecord]:
    """Run the full sweep and optionally persist results.

    Tasks are independent given their derived seeds; with ``threads > 1``
    they run in a pool and are merged back in grid order, so the output
    does not depend on the execution schedule.
    """
    tasks = [(cell, rep) for cell in spec.cells
             for rep in range(spec.replications)]
    if threads <= 1:
        chunks = [_run_cell_replication(spec, cell, rep)
                  for cell, rep in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(
                lambda t: _run_cell_replication(spec, t[0], t[1]), tasks))
    records = [record for chunk in chunks for record in chunk]
    if not quiet:
        failed = sum(1 for r in records if r.error)
        print(f"[{spec.name}] {len(records)} rows computed"
              + (f", {failed} failed" if failed else ""))
    target = out_dir if out_dir is not None else spec.output_dir
    if target is not None:
        write_results(records, target, spec)
    return records


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(records: list[RunRecord], out_dir: str | Path,
                  spec: ExperimentSpec) -> None:
    """Write ``results.csv`` (deterministic), ``results.json`` (full,
    including measured timings), and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.csv", "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for record in records:
            row = [getattr(record, col) for col in RESULT_COLUMNS]
            row[RESULT_COLUMNS.index("wall_time_s")] = None
            writer.writerow([_format_cell(v) for v in row])
    payload = {"records": [asdict(record) for record in records]}
    (out / "results.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    (out / "manifest.json").write_text(
        json.dumps(_manifest(spec), indent=2, sort_keys=True) + "\n")


def _manifest(spec: ExperimentSpec) -> dict:
    cells = []
    for cell in spec.cells:
        truth = truth_params(cell.dgp_spec(seed=0))
        cells.append({
            "coords": asdict(cell),
            "mean_distance_delta": min_pairwise_mean_distance(truth),
            "hellinger_separation": separation(truth),
        })
    return {
        "name": spec.name,
        "version": __version__,
        "spec": {
            "methods": list(spec.methods),
            "replications": spec.replications,
            "base_seed": spec.base_seed,
            "heldout_n": spec.heldout_n,
            "init_scheme": spec.init_scheme,
            "init_noise": spec.init_noise,
            "hellinger_draws": spec.hellinger_draws,
            "lambda_mode": spec.lambda_mode,
            "fitter": asdict(spec.fitter),
            "em": asdict(spec.em),
        },
        "cells": cells,
    }


def summarize(records: list[RunRecord]) -> list[dict]:
    """Per (cell, method) means and standard errors of every metric.

    The standard error is the sample standard deviation over replications
    divided by ``sqrt(R)``; with a single replication it is left missing.
    Rows that errored out are excluded and counted separately.
    """
    if not records:
        raise SpecError("summarize needs at least one record")
    groups: dict[tuple, list[RunRecord]] = {}
    order: list[tuple] = []
    for record in records:
        key = tuple(getattr(record, f) for f in CELL_FIELDS) + (record.method,)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(record)
    rows = []
    for key in order:
        members = groups[key]
        clean = [r for r in members if not r.error]
        row: dict = dict(zip(CELL_FIELDS + ("method",), key))
        row["replications"] = len(members)
        row["failures"] = len(members) - len(clean)
        for metric in METRIC_COLUMNS:
            values = [float(getattr(r, metric)) for r in clean
                      if getattr(r, metric) is not None]
            if not values:
                row[f"{metric}_mean"] = None
                row[f"{metric}_se"] = None
                continue
            row[f"{metric}_mean"] = float(np.mean(values))
            if len(values) > 1:
                row[f"{metric}_se"] = float(np.std(values, ddof=1)
                                            / math.sqrt(len(values)))
            else:
                row[f"{metric}_se"] = None
        rows.append(row)
    return rows


def write_summary(rows: list[dict], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0].keys())
    with open(out / "summary.csv", "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


# ---------------------------------------------------------------------------
# Built-in desk-scale experiment specs.
# ---------------------------------------------------------------------------

def table1_spec(base_seed: int = 20260811, full: bool = False,
                output_dir: str | None = None) -> ExperimentSpec:
    """Degeneracy stress cell: low separation, moderate dimension, paired
    inits, single-restart EM. Desk scale by default; ``full`` restores the
    large configuration."""
    n, d, reps = (1000, 20, 100) if full else (500, 10, 30)
    cells = grid_cells(["well_specified"], [n], [d], [3], [1.0], [1.0], [0.0])
    return ExperimentSpec(
        name="table1_full" if full else "table1",
        cells=cells,
        methods=("tamd", "em"),
        replications=reps,
        base_seed=base_seed,
        em=EmConfig(restarts=1),
        heldout_n=n,
        output_dir=output_dir,
    )


def robustness_spec(base_seed: int = 20260812, full: bool = False,
                    output_dir: str | None = None) -> ExperimentSpec:
    """Contamination sweep at fixed geometry."""
    reps = 50 if full else 20
    cells = grid_cells(["contaminated"], [500], [2], [3], [2.0], [1.0],
                       [0.0, 0.05, 0.10])
    return ExperimentSpec(
        name="robustness_full" if full else "robustness",
        cells=cells,
        methods=("tamd", "em"),
        replications=reps,
        base_seed=base_seed,
        em=EmConfig(restarts=1),
        heldout_n=500,
        output_dir=output_dir,
    )


def highdim_spec(base_seed: int = 20260813, full: bool = False,
                 output_dir: str | None = None) -> ExperimentSpec:
    """High-dimensional stress grid with n tied to d through the sample
    ratios; ``full`` adds d=200 cells including the contaminated headline
    configuration (d=200, n=300, 8% contamination)."""
    ratios = (2, 5, 10)
    dims = (10, 50, 200) if full else (10, 50)
    ns: list[int] = []
    ds: list[int] = []
    for d in dims:
        for ratio in ratios:
            ns.append(ratio * d)
            ds.append(d)
    cells = list(grid_cells(["high_dim"], ns, ds, [3], [1.0], [1.0], [0.0],
                            mode="zip_nd"))
    if full:
        cells += list(grid_cells(["contaminated"], [300], [200], [3], [1.0],
                                 [1.0], [0.08]))
    return ExperimentSpec(
        name="highdim_full" if full else "highdim",
        cells=tuple(cells),
        methods=("tamd", "em"),
        replications=20 if full else 10,
        base_seed=base_seed,
        em=EmConfig(restarts=1),
        heldout_n=500,
        output_dir=output_dir,
    )


# ---------------------------------------------------------------------------
# Flat declarative experiment files: `key = value` lines, lists in brackets.
# ---------------------------------------------------------------------------

_GRID_KEYS = {"kind": "kinds", "n": "ns", "d": "ds", "k": "ks",
              "delta": "deltas", "kappa": "kappas", "eps": "epsilons"}

_GRID_DEFAULTS = {"kinds": ["well_specified"], "ns": [500], "ds": [2],
                  "ks": [3], "deltas": [2.0], "kappas": [1.0],
                  "epsilons": [0.0]}


def parse_experiment_file(path: str | Path) -> ExperimentSpec:
    """Parse the flat ``key = value`` experiment format.

    Grid keys (``kind n d k delta kappa eps``) accept scalars or bracketed
    lists and expand to the cartesian product (or zipped n/d lists with
    ``grid_mode = zip_nd``). Unknown keys are rejected.
    """
    text = Path(path).read_text()
    entries: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpecError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        entries[key.strip()] = _parse_value(value.strip())
    if not entries:
        raise SpecError(f"{path}: empty experiment spec")
    return _spec_from_entries(entries, str(path))


def _parse_value(text: str):
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part.strip()) for part in inner.split(",")]
    return _parse_scalar(text)


def _parse_scalar(text: str):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _as_list(value) -> list:
    return list(value) if isinstance(value, list) else [value]


def _spec_from_entries(entries: dict, source: str) -> ExperimentSpec:
    grid = dict(_GRID_DEFAULTS)
    penalty_kwargs: dict = {}
    fitter_kwargs: dict = {}
    em_kwargs: dict = {}
    spec_kwargs: dict = {}
    lambda_mode = "auto"
    grid_mode = "product"

    penalty_keys = {"lambda_wt", "lambda_sc", "alpha", "beta", "jitter"}
    fitter_keys = {"max_iters", "convergence_tol", "backtrack_factor",
                   "backtrack_max_steps", "monotonicity_tol"}
    em_keys = {"em_restarts": "restarts", "em_max_iters": "max_iters",
               "em_convergence_tol": "convergence_tol",
               "em_degeneracy_det_threshold": "degeneracy_det_threshold"}
    passthrough = {"name", "replications", "base_seed", "heldout_n",
                   "init_scheme", "init_noise", "hellinger_draws"}

    for key, value in entries.items():
        if key in _GRID_KEYS:
            grid[_GRID_KEYS[key]] = _as_list(value)
        elif key == "methods":
            spec_kwargs["methods"] = tuple(str(m) for m in _as_list(value))
        elif key == "lambda_n":
            if value == "auto":
                lambda_mode = "auto"
            else:
                lambda_mode = "fixed"
                penalty_kwargs["lambda_n"] = float(value)
        elif key in penalty_keys:
            penalty_kwargs[key] = float(value)
        elif key in fitter_keys:
            fitter_kwargs[key] = (int(value) if key in
                                  ("max_iters", "backtrack_max_steps")
                                  else float(value))
        elif key in em_keys:
            target = em_keys[key]
            em_kwargs[target] = (int(value) if target in
                                 ("max_iters", "restarts") else float(value))
        elif key == "grid_mode":
            grid_mode = str(value)
        elif key == "out":
            spec_kwargs["output_dir"] = str(value)
        elif key in passthrough:
            spec_kwargs[key] = value
        else:
            raise SpecError(f"{source}: unknown key {key!r}")

    cells = grid_cells(grid["kinds"], grid["ns"], grid["ds"], grid["ks"],
                       grid["deltas"], grid["kappas"], grid["epsilons"],
                       mode=grid_mode)
    fitter = FitterConfig(penalty=PenaltyConfig(**penalty_kwargs),
                          **fitter_kwargs)
    spec_kwargs.setdefault("name", Path(source).stem)
    spec_kwargs["name"] = str(spec_kwargs["name"])
    if "replications" in spec_kwargs:
        spec_kwargs["replications"] = int(spec_kwargs["replications"])
    if "base_seed" in spec_kwargs:
        spec_kwargs["base_seed"] = int(spec_kwargs["base_seed"])
    if "heldout_n" in spec_kwargs:
        spec_kwargs["heldout_n"] = int(spec_kwargs["heldout_n"])
    if "init_noise" in spec_kwargs:
        spec_kwargs["init_noise"] = float(spec_kwargs["init_noise"])
    if "hellinger_draws" in spec_kwargs:
        spec_kwargs["hellinger_draws"] = int(spec_kwargs["hellinger_draws"])
    if "init_scheme" in spec_kwargs:
        spec_kwargs["init_scheme"] = str(spec_kwargs["init_scheme"])
    return ExperimentSpec(cells=cells, fitter=fitter, em=EmConfig(**em_kwargs),
                          lambda_mode=lambda_mode, **spec_kwargs)
