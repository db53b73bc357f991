"""Simulation harness: experiment grids, replications, CSV tables.

A grid expands into cells, one per (latent distribution, loading range,
sweep, fixed value, swept value). Every cell runs ``replications`` seeded
replications; every replication generates one network and runs each
requested algorithm on the same adjacency sample.

Grid JSON::

    {
      "name": "normal",
      "M": 3, "K": 3, "omega": 1.0,
      "latents": [{"name": "truncated_normal", "sigma": 1.0}],
      "b_ranges": [[-0.02, 0.02], [-0.05, 0.05]],
      "sweeps": [
        {"vary": "n", "values": [100, 150, 200, 250], "fixed": [50, 350]},
        {"vary": "L", "values": [50, 150, 250, 350], "fixed": [100, 250]}
      ],
      "algorithms": ["tensor", "baseline"],
      "replications": 20,
      "base_seed": 0,
      "threshold": "gap",
      "n_iter_max": 50
    }

Outputs in the run directory: ``results.csv`` (one row per replication and
algorithm), ``timings.csv`` (wall times), ``summary.csv`` (per-cell means) and
``cells/<cell_id>.csv`` checkpoints used to resume an interrupted run. The
checkpoints are stamped with the grid fingerprint in ``cells/grid.fingerprint``;
a run under a different fingerprint discards them.
"""
from __future__ import annotations

import asyncio
import csv
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from tqdm import tqdm

from .errors import ConfigError, DimpleError, InfeasibleModelError
from .hooi import HooiConfig, estimate_factors, init_factors, true_factors
from .layer_cluster import ClusterConfig, ThresholdContext, ThresholdMode, cluster_baseline, cluster_tensor
from .metrics import misclassification_rate
from .netgen import LatentDistribution, ModelConfig, build_ground_truth, estimate_sparsity, latent_from_dict, sample_adjacency
from .rng import replication_seed

logger = logging.getLogger(__name__)

ALGORITHMS = ("tensor", "tensor_init", "baseline")
SWEEPS = ("n", "L")
DEFAULT_REPLICATIONS = 20
FULL_REPLICATIONS = 100

RESULT_FILE = "results.csv"
TIMINGS_FILE = "timings.csv"
SUMMARY_FILE = "summary.csv"
CELLS_DIR = "cells"
FINGERPRINT_FILE = "grid.fingerprint"

SUMMARY_COLUMNS = (
    "algorithm", "sweep", "distribution", "c", "d", "n", "L", "count", "errors",
    "mean_r_bl", "stderr_r_bl", "mean_sin_theta_u", "mean_sin_theta_w",
)


def fmt_float(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.10g}"


def _opt_float(text: str) -> float | None:
    return float(text) if text else None


def _jsonable(value: Any) -> Any:
    if isinstance(value, (np.ndarray, np.generic)):
        return value.tolist()
    raise TypeError(f"Cannot serialize {type(value).__name__}")


def _threshold_mode(name: str) -> ThresholdMode:
    try:
        return ThresholdMode(name)
    except ValueError as e:
        choices = [m.value for m in ThresholdMode]
        raise ConfigError(f"threshold must be one of {choices}, got {name!r}") from e


@dataclass(frozen=True)
class Sweep:
    """``vary`` is the swept size ("n" or "L"); the other size takes each ``fixed`` value."""

    vary: str
    values: tuple[int, ...]
    fixed: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.vary not in SWEEPS:
            raise ConfigError(f"sweep must vary one of {SWEEPS}, got {self.vary!r}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        object.__setattr__(self, "fixed", tuple(int(v) for v in self.fixed))
        if not self.values or not self.fixed:
            raise ConfigError(f"sweep over {self.vary} needs nonempty values and fixed lists")

    @property
    def fixed_name(self) -> str:
        return "L" if self.vary == "n" else "n"

    def sizes(self) -> Iterable[tuple[int, int]]:
        for f in self.fixed:
            for v in self.values:
                yield (v, f) if self.vary == "n" else (f, v)


@dataclass(frozen=True)
class Cell:
    sweep: str
    latent: LatentDistribution
    c: float
    d: float
    n: int
    L: int

    @property
    def distribution(self) -> str:
        return self.latent.name

    @property
    def cell_id(self) -> str:
        return f"{self.distribution}_c{self.c:+.4f}_d{self.d:+.4f}_vary{self.sweep}_n{self.n}_L{self.L}"


@dataclass(frozen=True)
class ExperimentGrid:
    sweeps: tuple[Sweep, ...]
    b_ranges: tuple[tuple[float, float], ...] = ((-0.05, 0.05),)
    latents: tuple[LatentDistribution, ...] = field(default_factory=lambda: (latent_from_dict({"name": "truncated_normal"}),))
    M: int = 3
    K: int = 3
    omega: float = 1.0
    sbm: bool = False
    algorithms: tuple[str, ...] = ("tensor", "baseline")
    replications: int = DEFAULT_REPLICATIONS
    base_seed: int = 0
    threshold: str = "gap"
    manual_threshold: float | None = None
    gap_rule: str = "variance"
    n_iter_max: int = 50
    name: str = "grid"

    def __post_init__(self) -> None:
        if not self.sweeps:
            raise ConfigError("grid needs at least one sweep")
        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        unknown = sorted(set(self.algorithms) - set(ALGORITHMS))
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {ALGORITHMS}")
        for c, d in self.b_ranges:
            if c > d:
                raise ConfigError(f"loading range needs c <= d, got ({c}, {d})")
        # fails early on bad threshold settings
        self.cluster_config(0)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentGrid":
        data = dict(data)
        try:
            sweeps = tuple(Sweep(**s) for s in data.pop("sweeps"))
        except (KeyError, TypeError) as e:
            raise ConfigError(f"bad 'sweeps' entry: {e}") from e
        latents = data.pop("latents", None)
        if latents is not None:
            data["latents"] = tuple(latent_from_dict(x) for x in latents)
        if "b_ranges" in data:
            data["b_ranges"] = tuple((float(c), float(d)) for c, d in data["b_ranges"])
        if "algorithms" in data:
            data["algorithms"] = tuple(data["algorithms"])
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown grid keys {extra}")
        return cls(sweeps=sweeps, **data)

    @classmethod
    def from_json(cls, path: Path) -> "ExperimentGrid":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Grid config not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Expected a JSON object in {path}, got {type(data).__name__}")
        return cls.from_dict(data)

    def with_overrides(self, **changes: Any) -> "ExperimentGrid":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def fingerprint(self) -> str:
        """Hash of every setting that affects a result row; the grid name is left out."""
        data = asdict(self)
        data.pop("name")
        data["latents"] = [{"name": latent.name, **asdict(latent)} for latent in self.latents]
        text = json.dumps(data, sort_keys=True, default=_jsonable)
        return hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()

    def cells(self) -> list[Cell]:
        return [
            Cell(sweep=sweep.vary, latent=latent, c=c, d=d, n=n, L=L)
            for latent in self.latents
            for c, d in self.b_ranges
            for sweep in self.sweeps
            for n, L in sweep.sizes()
        ]

    def model(self, cell: Cell) -> ModelConfig:
        return ModelConfig.uniform(
            cell.n, cell.L, self.M, self.K, latent=cell.latent, b_range=(cell.c, cell.d), omega=self.omega
        )

    def cluster_config(self, seed: int) -> ClusterConfig:
        return ClusterConfig(
            M=self.M,
            threshold_mode=_threshold_mode(self.threshold),
            manual_threshold=self.manual_threshold,
            gap_rule=self.gap_rule,
            seed=seed,
        )


@dataclass
class ResultRow:
    algorithm: str
    sweep: str
    distribution: str
    c: float
    d: float
    n: int
    L: int
    replication: int
    seed: int
    r_bl: float | None = None
    sin_theta_u: float | None = None
    sin_theta_w: float | None = None
    hooi_iters: int = 0
    error: str = ""
    wall_time_ms: float = 0.0

    def to_csv(self) -> list[str]:
        return [
            self.algorithm, self.sweep, self.distribution, fmt_float(self.c), fmt_float(self.d),
            str(self.n), str(self.L), str(self.replication), str(self.seed), fmt_float(self.r_bl),
            fmt_float(self.sin_theta_u), fmt_float(self.sin_theta_w), str(self.hooi_iters), self.error,
        ]

    @classmethod
    def from_csv(cls, row: dict[str, str]) -> "ResultRow":
        return cls(
            algorithm=row["algorithm"], sweep=row["sweep"], distribution=row["distribution"],
            c=float(row["c"]), d=float(row["d"]), n=int(row["n"]), L=int(row["L"]),
            replication=int(row["replication"]), seed=int(row["seed"]),
            r_bl=_opt_float(row["r_bl"]), sin_theta_u=_opt_float(row["sin_theta_u"]),
            sin_theta_w=_opt_float(row["sin_theta_w"]), hooi_iters=int(row["hooi_iters"]),
            error=row["error"], wall_time_ms=float(row.get("wall_time_ms") or 0.0),
        )


RESULT_COLUMNS = tuple(f.name for f in fields(ResultRow) if f.name != "wall_time_ms")
TIMING_COLUMNS = ("algorithm", "sweep", "distribution", "c", "d", "n", "L", "replication", "wall_time_ms")


def _describe(e: BaseException) -> str:
    return f"{type(e).__name__}: {e}".replace("\n", " ")


def run_cell(
    model: ModelConfig,
    algorithms: Sequence[str],
    seed: int,
    *,
    replication: int = 0,
    sweep: str = "",
    cluster: ClusterConfig | None = None,
    sbm: bool = False,
    n_iter_max: int = 50,
) -> list[ResultRow]:
    """Generate one replication and run every algorithm on it.

    Failures of an algorithm become rows with ``error`` set. An infeasible
    model raises :class:`InfeasibleModelError`.
    """
    gt = build_ground_truth(model, seed=seed)
    A = sample_adjacency(gt.P, seed)
    cluster = cluster or ClusterConfig(M=model.M, seed=seed)
    k_eff = [k - 1 if sbm else k for k in model.K]

    truth = None
    if "tensor" in algorithms or "tensor_init" in algorithms:
        try:
            truth = true_factors(gt)
        except DimpleError as e:
            logger.debug("no reference factors for seed %d: %s", seed, e)

    def context() -> ThresholdContext:
        rho = estimate_sparsity(A)
        return ThresholdContext(n=model.n, L=model.L, M=model.M, K=sum(k_eff) / model.M, rho_hat=rho)

    rows = []
    for algorithm in algorithms:
        row = ResultRow(
            algorithm=algorithm, sweep=sweep, distribution=model.latent.name,
            c=model.b_range[0], d=model.b_range[1], n=model.n, L=model.L,
            replication=replication, seed=seed,
        )
        start = time.perf_counter()
        try:
            if algorithm == "baseline":
                K_layer = [k_eff[g - 1] for g in gt.labels]
                result = cluster_baseline(A, K_layer, model.M, cluster)
                factors = None
            else:
                cfg = HooiConfig.for_model(model.n, model.L, model.K, sbm=sbm, omega=model.omega, n_iter_max=n_iter_max)
                if algorithm == "tensor":
                    _, factors = estimate_factors(A, cfg)
                else:
                    factors = init_factors(A, cfg)
                row.hooi_iters = factors.iterations_run
                ctx = context() if cluster.threshold_mode is ThresholdMode.FORMULA else None
                result = cluster_tensor(factors.W, cluster, ctx)
            report = misclassification_rate(result.labels, gt.labels, model.M, truth=truth, est=factors)
            row.r_bl, row.sin_theta_u, row.sin_theta_w = report.r_bl, report.sin_theta_u, report.sin_theta_w
        except (DimpleError, np.linalg.LinAlgError) as e:
            row.error = _describe(e)
            logger.warning("%s failed on n=%d L=%d seed=%d: %s", algorithm, model.n, model.L, seed, row.error)
        row.wall_time_ms = (time.perf_counter() - start) * 1000.0
        rows.append(row)
    return rows


def _failed_rows(cell: Cell, algorithms: Sequence[str], replication: int, seed: int, e: BaseException) -> list[ResultRow]:
    return [
        ResultRow(
            algorithm=a, sweep=cell.sweep, distribution=cell.distribution, c=cell.c, d=cell.d,
            n=cell.n, L=cell.L, replication=replication, seed=seed, error=_describe(e),
        )
        for a in algorithms
    ]


def _write_rows(path: Path, columns: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)
    tmp.replace(path)


def _timing_row(row: ResultRow) -> list[str]:
    return [
        row.algorithm, row.sweep, row.distribution, fmt_float(row.c), fmt_float(row.d),
        str(row.n), str(row.L), str(row.replication), f"{row.wall_time_ms:.3f}",
    ]


def write_checkpoint(path: Path, rows: Sequence[ResultRow]) -> None:
    _write_rows(path, RESULT_COLUMNS + ("wall_time_ms",), (r.to_csv() + [f"{r.wall_time_ms:.3f}"] for r in rows))


def read_results(path: Path) -> list[ResultRow]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path} is missing columns {sorted(missing)}")
        return [ResultRow.from_csv(row) for row in reader]


def summarize(rows: Sequence[ResultRow]) -> list[dict[str, Any]]:
    """Mean and standard error of ``r_bl`` per (algorithm, sweep, distribution, c, d, n, L)."""
    groups: dict[tuple, list[ResultRow]] = {}
    for row in rows:
        key = (row.algorithm, row.sweep, row.distribution, row.c, row.d, row.n, row.L)
        groups.setdefault(key, []).append(row)

    summary = []
    for key, members in groups.items():
        ok = [r for r in members if not r.error and r.r_bl is not None]
        r_bl = np.array([r.r_bl for r in ok], dtype=np.float64)
        u = [r.sin_theta_u for r in ok if r.sin_theta_u is not None]
        w = [r.sin_theta_w for r in ok if r.sin_theta_w is not None]
        stderr = float(r_bl.std(ddof=1) / math.sqrt(r_bl.size)) if r_bl.size > 1 else (0.0 if r_bl.size else None)
        summary.append(dict(
            zip(SUMMARY_COLUMNS[:7], key),
            count=len(ok),
            errors=len(members) - len(ok),
            mean_r_bl=float(r_bl.mean()) if r_bl.size else None,
            stderr_r_bl=stderr,
            mean_sin_theta_u=float(np.mean(u)) if u else None,
            mean_sin_theta_w=float(np.mean(w)) if w else None,
        ))
    return summary


def write_summary(path: Path, summary: Sequence[dict[str, Any]]) -> None:
    def cells(entry: dict[str, Any]) -> list[str]:
        return [fmt_float(v) if isinstance(v, float) or v is None else str(v) for v in (entry[c] for c in SUMMARY_COLUMNS)]

    _write_rows(Path(path), SUMMARY_COLUMNS, (cells(e) for e in summary))


@dataclass(frozen=True)
class RunReport:
    results_path: Path
    summary_path: Path
    timings_path: Path
    rows: int
    error_rows: int
    cells_resumed: int


async def _run_cells(grid: ExperimentGrid, cells: Sequence[Cell], out_dir: Path, threads: int) -> dict[str, list[ResultRow]]:
    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(threads)
    pbar = tqdm(total=len(cells) * grid.replications, desc="Replications")
    pbar_lock = asyncio.Lock()
    finished: dict[str, list[ResultRow]] = {}

    def replicate(cell: Cell, rep: int) -> list[ResultRow]:
        seed = replication_seed(grid.base_seed, cell.n, cell.L, rep)
        try:
            return run_cell(
                grid.model(cell), grid.algorithms, seed,
                replication=rep, sweep=cell.sweep, cluster=grid.cluster_config(seed),
                sbm=grid.sbm, n_iter_max=grid.n_iter_max,
            )
        except InfeasibleModelError as e:
            logger.warning("Cell %s replication %d failed: %s", cell.cell_id, rep, e)
            return _failed_rows(cell, grid.algorithms, rep, seed, e)

    with ThreadPoolExecutor(max_workers=threads) as pool:

        async def task(cell: Cell, rep: int) -> list[ResultRow]:
            try:
                async with semaphore:
                    return await loop.run_in_executor(pool, replicate, cell, rep)
            finally:
                async with pbar_lock:
                    pbar.update(1)

        async def run_one_cell(cell: Cell) -> None:
            out = await asyncio.gather(*[task(cell, rep) for rep in range(grid.replications)], return_exceptions=True)
            rows: list[ResultRow] = []
            for rep, result in enumerate(out):
                if isinstance(result, BaseException):
                    seed = replication_seed(grid.base_seed, cell.n, cell.L, rep)
                    logger.warning("Cell %s replication %d failed: %s", cell.cell_id, rep, result)
                    rows.extend(_failed_rows(cell, grid.algorithms, rep, seed, result))
                else:
                    rows.extend(result)
            write_checkpoint(out_dir / CELLS_DIR / f"{cell.cell_id}.csv", rows)
            finished[cell.cell_id] = rows

        await asyncio.gather(*[run_one_cell(cell) for cell in cells])
    pbar.close()
    return finished


def _checkpoint_matches(grid: ExperimentGrid, cell: Cell, rows: Sequence[ResultRow]) -> bool:
    expected = {
        (rep, algorithm, replication_seed(grid.base_seed, cell.n, cell.L, rep))
        for rep in range(grid.replications)
        for algorithm in grid.algorithms
    }
    found = [(r.replication, r.algorithm, r.seed) for r in rows]
    return len(found) == len(expected) and set(found) == expected


def _load_checkpoints(grid: ExperimentGrid, cells: Sequence[Cell], out_dir: Path) -> dict[str, list[ResultRow]]:
    cells_dir = out_dir / CELLS_DIR
    stamp = cells_dir / FINGERPRINT_FILE
    fingerprint = grid.fingerprint()
    if not stamp.exists() or stamp.read_text(encoding="utf-8").strip() != fingerprint:
        stale = sorted(cells_dir.glob("*.csv"))
        if stale:
            logger.warning("Removing %d checkpoints in %s left by a different grid", len(stale), cells_dir)
        for path in stale:
            path.unlink()
        return {}

    loaded: dict[str, list[ResultRow]] = {}
    for cell in cells:
        checkpoint = cells_dir / f"{cell.cell_id}.csv"
        if not checkpoint.exists():
            continue
        rows = read_results(checkpoint)
        if _checkpoint_matches(grid, cell, rows):
            loaded[cell.cell_id] = rows
        else:
            logger.warning("Checkpoint %s does not match the grid; recomputing", checkpoint)
    return loaded


def run_grid(grid: ExperimentGrid, out_dir: Path, *, threads: int = 1, resume: bool = True) -> RunReport:
    """Run every cell of ``grid`` and write results, timings and summary CSVs to ``out_dir``.

    Finished cells leave a checkpoint under ``out_dir/cells``; with ``resume``
    those cells are loaded instead of recomputed. Row order depends only on
    the grid, so the thread count never changes the output files.
    """
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = grid.cells()

    by_cell = _load_checkpoints(grid, cells, out_dir)
    if not resume:
        by_cell = {}
    resumed = len(by_cell)
    if resumed:
        logger.info("Resuming: %d of %d cells already finished", resumed, len(cells))

    pending = [cell for cell in cells if cell.cell_id not in by_cell]
    if pending:
        stamp = out_dir / CELLS_DIR / FINGERPRINT_FILE
        stamp.parent.mkdir(parents=True, exist_ok=True)
        stamp.write_text(grid.fingerprint() + "\n", encoding="utf-8")
        by_cell.update(asyncio.run(_run_cells(grid, pending, out_dir, threads)))

    algorithm_order = {a: i for i, a in enumerate(grid.algorithms)}
    rows: list[ResultRow] = []
    for cell in cells:
        rows.extend(sorted(by_cell[cell.cell_id], key=lambda r: (r.replication, algorithm_order.get(r.algorithm, 0))))

    results_path = out_dir / RESULT_FILE
    timings_path = out_dir / TIMINGS_FILE
    summary_path = out_dir / SUMMARY_FILE
    _write_rows(results_path, RESULT_COLUMNS, (r.to_csv() for r in rows))
    _write_rows(timings_path, TIMING_COLUMNS, (_timing_row(r) for r in rows))
    write_summary(summary_path, summarize(rows))
    errors = sum(1 for r in rows if r.error)
    logger.info("Saved %d rows (%d errors) to %s", len(rows), errors, results_path)
    return RunReport(
        results_path=results_path, summary_path=summary_path, timings_path=timings_path,
        rows=len(rows), error_rows=errors, cells_resumed=resumed,
    )


def read_summary(path: Path) -> list[dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Summary not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ConfigError(f"{path} is missing columns {sorted(missing)}")
        return list(reader)
