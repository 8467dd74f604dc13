"""Time-to-tenfold-improvement benchmark over a grid of systems and solvers.

For every (system, strategy, method) cell the solver starts from ``x0 = 0``
and runs until the residual norm drops by ``improvement_factor``. The cell
value is either the number of advanced steps (deterministic) or wall-clock
seconds; cells that hit their budget report the sentinel ``1.0e99``.
"""
import csv
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .mtx import load_matrix_market
from .solvers import TerminationCriteria, solve
from .system import (SpectrumSpec, gen_prescribed_svd, make_consistent_system)

SENTINEL = 1.0e99
CSV_COLUMNS = ("Base", "PartFive", "PartTen", "Comp")
DEFAULT_METHODS = (("Base", "base", 0), ("PartFive", "partial", 5),
                   ("PartTen", "partial", 10), ("Comp", "complete", 0))

_PRETTY = {"gaussian": "Gaussian", "countsketch": "CountSketch", "uniform": "Uniform",
           "rownorm": "RowNorm", "cyclic": "Cyclic", "colcyclic": "ColumnCyclic",
           "coluniform": "ColumnUniform", "maxres": "MaxResidual", "maxdist": "MaxDistance",
           "grk": "GRK", "skm": "SKM"}


def strategy_label(token):
    """File-name label for a strategy token, e.g. ``countsketch:10 -> CountSketch``."""
    name = token.split(":")[0].lower()
    return _PRETTY.get(name, name.capitalize())


def default_systems(size=200, count=10, cond_range=(1e3, 1e8), seed=0):
    """Prescribed-SVD square systems with geometrically spaced condition numbers."""
    systems = []
    for i, cond in enumerate(np.geomspace(*cond_range, count)):
        spec = SpectrumSpec.geometric(size, cond, seed=seed + i)
        A = gen_prescribed_svd(size, size, spec)
        name = f"svd{size}_cond{cond:.0e}".replace("+", "")
        systems.append((name, make_consistent_system(A, seed + 1000 + i, name=name)))
    return systems


@dataclass
class BenchConfig:
    """Grid definition.

    ``systems`` holds ``(name, source)`` pairs where ``source`` is a
    :class:`LinearSystem`, a path to a ``.mtx`` file, or a zero-argument
    callable returning a system. ``methods`` holds ``(column, method, m)``
    triples. With ``metric="iters"`` each cell is capped at
    ``max_iterations``; with ``metric="wall"`` at ``time_budget`` seconds.
    """

    systems: list
    strategies: list = field(default_factory=lambda: ["countsketch:10"])
    methods: tuple = DEFAULT_METHODS
    improvement_factor: float = 0.1
    time_budget: float = 3.0
    metric: str = "iters"
    max_iterations: int = 20000
    seed: int = 0
    repetitions: int = 1

    def __post_init__(self):
        if not self.systems or not self.strategies or not self.methods:
            raise ValueError("systems, strategies and methods must be nonempty")
        if not 0 < self.improvement_factor < 1:
            raise ValueError("improvement_factor must lie in (0, 1)")
        if not self.time_budget > 0:
            raise ValueError("time_budget must be positive")
        if self.metric not in ("iters", "wall"):
            raise ValueError("metric must be 'iters' or 'wall'")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass
class BenchRow:
    matrix_name: str
    values: dict
    timed_out: dict = field(default_factory=dict)


def _resolve(source, seed):
    if isinstance(source, (str, os.PathLike)):
        A = load_matrix_market(source)
        return make_consistent_system(A, seed, name=os.path.basename(str(source)))
    if callable(source):
        return source()
    return source


def _criteria(cfg, method):
    check = 1 if method == "complete" else 10
    if cfg.metric == "iters":
        return TerminationCriteria(cfg.improvement_factor, max_iterations=cfg.max_iterations,
                                   check_every=check)
    return TerminationCriteria(cfg.improvement_factor, wall_clock_budget=cfg.time_budget,
                               check_every=check)


def _cell_seed(seed, *keys):
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def run_cell(system, token, method, m, cfg, seed):
    report = solve(system, token, method=method, m=m, criteria=_criteria(cfg, method),
                   seed=seed)
    if report.timed_out:
        return SENTINEL, True
    value = report.advanced_steps if cfg.metric == "iters" else report.elapsed_seconds
    return float(value), False


def run_grid(cfg, warn=None):
    """Run every cell; returns ``{strategy_token: [BenchRow, ...]}``.

    Systems that cannot be loaded are skipped with a warning. Repetitions
    use independent sketch seeds and report the median (timeouts count as
    infinite, so a median timeout is reported as the sentinel).
    """
    warn = warn or (lambda msg: print(msg, file=sys.stderr))
    resolved = []
    for i, (name, source) in enumerate(cfg.systems):
        try:
            resolved.append((i, name, _resolve(source, _cell_seed(cfg.seed, i))))
        except (OSError, ValueError) as exc:
            warn(f"skipping system {name!r}: {exc}")
    out = {}
    for s_idx, token in enumerate(cfg.strategies):
        rows = []
        for i, name, system in resolved:
            values, flags = {}, {}
            for label, method, m in cfg.methods:
                samples = []
                for rep in range(cfg.repetitions):
                    v, _ = run_cell(system, token, method, m, cfg,
                                    _cell_seed(cfg.seed, i, s_idx, rep))
                    samples.append(np.inf if v == SENTINEL else v)
                med = float(np.median(samples))
                values[label] = SENTINEL if not np.isfinite(med) else med
                flags[label] = not np.isfinite(med)
            rows.append(BenchRow(name, values, flags))
        out[token] = rows
    return out


def format_value(v):
    if v == SENTINEL:
        return "1.0e99"
    return f"{v:.2e}"


def emit_csv(rows, path, columns=CSV_COLUMNS):
    """Write ``Matrix,<columns>`` rows atomically (temp file, then rename)."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["Matrix", *columns])
            for row in rows:
                writer.writerow([row.matrix_name, *(format_value(row.values[c]) for c in columns)])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_filename(tag, token):
    return f"{tag}_{strategy_label(token)}_10x-Improve-Time.csv"


def host_metadata():
    return {"platform": platform.platform(), "python": platform.python_version(),
            "numpy": np.__version__, "processor": platform.processor()}
