"""Rank-one projection solvers: base, partially and completely orthogonalized.

Each step consumes one sketch vector ``w`` and moves the iterate so that the
sketched equation ``w'A x = w'b`` holds. The complete method also keeps a
dense projector ``S`` onto the complement of all previous search directions;
the partial method keeps only the last ``m`` normalized directions.
"""
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionError
from .sketches import SketchContext, SketchSource, make_source

DEGENERACY_TOL = 1e-12
RESYMMETRIZE_EVERY = 50
PINV_RCOND = 1e-12


class StepKind(Enum):
    ADVANCED = "advanced"
    SKIPPED_DEGENERATE = "skipped_degenerate"


@dataclass(frozen=True)
class StepOutcome:
    kind: StepKind
    direction_norm: float

    @property
    def advanced(self):
        return self.kind is StepKind.ADVANCED


class FullProjector:
    """Dense projector ``S`` (starts at the identity).

    ``removed`` counts the dimensions projected out so far; once it reaches
    ``d`` the projector is zero in exact arithmetic and further steps are
    skipped instead of amplifying rounding noise left in ``S``.
    """

    def __init__(self, d):
        self.S = np.eye(d)
        self.advanced = 0
        self.removed = 0

    @property
    def exhausted(self):
        return self.removed >= self.S.shape[0]

    def resymmetrize(self):
        self.S = 0.5 * (self.S + self.S.T)


class PartialBuffer:
    """FIFO buffer of at most ``m`` orthonormal directions.

    Parameters
    ----------
    m : int
        Capacity; ``m = 0`` keeps nothing and gives the base method.
    gs_kind : {"mgs", "tigs"}
        Orthogonalization kernel: modified Gram-Schmidt or twice-iterated
        classical Gram-Schmidt.
    """

    def __init__(self, m, gs_kind="mgs"):
        if m < 0:
            raise ValueError(f"memory size must be nonnegative, got {m}")
        if gs_kind not in ("mgs", "tigs"):
            raise ValueError(f"gs_kind must be 'mgs' or 'tigs', got {gs_kind!r}")
        self.m = m
        self.gs_kind = gs_kind
        self.vectors = deque(maxlen=m)

    def __len__(self):
        return len(self.vectors)

    def orthogonalize(self, q):
        if self.gs_kind == "mgs":
            return modified_gram_schmidt(q, self.vectors)
        return twice_iterated_gram_schmidt(q, self.vectors)

    def push(self, z):
        if self.m > 0:
            self.vectors.append(z)


@dataclass
class SolverState:
    """Iterate ``x``, optional orthogonalization memory and step counters."""

    x: np.ndarray
    memory: object = None
    k: int = 0
    skip_count: int = 0

    @classmethod
    def start(cls, d, method="base", m=0, x0=None, gs_kind="mgs"):
        x = np.zeros(d) if x0 is None else np.array(x0, dtype=float)
        if x.shape != (d,):
            raise DimensionError(f"x0 must have shape ({d},), got {x.shape}")
        if method == "base":
            memory = None
        elif method == "partial":
            memory = PartialBuffer(m, gs_kind)
        elif method == "complete":
            memory = FullProjector(d)
        else:
            raise ValueError(f"unknown method {method!r}")
        return cls(x, memory)

    def _record(self, outcome):
        self.k += 1
        if not outcome.advanced:
            self.skip_count += 1
        return outcome


def _check_len(v, size, what):
    if type(v) is np.ndarray and v.dtype == np.float64 and v.shape == (size,):
        return v
    v = np.asarray(v, dtype=float)
    if v.shape != (size,):
        raise DimensionError(f"{what} must have length {size}, got shape {v.shape}")
    return v


def sketch_products(system, w):
    """Return ``q = A'w`` and ``b'w``, touching only the support of ``w`` when sparse."""
    w = _check_len(w, system.n, "w")
    idx = np.flatnonzero(w)
    if idx.size == 1:
        i = idx[0]
        return w[i] * system.A[i], w[i] * system.b[i]
    if idx.size <= system.n // 4:
        wi = w[idx]
        return wi @ system.A[idx], wi @ system.b[idx]
    return w @ system.A, w @ system.b


def _degenerate(unorm, qnorm):
    return unorm <= DEGENERACY_TOL * max(1.0, qnorm)


def base_row_step(state, system, w):
    """Project ``x`` onto the hyperplane ``{z : (A'w)'z = b'w}``."""
    q, bw = sketch_products(system, w)
    qq = q @ q
    qnorm = np.sqrt(qq)
    if _degenerate(qnorm, qnorm):
        return state._record(StepOutcome(StepKind.SKIPPED_DEGENERATE, qnorm))
    r = bw - q @ state.x
    state.x += q * (r / qq)
    return state._record(StepOutcome(StepKind.ADVANCED, qnorm))


def base_column_step(state, system, w):
    """Move ``x`` along ``w`` in ``R^d`` to minimise ``||b - A x||`` along that line."""
    w = _check_len(w, system.d, "w")
    idx = np.flatnonzero(w)
    Aw = system.A[:, idx] @ w[idx] if idx.size < system.d else system.A @ w
    nrm2 = Aw @ Aw
    nrm = np.sqrt(nrm2)
    if _degenerate(nrm, nrm):
        return state._record(StepOutcome(StepKind.SKIPPED_DEGENERATE, nrm))
    r = system.b - system.A @ state.x
    state.x += w * ((Aw @ r) / nrm2)
    return state._record(StepOutcome(StepKind.ADVANCED, nrm))


def full_ortho_step(state, system, w):
    """Rank-one step with complete orthogonalization against all past directions."""
    proj = state.memory
    if not isinstance(proj, FullProjector):
        raise TypeError("full_ortho_step needs a FullProjector memory")
    q, bw = sketch_products(system, w)
    S = proj.S
    # projecting twice keeps u orthogonal to past directions once S has drifted
    u = S @ (S @ q)
    unorm = np.linalg.norm(u)
    if proj.exhausted or _degenerate(unorm, np.linalg.norm(q)):
        return state._record(StepOutcome(StepKind.SKIPPED_DEGENERATE, unorm))
    r = bw - q @ state.x
    state.x += u * (r / (u @ q))
    # S - S q q'S / (q'S q), written with u = S q so the update stays symmetric
    S -= np.outer(u, u / (unorm * unorm))
    proj.advanced += 1
    proj.removed += 1
    if proj.advanced % RESYMMETRIZE_EVERY == 0:
        proj.resymmetrize()
    return state._record(StepOutcome(StepKind.ADVANCED, unorm))


def general_rpm_step(state, system, V):
    """Block step with sketch ``V`` (r x n) and the dense projector.

    ``x += M V (b - A x)`` and ``S -= M V A S`` with
    ``M = S A'V' (V A S A'V')^+``; the pseudoinverse drops singular values
    below ``1e-12 * sigma_max``.
    """
    proj = state.memory
    if not isinstance(proj, FullProjector):
        raise TypeError("general_rpm_step needs a FullProjector memory")
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if V.shape[1] != system.n:
        raise DimensionError(f"V must have {system.n} columns, got {V.shape[1]}")
    A = system.A
    VA = V @ A
    SAV = proj.S @ VA.T
    size = np.linalg.norm(SAV)
    if proj.exhausted or _degenerate(size, np.linalg.norm(VA)):
        return state._record(StepOutcome(StepKind.SKIPPED_DEGENERATE, size))
    G = VA @ SAV
    sv = np.linalg.svd(G, compute_uv=False)
    M = SAV @ np.linalg.pinv(G, rcond=PINV_RCOND)
    state.x += M @ (V @ system.b - VA @ state.x)
    proj.S -= M @ (VA @ proj.S)
    proj.advanced += 1
    proj.removed += int(np.sum(sv > PINV_RCOND * sv[0]))
    if proj.advanced % RESYMMETRIZE_EVERY == 0:
        proj.resymmetrize()
    return state._record(StepOutcome(StepKind.ADVANCED, size))


def modified_gram_schmidt(q, Z):
    """Remove from ``q`` its components along the orthonormal vectors ``Z``, one at a time."""
    t = np.array(q, dtype=float)
    for z in Z:
        t -= (z @ t) * z
    return t


def twice_iterated_gram_schmidt(q, Z):
    """Two passes of classical Gram-Schmidt: ``t = q - Z(Z'q)`` applied twice."""
    t = np.array(q, dtype=float)
    if len(Z) == 0:
        return t
    Zm = np.asarray(Z) if not isinstance(Z, np.ndarray) else Z
    t -= Zm.T @ (Zm @ t)
    t -= Zm.T @ (Zm @ t)
    return t


def partial_ortho_step(state, system, w):
    """Rank-one step orthogonalized against the last ``m`` directions only."""
    buf = state.memory
    if not isinstance(buf, PartialBuffer):
        raise TypeError("partial_ortho_step needs a PartialBuffer memory")
    q, bw = sketch_products(system, w)
    u = buf.orthogonalize(q)
    unorm = np.sqrt(u @ u)
    # a full orthonormal basis leaves nothing but rounding noise in u
    if len(buf) >= system.d or _degenerate(unorm, np.sqrt(q @ q)):
        return state._record(StepOutcome(StepKind.SKIPPED_DEGENERATE, unorm))
    r = bw - q @ state.x
    state.x += u * (r / (u @ q))
    buf.push(u / unorm)
    return state._record(StepOutcome(StepKind.ADVANCED, unorm))


_ROW_STEPS = {"base": base_row_step, "partial": partial_ortho_step,
              "complete": full_ortho_step}


def step(state, system, w, method, column=False):
    """Dispatch one step. Column sketches are mapped to ``A w`` for orthogonalized methods."""
    if column:
        if method == "base":
            return base_column_step(state, system, w)
        w = system.A @ _check_len(w, system.d, "w")
    return _ROW_STEPS[method](state, system, w)


@dataclass
class TerminationCriteria:
    """Stop when ``||b - A x_k|| <= residual_factor * ||b - A x_0||`` or a budget runs out.

    The residual is only evaluated every ``check_every`` iterations (and at
    the iteration cap).
    """

    residual_factor: float = None
    max_iterations: int = None
    wall_clock_budget: float = None
    check_every: int = 10

    def __post_init__(self):
        if (self.residual_factor is None and self.max_iterations is None
                and self.wall_clock_budget is None):
            raise ValueError("set at least one of residual_factor, max_iterations, "
                             "wall_clock_budget")
        if self.residual_factor is not None and not self.residual_factor > 0:
            raise ValueError("residual_factor must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


@dataclass
class SolveTrace:
    iterates: list = field(default_factory=list)
    sketches: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)


@dataclass
class SolveReport:
    x: np.ndarray
    method: str
    strategy: str
    n: int
    d: int
    seed: object
    iterations: int
    advanced_steps: int
    elapsed_seconds: float
    initial_residual: float
    final_residual: float
    timed_out: bool
    m: int = None
    residual_history: list = field(default_factory=list)
    trace: SolveTrace = None
    stopping_log: object = None

    @property
    def final_relative_residual(self):
        if self.initial_residual == 0:
            return 0.0
        return self.final_residual / self.initial_residual

    @property
    def converged(self):
        return not self.timed_out

    def to_json(self):
        method = self.method if self.method != "partial" else f"partial({self.m})"
        return {
            "method": method,
            "strategy": self.strategy,
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "iterations": self.iterations,
            "advanced_steps": self.advanced_steps,
            "elapsed_seconds": self.elapsed_seconds,
            "final_relative_residual": self.final_relative_residual,
            "timed_out": self.timed_out,
        }


def solve(system, strategy, method="base", m=0, criteria=None, seed=0, x0=None,
          gs_kind="mgs", record_trace=False, callback=None):
    """Run a rank-one solver until a termination criterion is met.

    Parameters
    ----------
    system : LinearSystem
    strategy : SketchSource or str
        A source, or a strategy token passed to :func:`make_source` with ``seed``.
    method : {"base", "partial", "complete"}
    m : int
        Buffer size for ``method="partial"``.
    criteria : TerminationCriteria
        Defaults to a residual factor of ``1e-8`` capped at ``100 * n * d`` iterations.
    record_trace : bool
        Keep every iterate, sketch vector and step outcome.
    callback : callable, optional
        Called as ``callback(k, x, w, outcome)`` after every step, where
        ``x`` is the live iterate (copy it to keep it).

    Returns
    -------
    SolveReport
        ``timed_out`` is set whenever the residual target was not confirmed
        before a budget (iterations, wall clock, or a finite sketch stream)
        ran out.
    """
    if method not in _ROW_STEPS:
        raise ValueError(f"unknown method {method!r}")
    if criteria is None:
        criteria = TerminationCriteria(1e-8, max_iterations=100 * system.n * system.d)
    source = strategy if isinstance(strategy, SketchSource) else make_source(
        strategy, system, seed)
    column = bool(getattr(source, "column", False))
    state = SolverState.start(system.d, method, m, x0, gs_kind)
    A, b = system.A, system.b

    def rnorm():
        return float(np.linalg.norm(b - A @ state.x))

    r0 = rnorm()
    target = None if criteria.residual_factor is None else criteria.residual_factor * r0
    history = [(0, r0)]
    trace = SolveTrace([state.x.copy()]) if record_trace else None
    advanced = 0
    converged = target is not None and r0 <= target
    last = r0
    ctx = SketchContext(system, state.x, 0)
    start = time.perf_counter()
    cap = criteria.max_iterations
    budget = criteria.wall_clock_budget

    while not converged:
        if cap is not None and state.k >= cap:
            break
        ctx.x, ctx.iteration = state.x, state.k
        try:
            w = source(ctx)
        except StopIteration:
            break
        outcome = step(state, system, w, method, column)
        advanced += outcome.advanced
        if callback is not None:
            callback(state.k, state.x, w, outcome)
        if trace is not None:
            trace.iterates.append(state.x.copy())
            trace.sketches.append(np.array(w))
            trace.outcomes.append(outcome)
        at_cap = cap is not None and state.k >= cap
        if state.k % criteria.check_every == 0 or at_cap:
            last = rnorm()
            history.append((state.k, last))
            if target is not None and last <= target:
                converged = True
            elif budget is not None and time.perf_counter() - start > budget:
                break

    elapsed = time.perf_counter() - start
    if history[-1][0] != state.k:
        last = rnorm()
        history.append((state.k, last))
        converged = converged or (target is not None and last <= target)
    return SolveReport(
        x=state.x, method=method, strategy=getattr(source, "token", str(strategy)),
        n=system.n, d=system.d, seed=seed, iterations=state.k,
        advanced_steps=advanced, elapsed_seconds=elapsed, initial_residual=r0,
        final_residual=last, timed_out=not converged,
        m=m if method == "partial" else None, residual_history=history, trace=trace)
