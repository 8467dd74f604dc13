"""Single-process simulation of the row-partitioned, limited-communication solver.

Rows of ``A`` are split across ``p`` virtual nodes. Node ``j`` only stores
the entries of ``x`` and of the orthonormal buffer vectors indexed by
``X_j``, the union of the column supports of its rows. Every value that
would cross a node boundary is counted in a :class:`CommLedger`.

Inner products that need contributions from several nodes are split by
component ownership: each column index is owned by the first node whose
``X_j`` contains it, so partial sums never count a shared entry twice.
Partial sums are always combined in ascending node order.
"""
import csv
import os
import tempfile
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolViolationError
from .sketches import ReplaySource, SketchContext
from .solvers import (DEGENERACY_TOL, SolveReport, TerminationCriteria,
                      solve)
from .system import rng_from_seed, split_seed

SUPPORT_TOL = 1e-14


@dataclass(frozen=True)
class Partition:
    """Row blocks, per-node column index sets and component owners (all 0-based)."""

    p: int
    row_blocks: tuple
    index_sets: tuple
    d: int

    @property
    def n(self):
        return sum(len(r) for r in self.row_blocks)

    @property
    def row_owner(self):
        owner = np.empty(self.n, dtype=int)
        for j, rows in enumerate(self.row_blocks):
            owner[rows] = j
        return owner

    @property
    def component_owner(self):
        """Owner node of each column index, ``-1`` if no node touches it."""
        owner = np.full(self.d, -1, dtype=int)
        for j in reversed(range(self.p)):
            owner[self.index_sets[j]] = j
        return owner


def _make_partition(blocks, sets, d):
    blocks = tuple(np.asarray(b, dtype=int) for b in blocks)
    sets = tuple(np.unique(np.asarray(s, dtype=int)) for s in sets)
    return Partition(len(blocks), blocks, sets, d)


def partition_banded(n, half_bandwidth, p):
    """Contiguous near-equal row blocks of a banded ``n x n`` matrix.

    ``X_j`` is the column range reached by the band from node ``j``'s rows:
    ``[first - h, last + h]`` clipped to ``[0, n)``.
    """
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    if half_bandwidth < 0:
        raise ValueError("half_bandwidth must be nonnegative")
    blocks = np.array_split(np.arange(n), p)
    sets = [np.arange(max(0, b[0] - half_bandwidth), min(n, b[-1] + half_bandwidth + 1))
            for b in blocks]
    return _make_partition(blocks, sets, n)


def partition_rows(A, p):
    """Contiguous row blocks of an arbitrary matrix with ``X_j`` from its nonzero pattern."""
    A = np.asarray(A)
    n, d = A.shape
    if not 1 <= p <= n:
        raise ValueError(f"need 1 <= p <= n, got p={p}, n={n}")
    blocks = np.array_split(np.arange(n), p)
    sets = [np.flatnonzero(np.any(A[b] != 0, axis=0)) for b in blocks]
    return _make_partition(blocks, sets, d)


@dataclass(frozen=True)
class OverlapStats:
    Q: int
    F: int
    pairwise: np.ndarray
    neighbours: tuple


def overlap_stats(part):
    """Largest pairwise overlap ``Q``, largest neighbourhood ``F`` and the overlap matrix.

    ``neighbours[j]`` lists every node whose index set meets ``X_j``,
    including ``j`` itself.
    """
    p = part.p
    pairwise = np.zeros((p, p), dtype=int)
    for i in range(p):
        for j in range(p):
            pairwise[i, j] = np.intersect1d(part.index_sets[i], part.index_sets[j],
                                            assume_unique=True).size
    off = pairwise[~np.eye(p, dtype=bool)]
    Q = int(off.max()) if off.size else 0
    # a node with an empty index set still belongs to its own neighbourhood
    neighbours = tuple(tuple(sorted(set(np.flatnonzero(pairwise[j] > 0).tolist()) | {j}))
                       for j in range(p))
    F = max(len(nb) for nb in neighbours)
    return OverlapStats(Q, F, pairwise, neighbours)


def _overlap_values(stats, origin):
    return int(sum(stats.pairwise[origin, i] for i in stats.neighbours[origin] if i != origin))


def iteration_comm_cost(part, origin_node, m, stats=None):
    """Values communicated by one iteration started at ``origin_node`` with ``m`` stored vectors."""
    if not 0 <= origin_node < part.p:
        raise ValueError(f"origin node {origin_node} out of range")
    if m < 0:
        raise ValueError("m must be nonnegative")
    stats = overlap_stats(part) if stats is None else stats
    p = part.p
    return _overlap_values(stats, origin_node) + m * (p - 1) + m * p * (p - 1)


def comm_cost_bound(part, m, stats=None):
    """``Q (F - 1) + m (p^2 - 1)``."""
    stats = overlap_stats(part) if stats is None else stats
    return stats.Q * (stats.F - 1) + m * (part.p ** 2 - 1)


@dataclass
class LedgerEntry:
    iteration: int
    node: int
    overlap_values: int
    first_pass_ip: int
    second_pass_ip: int
    advanced: bool
    stored: int
    extra_sync: int = 0

    @property
    def total(self):
        return self.overlap_values + self.first_pass_ip + self.second_pass_ip


CSV_HEADER = ["iteration", "node", "overlap_values", "first_pass_ip", "second_pass_ip", "total"]


@dataclass
class CommLedger:
    """Per-iteration message counts.

    ``total`` covers the query overlap and both Gram-Schmidt inner-product
    exchanges. The norm and step-size broadcasts are kept apart in
    ``extra_sync``.
    """

    entries: list = field(default_factory=list)

    def record(self, entry):
        self.entries.append(entry)

    def totals(self):
        return np.array([e.total for e in self.entries], dtype=int)

    def for_node(self, node):
        return [e for e in self.entries if e.node == node]

    def to_csv(self, path):
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".csv.tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(CSV_HEADER)
                for e in self.entries:
                    writer.writerow([e.iteration, e.node, e.overlap_values,
                                     e.first_pass_ip, e.second_pass_ip, e.total])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def support(v, tol=SUPPORT_TOL):
    v = np.asarray(v, dtype=float)
    return set(np.flatnonzero(np.abs(v) > tol).tolist())


def support_bound_check(q_support, Z_supports, u_support):
    """Gram-Schmidt output support is inside ``q``'s support plus the supports of the buffer
    vectors that meet it.

    Inside :func:`sim_solve` buffer supports are exact nonzero patterns while
    ``u`` is thresholded at ``1e-14 * max(1, ||q||_inf)``: a buffer entry far
    below the threshold still feeds a nonzero inner product, so dropping it
    from the buffer support would flag rounding as a violation.
    """
    q_support = set(q_support)
    allowed = set(q_support)
    for zs in Z_supports:
        zs = set(zs)
        if zs & q_support:
            allowed |= zs
    return set(u_support) <= allowed


class NodeLocalSource:
    """Sketches built only from the rows a node owns.

    kind ``"uniform"`` picks an owned row uniformly, ``"cyclic"`` sweeps the
    owned rows in a fresh random order each pass and ``"gaussian"`` returns
    a standard normal combination of the owned rows. Each node draws from
    its own split stream.
    """

    def __init__(self, kind, part, n, seed=0):
        if kind not in ("uniform", "cyclic", "gaussian"):
            raise ValueError(f"node-local sketch must be uniform, cyclic or gaussian, got {kind!r}")
        self.kind = kind
        self.token = kind
        self.part = part
        self.n = n
        self.rngs = [rng_from_seed(s) for s in split_seed(seed, part.p)]
        self._orders = [np.empty(0, dtype=int)] * part.p
        self._pos = [0] * part.p

    def __call__(self, node, ctx=None):
        rows = self.part.row_blocks[node]
        rng = self.rngs[node]
        w = np.zeros(self.n)
        if self.kind == "gaussian":
            w[rows] = rng.standard_normal(rows.size)
            return w
        if self.kind == "uniform":
            w[rows[rng.integers(rows.size)]] = 1.0
            return w
        if self._pos[node] >= self._orders[node].size:
            self._orders[node] = rng.permutation(rows.size)
            self._pos[node] = 0
        w[rows[self._orders[node][self._pos[node]]]] = 1.0
        self._pos[node] += 1
        return w


class _GlobalSourceAdapter:
    """Wraps an ordinary sketch source; support is checked against the origin node."""

    def __init__(self, source):
        self.source = source
        self.token = getattr(source, "token", "source")

    def __call__(self, node, ctx):
        return self.source(ctx)


@dataclass
class SimResult:
    report: SolveReport
    ledger: CommLedger
    sketches: list
    origins: list
    support_checks_passed: bool = True


class _Node:
    def __init__(self, j, part, A, b, x0, owner, m):
        self.j = j
        self.rows = part.row_blocks[j]
        self.cols = part.index_sets[j]
        self.A = A[np.ix_(self.rows, self.cols)]
        self.b = b[self.rows]
        self.x = x0[self.cols].copy()
        self.own = np.flatnonzero(owner[self.cols] == j)
        # owning every column means no slicing, which keeps p = 1 bitwise sequential
        self.owns_all = self.own.size == self.cols.size
        self.Z = deque(maxlen=m)

    def Zmat(self):
        return np.array(self.Z) if self.Z else np.zeros((0, self.cols.size))


def _local_products(node, w_local):
    idx = np.flatnonzero(w_local)
    if idx.size == 1:
        i = idx[0]
        return w_local[i] * node.A[i], w_local[i] * node.b[i]
    if idx.size <= node.rows.size // 4:
        wi = w_local[idx]
        return wi @ node.A[idx], wi @ node.b[idx]
    return w_local @ node.A, w_local @ node.b


def round_robin(p):
    return lambda k: k % p


def sim_solve(system, part, strategy="uniform", criteria=None, m=0, seed=0, x0=None,
              schedule=None, check_support=False):
    """Run the limited-communication solver on ``p`` simulated nodes.

    Parameters
    ----------
    system : LinearSystem
    part : Partition
        Must cover the nonzero pattern of every owned row.
    strategy : str, NodeLocalSource or SketchSource
        ``"uniform" | "cyclic" | "gaussian"`` build a :class:`NodeLocalSource`.
        Any other source is queried directly and must only touch rows owned
        by the scheduled node.
    m : int
        Capacity of the distributed orthonormal buffer (FIFO eviction).
    schedule : callable, optional
        ``k -> origin node``; round robin by default.
    check_support : bool
        Assert the Gram-Schmidt support containment at every step.

    Returns
    -------
    SimResult
        ``report`` mirrors :func:`solve`; ``sketches`` and ``origins`` allow
        replaying the run sequentially.
    """
    A, b = system.A, system.b
    n, d = system.n, system.d
    if part.n != n or part.d != d:
        raise ValueError("partition does not match the system dimensions")
    for j in range(part.p):
        touched = np.flatnonzero(np.any(A[part.row_blocks[j]] != 0, axis=0))
        if not np.isin(touched, part.index_sets[j]).all():
            raise ValueError(f"node {j} rows reach columns outside its index set")
    if criteria is None:
        criteria = TerminationCriteria(1e-8, max_iterations=100 * n * d)
    if isinstance(strategy, str):
        source = NodeLocalSource(strategy, part, n, seed)
    elif isinstance(strategy, NodeLocalSource):
        source = strategy
    else:
        source = _GlobalSourceAdapter(strategy)
    schedule = round_robin(part.p) if schedule is None else schedule

    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    owner = part.component_owner
    nodes = [_Node(j, part, A, b, x0, owner, m) for j in range(part.p)]
    stats = overlap_stats(part)
    p = part.p
    row_owner = part.row_owner
    ledger = CommLedger()
    sketches, origins = [], []
    support_ok = True

    def gather_x():
        x = x0.copy()
        covered = owner >= 0
        for nd in nodes:
            mine = owner[nd.cols] == nd.j
            x[nd.cols[mine]] = nd.x[mine]
        x[~covered] = x0[~covered]
        return x

    def rnorm():
        return float(np.linalg.norm(b - A @ gather_x()))

    r0 = rnorm()
    target = None if criteria.residual_factor is None else criteria.residual_factor * r0
    history = [(0, r0)]
    converged = target is not None and r0 <= target
    last = r0
    k = advanced = 0
    cap = criteria.max_iterations
    start = time.perf_counter()

    while not converged:
        if cap is not None and k >= cap:
            break
        j = schedule(k)
        origin = nodes[j]
        ctx = SketchContext(system, gather_x(), k)
        try:
            w = np.asarray(source(j, ctx), dtype=float)
        except StopIteration:
            break
        outside = np.flatnonzero((w != 0) & (row_owner != j))
        if outside.size:
            raise ProtocolViolationError(
                f"sketch at node {j} touches rows {outside.tolist()} it does not own")
        sketches.append(w)
        origins.append(j)

        qj, bw = _local_products(origin, w[origin.rows])
        r = bw - qj @ origin.x
        stored = len(origin.Z)

        # first pass: inner products against the buffer at the origin, then broadcast
        Zj = origin.Zmat()
        ip1 = Zj @ qj
        t1 = []
        for nd in nodes:
            qi = np.zeros(nd.cols.size)
            common, ii, jj = np.intersect1d(nd.cols, origin.cols, assume_unique=True,
                                            return_indices=True)
            qi[ii] = qj[jj]
            t1.append(qi - nd.Zmat().T @ ip1 if stored else qi)
        # second pass: disjoint partial inner products, summed in node order
        if stored:
            ip2 = None
            for nd, ti in zip(nodes, t1):
                Zi = nd.Zmat()
                part_ip = Zi @ ti if nd.owns_all else Zi[:, nd.own] @ ti[nd.own]
                ip2 = part_ip if ip2 is None else ip2 + part_ip
            u = [ti - nd.Zmat().T @ ip2 for nd, ti in zip(nodes, t1)]
        else:
            u = t1
        unorm2 = None
        for nd, ui in zip(nodes, u):
            mine = ui if nd.owns_all else ui[nd.own]
            piece = mine @ mine
            unorm2 = piece if unorm2 is None else unorm2 + piece
        unorm = np.sqrt(unorm2)
        qnorm = np.sqrt(qj @ qj)

        if check_support:
            u_full = np.zeros(d)
            for nd, ui in zip(nodes, u):
                mine = owner[nd.cols] == nd.j
                u_full[nd.cols[mine]] = ui[mine]
            z_sup = []
            for t in range(stored):
                z = np.zeros(d)
                for nd in nodes:
                    mine = owner[nd.cols] == nd.j
                    z[nd.cols[mine]] = nd.Z[t][mine]
                z_sup.append(support(z, 0.0))
            scale = max(1.0, float(np.max(np.abs(qj), initial=0.0)))
            q_full = np.zeros(d)
            q_full[origin.cols] = qj
            ok = support_bound_check(support(q_full), z_sup,
                                     support(u_full, SUPPORT_TOL * scale))
            support_ok = support_ok and ok
            if not ok:
                raise AssertionError(f"Gram-Schmidt support bound violated at iteration {k}")

        is_adv = stored < d and not unorm <= DEGENERACY_TOL * max(1.0, qnorm)
        ledger.record(LedgerEntry(
            iteration=k, node=j, overlap_values=_overlap_values(stats, j),
            first_pass_ip=stored * (p - 1), second_pass_ip=stored * p * (p - 1),
            advanced=is_adv, stored=stored,
            extra_sync=p * (p - 1) + ((p - 1) if is_adv else 0)))
        if is_adv:
            alpha = r / (u[j] @ qj)
            for nd, ui in zip(nodes, u):
                nd.x += ui * alpha
                if m > 0:
                    nd.Z.append(ui / unorm)
            advanced += 1
        k += 1
        at_cap = cap is not None and k >= cap
        if k % criteria.check_every == 0 or at_cap:
            last = rnorm()
            history.append((k, last))
            if target is not None and last <= target:
                converged = True
            elif (criteria.wall_clock_budget is not None
                  and time.perf_counter() - start > criteria.wall_clock_budget):
                break

    if history[-1][0] != k:
        last = rnorm()
        history.append((k, last))
        converged = converged or (target is not None and last <= target)
    report = SolveReport(
        x=gather_x(), method="distributed", strategy=source.token, n=n, d=d, seed=seed,
        iterations=k, advanced_steps=advanced,
        elapsed_seconds=time.perf_counter() - start, initial_residual=r0,
        final_residual=last, timed_out=not converged, m=m, residual_history=history)
    return SimResult(report, ledger, sketches, origins, support_ok)


def sequential_replay(system, sketches, m, x0=None, gs_kind="tigs"):
    """Run the sequential partial solver on a recorded sketch sequence."""
    crit = TerminationCriteria(max_iterations=len(sketches), check_every=max(1, len(sketches)))
    return solve(system, ReplaySource(sketches), method="partial", m=m, criteria=crit,
                 x0=x0, gs_kind=gs_kind, record_trace=True)
