"""Subspaces, stopping times and rate bounds for rank-one projection methods.

The functions here are oracles: they take recorded sketch directions or
iterates and compute the quantities the convergence theory is stated in
(spanning times, Meany-type contraction bounds, limit points), so tests can
compare a run against what the theory predicts.
"""
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, IncompleteLogError, PreconditionError

RANK_TOL = 1e-10
MEANY_CAP = 15


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis stored as the columns of ``basis``.

    ``ambient`` is ``"row"`` for subspaces of ``R^d`` and ``"column"`` for
    subspaces of ``R^n``.
    """

    basis: np.ndarray
    ambient: str = "row"

    @property
    def dim(self):
        return self.basis.shape[1]

    @property
    def size(self):
        return self.basis.shape[0]

    def project(self, v):
        B = self.basis
        return B @ (B.T @ v)

    def project_complement(self, v):
        return v - self.project(v)

    def projector(self):
        return self.basis @ self.basis.T

    def contains(self, v, tol=1e-8):
        v = np.asarray(v, dtype=float)
        return np.linalg.norm(self.project_complement(v)) <= tol * max(1.0, np.linalg.norm(v))


def orth_basis(M, ambient="row", tol=RANK_TOL):
    """Orthonormal basis for the column span of ``M`` (SVD, cutoff ``tol * sigma_max``)."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.size == 0:
        return SubspaceBasis(np.zeros((M.shape[0], 0)), ambient)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return SubspaceBasis(np.zeros((M.shape[0], 0)), ambient)
    return SubspaceBasis(U[:, s > tol * s[0]], ambient)


def full_space(size, ambient="row"):
    return SubspaceBasis(np.eye(size), ambient)


def row_space(A):
    return orth_basis(np.asarray(A, dtype=float).T, "row")


def column_space(A):
    return orth_basis(np.asarray(A, dtype=float), "column")


def finite_population_R(A, W):
    """Span of ``{A' w : w in W}`` for a finite population of row sketches."""
    A = np.asarray(A, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] == 0:
        raise PreconditionError("population W is empty")
    return orth_basis(A.T @ W.T, "row")


def finite_population_C(A, W):
    """Span of ``{A w : w in W}`` for a finite population of column sketches."""
    A = np.asarray(A, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape[0] == 0:
        raise PreconditionError("population W is empty")
    return orth_basis(A @ W.T, "column")


def restricted_row_space(A, b, x0):
    """Span of the rows whose equations ``x0`` violates."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    viol = np.abs(A @ x0 - b)
    scale = np.linalg.norm(A, axis=1) * np.linalg.norm(x0) + np.abs(b)
    rows = A[viol > RANK_TOL * scale]
    if rows.shape[0] == 0:
        return SubspaceBasis(np.zeros((A.shape[1], 0)), "row")
    return orth_basis(rows.T, "row")


# Meany bound --------------------------------------------------------------

def _as_unit_rows(U):
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.size == 0:
        return U.reshape(0, 0)
    norms = np.linalg.norm(U, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-10):
        raise PreconditionError("all vectors must have unit norm")
    return U


def _dedupe(U):
    keep = []
    for u in U:
        if not any(np.allclose(u, v, atol=1e-12) or np.allclose(u, -v, atol=1e-12)
                   for v in keep):
            keep.append(u)
    return np.array(keep)


def _log_gram_det(F):
    s = np.linalg.svd(F, compute_uv=False)
    if np.any(s == 0):
        return -np.inf
    return float(2.0 * np.sum(np.log(s)))


@dataclass(frozen=True)
class MeanyBound:
    """``gamma = 1 - exp(log_min_det)``; ``subsets`` counts the determinants evaluated."""

    gamma: float
    log_min_det: float
    rank: int
    subsets: int


def meany_bound(U, cap=MEANY_CAP):
    """Minimum Gram determinant over maximal linearly independent subsets of ``U``.

    Repeated vectors (up to sign) are dropped first since they cannot change
    the set of spans. If what remains is independent there is a single
    maximal subset; otherwise every size-``rank`` subset is tried, which is
    refused above ``cap`` vectors.

    Determinants are formed as the product of squared singular values of the
    subset, kept in log form so that tiny values stay informative when
    ``gamma`` itself rounds to 1.
    """
    U = _dedupe(_as_unit_rows(U))
    if U.shape[0] == 0:
        return MeanyBound(0.0, 0.0, 0, 0)
    s = np.linalg.svd(U, compute_uv=False)
    cut = RANK_TOL * s[0]
    rank = int(np.sum(s > cut))
    count = U.shape[0]
    if rank == count:
        logdet = _log_gram_det(U.T)
        return MeanyBound(float(1.0 - np.exp(logdet)), logdet, rank, 1)
    if count > cap:
        raise CapacityError(
            f"{count} distinct vectors of rank {rank} exceed the enumeration cap of {cap}; "
            "use a sampling-based bound instead")
    best = np.inf
    checked = 0
    for idx in itertools.combinations(range(count), rank):
        F = U[list(idx)].T
        sv = np.linalg.svd(F, compute_uv=False)
        if sv[-1] <= cut:
            continue
        checked += 1
        best = min(best, float(2.0 * np.sum(np.log(sv))))
    return MeanyBound(float(1.0 - np.exp(best)), best, rank, checked)


def meany_gamma(U, cap=MEANY_CAP):
    """``1 - min det(F'F)`` over maximal linearly independent subsets ``F`` of ``U``."""
    return meany_bound(U, cap).gamma


def product_projection_norm(U):
    """Operator norm of ``(I - u_k u_k')...(I - u_1 u_1')`` restricted to ``span(U)``."""
    U = _as_unit_rows(U)
    if U.shape[0] == 0:
        return 0.0
    d = U.shape[1]
    Q = np.eye(d)
    for u in U:
        Q -= np.outer(u, u @ Q)
    P = orth_basis(U.T).projector()
    return float(np.linalg.norm(Q @ P, 2))


# stopping times -----------------------------------------------------------

@dataclass
class StoppingTimeLog:
    """Spanning epochs of a direction stream.

    ``taus[l]`` is the index closing epoch ``l``; the first epoch covers
    indices ``0..taus[0]`` and later ones ``taus[l-1]+1..taus[l]``.
    ``gammas[l]`` is ``None`` when the bound could not be computed.
    """

    T: int = None
    taus: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    log_min_dets: list = field(default_factory=list)
    epoch_direction_sets: list = field(default_factory=list)
    incomplete: bool = False
    target_dim: int = 0
    length: int = 0

    @property
    def gaps(self):
        """Epoch lengths ``taus[l] - taus[l-1]`` with ``taus[-1] = -1``."""
        return list(np.diff([-1] + list(self.taus)))

    def to_json(self, **kwargs):
        return json.dumps({
            "T": self.T,
            "taus": [int(t) for t in self.taus],
            "gammas": [None if g is None else float(g) for g in self.gammas],
            "log_min_dets": [None if g is None else float(g) for g in self.log_min_dets],
            "incomplete": self.incomplete,
            "target_dim": self.target_dim,
            "length": self.length,
        }, **kwargs)


class _EpochAccumulator:
    def __init__(self, target):
        self.target = target
        self.reset()

    def reset(self):
        self.Q = np.zeros((self.target.size, 0))
        self.directions = []

    def add(self, v):
        """Add ``v``; return True once the accumulated span covers the target."""
        nv = np.linalg.norm(v)
        if nv == 0:
            return False
        self.directions.append(v / nv)
        t = self.target.project(v)
        for _ in range(2):
            t = t - self.Q @ (self.Q.T @ t)
        nt = np.linalg.norm(t)
        if nt > RANK_TOL * nv and self.Q.shape[1] < self.target.dim:
            self.Q = np.column_stack([self.Q, t / nt])
        return self.Q.shape[1] >= self.target.dim


def stopping_times(A, directions, target, side="row", gammas=True, cap=MEANY_CAP):
    """Record the epochs at which the images of ``directions`` re-span ``target``.

    Parameters
    ----------
    A : ndarray, shape (n, d)
    directions : iterable of ndarray
        Sketch vectors ``w_k``; images are ``A' w`` for ``side="row"`` and
        ``A w`` for ``side="column"``.
    target : SubspaceBasis
        Subspace the images live in (e.g. ``row_space(A)``).
    gammas : bool
        Compute a Meany bound for every completed epoch. Epochs that are too
        large to enumerate get ``None``.
    """
    if target.dim == 0:
        raise PreconditionError("target subspace is empty")
    A = np.asarray(A, dtype=float)
    acc = _EpochAccumulator(target)
    log = StoppingTimeLog(target_dim=target.dim)
    k = -1
    for k, w in enumerate(directions):
        w = np.asarray(w, dtype=float)
        v = A.T @ w if side == "row" else A @ w
        if acc.add(v):
            log.taus.append(k)
            log.epoch_direction_sets.append(np.array(acc.directions))
            if gammas:
                try:
                    mb = meany_bound(acc.directions, cap)
                    log.gammas.append(mb.gamma)
                    log.log_min_dets.append(mb.log_min_det)
                except CapacityError:
                    log.gammas.append(None)
                    log.log_min_dets.append(None)
            acc.reset()
    log.length = k + 1
    log.T = log.taus[0] if log.taus else None
    log.incomplete = log.length == 0 or (not log.taus) or log.taus[-1] != k
    return log


@dataclass
class EpochRateResult:
    """Per-epoch comparison of the observed error against the product bound."""

    per_epoch: list
    observed: list
    bounds: list

    @property
    def ok(self):
        return all(self.per_epoch)

    @property
    def violated(self):
        return [i for i, good in enumerate(self.per_epoch) if not good]

    def __bool__(self):
        return self.ok


def epoch_rate_check(log, errors, atol=1e-10):
    """Check ``errors[tau_l + 1] <= prod(gamma_1..gamma_l) * errors[0] + atol`` for every epoch.

    ``errors[k]`` is the squared error measure after ``k`` steps, for example
    ``||P_R(x_k - x*)||**2`` for row-action methods or
    ``||r_k - P_L r_0||**2`` for column-action methods.
    """
    errors = np.asarray(errors, dtype=float)
    per, observed, bounds = [], [], []
    log_prod = 0.0
    for ell, tau in enumerate(log.taus):
        if ell >= len(log.log_min_dets) or log.log_min_dets[ell] is None:
            raise IncompleteLogError(f"no rate bound recorded for epoch {ell}")
        if tau + 1 >= errors.size:
            raise IncompleteLogError(f"no error recorded after step {tau} (epoch {ell})")
        # log(gamma) via log1p(-det) so tiny determinants do not round gamma to 1
        det = np.exp(log.log_min_dets[ell])
        log_prod += np.log1p(-det) if det < 1 else -np.inf
        bound = np.exp(log_prod) * errors[0]
        observed.append(float(errors[tau + 1]))
        bounds.append(float(bound))
        per.append(bool(errors[tau + 1] <= bound + atol))
    return EpochRateResult(per, observed, bounds)


class AdaptiveEpochTracker:
    """Streaming epochs for adaptive schemes, read off the span of the iterate errors.

    Starting from ``xi``, errors ``e_j = x_j - x_ref`` are accumulated until
    a step that moves the iterate lands inside the span collected so far (or
    the span already has dimension ``rrow_dim``); that step index closes the
    epoch and the next one starts right after it. Reaching the solution set
    also closes an epoch and sets ``terminated``.

    Feed iterates in order with :meth:`push`, starting with ``x_0``.
    """

    def __init__(self, x_ref, rrow_dim, tol=1e-8):
        self.x_ref = np.asarray(x_ref, dtype=float)
        self.rrow_dim = rrow_dim
        self.tol = tol
        self.taus = []
        self.terminated = False
        self._prev = None
        self._j = -1
        self._scale = None
        self._Q = None

    def _fresh(self, e):
        ne = np.linalg.norm(e)
        if ne <= self.tol * self._scale:
            return np.zeros((e.size, 0))
        return (e / ne)[:, None]

    def push(self, x):
        x = np.array(x, dtype=float)
        e = x - self.x_ref
        if self._prev is None:
            self._scale = np.linalg.norm(e)
            self.terminated = self._scale == 0
            self._Q = None if self.terminated else self._fresh(e)
            self._prev, self._j = x, 0
            return
        j = self._j
        self._j += 1
        moved = not np.array_equal(x, self._prev)
        self._prev = x
        if self.terminated or not moved:
            return
        ne = np.linalg.norm(e)
        if ne <= self.tol * self._scale:
            self.taus.append(j)
            self.terminated = True
            return
        Q = self._Q
        t = e.copy()
        for _ in range(2):
            t -= Q @ (Q.T @ t)
        nt = np.linalg.norm(t)
        if nt <= self.tol * ne or Q.shape[1] >= self.rrow_dim:
            self.taus.append(j)
            self._Q = self._fresh(e)
        else:
            self._Q = np.column_stack([Q, t / nt])

    @property
    def gaps(self):
        return list(np.diff([-1] + self.taus))


def adaptive_stopping_times(iterates, x_ref, rrow_dim, tol=1e-8):
    """Run :class:`AdaptiveEpochTracker` over ``iterates``; returns ``(taus, terminated)``."""
    tracker = AdaptiveEpochTracker(x_ref, rrow_dim, tol)
    for x in iterates:
        tracker.push(x)
    return tracker.taus, tracker.terminated


# limit points and monotonicity -------------------------------------------

def limit_point(x0, x_star, R):
    """``P_N x0 + P_R x*`` where ``N`` is the orthogonal complement of ``R``."""
    x0 = np.asarray(x0, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    return R.project_complement(x0) + R.project(x_star)


def verify_limit_point(x_final, x0, x_star, R, tol=1e-8):
    """Return ``(ok, defect)`` comparing ``x_final`` with ``P_N x0 + P_R x*``."""
    x_star = np.asarray(x_star, dtype=float)
    defect = float(np.linalg.norm(np.asarray(x_final) - limit_point(x0, x_star, R)))
    return defect <= tol * (1.0 + np.linalg.norm(x_star)), defect


@dataclass
class MonotonicityReport:
    max_increase: float
    max_drift: float
    ok: bool

    def __bool__(self):
        return self.ok


def row_monotonicity(iterates, x_star, R, atol=1e-10):
    """``||P_R(x_k - x*)||`` non-increasing and ``P_N(x_k - x*)`` constant along a run."""
    errs = [np.asarray(x) - x_star for x in iterates]
    inside = np.array([np.linalg.norm(R.project(e)) for e in errs])
    outside = [R.project_complement(e) for e in errs]
    inc = float(np.max(np.diff(inside), initial=0.0))
    drift = float(max((np.linalg.norm(o - outside[0]) for o in outside), default=0.0))
    return MonotonicityReport(inc, drift, inc <= atol and drift <= atol)


def column_monotonicity(residuals, L, atol=1e-10):
    """``P_L r_k`` constant and ``||r_k - P_L r_0||`` non-increasing.

    ``L`` is the complement (inside ``R^n``) of the span of the column
    images ``A w``.
    """
    rs = [np.asarray(r, dtype=float) for r in residuals]
    fixed = L.project(rs[0])
    moving = np.array([np.linalg.norm(r - fixed) for r in rs])
    inc = float(np.max(np.diff(moving), initial=0.0))
    drift = float(max(np.linalg.norm(L.project(r) - fixed) for r in rs))
    return MonotonicityReport(inc, drift, inc <= atol and drift <= atol)


def complement(basis):
    """Orthogonal complement of ``basis`` inside its ambient space."""
    B = basis.basis
    n = B.shape[0]
    if basis.dim == 0:
        return SubspaceBasis(np.eye(n), basis.ambient)
    U, _, _ = np.linalg.svd(B, full_matrices=True)
    return SubspaceBasis(U[:, basis.dim:], basis.ambient)
