"""Streaming sketch vectors ``w_k`` and residual-adaptive row selectors.

Every source is a callable taking a :class:`SketchContext` and returning one
vector. Row-action sources return length-``n`` vectors; column-action
sources (``column = True``) return length-``d`` vectors. Non-adaptive
sources never look at ``ctx.x``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateDistributionError, DegenerateRowError,
                     PreconditionError)
from .system import LinearSystem, rng_from_seed, signed_residual


@dataclass
class SketchContext:
    """What a selector may see: the system, the current iterate and ``k``."""

    system: LinearSystem
    x: np.ndarray
    iteration: int = 0


def basis_vector(size, index):
    e = np.zeros(size)
    e[index] = 1.0
    return e


class SketchSource:
    """Base class. Subclasses implement ``__call__(ctx) -> vector``."""

    column = False
    adaptive = False
    token = "source"

    def __call__(self, ctx):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.token!r})"


class GaussianSketch(SketchSource):
    """Independent standard normal vectors of length ``n``."""

    token = "gaussian"

    def __init__(self, n, seed):
        self.n = n
        self.rng = rng_from_seed(seed)

    def __call__(self, ctx=None):
        return self.rng.standard_normal(self.n)


class CountSketch(SketchSource):
    """Rows of a K x n count sketch, regenerated block by block.

    Each block assigns every coordinate a uniform bucket in ``0..K-1`` and a
    random sign; the block's K rows are then emitted in order.
    """

    def __init__(self, n, K=10, seed=0):
        if K < 1:
            raise ValueError(f"count sketch needs K >= 1, got {K}")
        self.n, self.K = n, K
        self.rng = rng_from_seed(seed)
        self._block = None
        self._next = K
        self.token = f"countsketch:{K}"

    def _new_block(self):
        buckets = self.rng.integers(self.K, size=self.n)
        signs = self.rng.choice(np.array([-1.0, 1.0]), size=self.n)
        block = np.zeros((self.K, self.n))
        block[buckets, np.arange(self.n)] = signs
        self._block = block
        self._next = 0

    def __call__(self, ctx=None):
        if self._next >= self.K:
            self._new_block()
        w = self._block[self._next].copy()
        self._next += 1
        return w


class UniformRows(SketchSource):
    """Standard basis vectors with indices drawn uniformly with replacement."""

    token = "uniform"

    def __init__(self, n, seed):
        self.n = n
        self.rng = rng_from_seed(seed)

    def __call__(self, ctx=None):
        return basis_vector(self.n, self.rng.integers(self.n))


class RowNormRows(SketchSource):
    """Basis vectors drawn with probability proportional to squared row norm."""

    token = "rownorm"

    def __init__(self, A, seed):
        weights = np.einsum("ij,ij->i", A, A)
        total = weights.sum()
        if not total > 0:
            raise DegenerateDistributionError("all rows of A are zero")
        self.n = A.shape[0]
        self.p = weights / total
        self.rng = rng_from_seed(seed)

    def __call__(self, ctx=None):
        return basis_vector(self.n, self.rng.choice(self.n, p=self.p))


class PermutationRows(SketchSource):
    """Sampling without replacement, reshuffled after each sweep of ``size`` draws."""

    token = "cyclic"

    def __init__(self, size, seed):
        self.size = size
        self.rng = rng_from_seed(seed)
        self._order = np.empty(0, dtype=int)
        self._pos = 0

    def next_index(self):
        if self._pos >= self._order.size:
            self._order = self.rng.permutation(self.size)
            self._pos = 0
        i = int(self._order[self._pos])
        self._pos += 1
        return i

    def __call__(self, ctx=None):
        return basis_vector(self.size, self.next_index())


class ColumnPermutation(PermutationRows):
    """Coordinate vectors ``f_j`` of length ``d`` for column-action methods."""

    column = True
    token = "colcyclic"


class ColumnUniform(UniformRows):
    column = True
    token = "coluniform"


class ReplaySource(SketchSource):
    """Replays a recorded sequence of vectors, then raises ``StopIteration``."""

    token = "replay"

    def __init__(self, vectors, column=False):
        self.vectors = [np.asarray(v, dtype=float) for v in vectors]
        self.column = column
        self._pos = 0

    def __call__(self, ctx=None):
        if self._pos >= len(self.vectors):
            raise StopIteration("replay sequence exhausted")
        w = self.vectors[self._pos]
        self._pos += 1
        return w.copy()


# adaptive selectors -------------------------------------------------------

def _abs_residual(ctx):
    return np.abs(signed_residual(ctx.system, ctx.x))


def _row_norms(A):
    return np.sqrt(np.einsum("ij,ij->i", A, A))


def max_residual_index(ctx):
    # np.argmax returns the first maximiser, which is the tie-break we want
    return int(np.argmax(_abs_residual(ctx)))


def select_max_residual(ctx):
    """Basis vector of the equation with the largest ``|A_i x - b_i|``."""
    return basis_vector(ctx.system.n, max_residual_index(ctx))


def max_distance_scores(ctx, exponent=2):
    norms = _row_norms(ctx.system.A)
    if np.any(norms == 0):
        raise DegenerateRowError(
            f"row {int(np.flatnonzero(norms == 0)[0])} of A is zero")
    return _abs_residual(ctx) / norms ** exponent


def max_distance_index(ctx, exponent=2):
    return int(np.argmax(max_distance_scores(ctx, exponent)))


def select_max_distance(ctx, exponent=2):
    """Basis vector maximising ``|r_i| / ||A_i||**exponent``.

    ``exponent=2`` divides by the squared row norm; ``exponent=1`` gives the
    Euclidean distance to the hyperplane.
    """
    if exponent not in (1, 2):
        raise ValueError("exponent must be 1 or 2")
    return basis_vector(ctx.system.n, max_distance_index(ctx, exponent))


def grk_candidates(ctx):
    """Candidate rows and the threshold used by greedy randomized Kaczmarz.

    Returns
    -------
    candidates : ndarray of int
        Rows with ``r_i**2 / ||A_i||**2 >= threshold * ||r||**2``.
    r : ndarray
        The signed residual ``A x - b``.
    threshold : float
    """
    A = ctx.system.A
    r = signed_residual(ctx.system, ctx.x)
    r2 = r * r
    rnorm2 = r2.sum()
    if not rnorm2 > 0:
        raise PreconditionError("greedy randomized Kaczmarz needs a nonzero residual")
    row2 = np.einsum("ij,ij->i", A, A)
    if np.any(row2 == 0):
        raise DegenerateRowError("A has a zero row")
    ratio = r2 / row2
    threshold = 0.5 * (ratio.max() / rnorm2 + 1.0 / row2.sum())
    mask = ratio >= threshold * rnorm2
    # the maximiser always qualifies in exact arithmetic; keep it under rounding
    mask[int(np.argmax(ratio))] = True
    return np.flatnonzero(mask), r, threshold


def grk_index(ctx, rng):
    cand, r, _ = grk_candidates(ctx)
    cum = np.cumsum(r[cand] ** 2)
    pick = np.searchsorted(cum, rng.random() * cum[-1], side="right")
    return int(cand[min(pick, cand.size - 1)])


def select_grk(ctx, rng):
    """Sample a candidate row with probability proportional to ``r_i**2``."""
    return basis_vector(ctx.system.n, grk_index(ctx, rng))


def skm_index(ctx, beta, rng):
    n = ctx.system.n
    if not 1 <= beta <= n:
        raise ValueError(f"beta must lie in [1, {n}], got {beta}")
    subset = np.sort(rng.choice(n, size=beta, replace=False))
    res = _abs_residual(ctx)[subset]
    return int(subset[np.argmax(res)])


def select_skm(ctx, beta, rng):
    """Max-residual row among ``beta`` distinct rows drawn uniformly."""
    return basis_vector(ctx.system.n, skm_index(ctx, beta, rng))


class MaxResidual(SketchSource):
    adaptive = True
    token = "maxres"

    def __call__(self, ctx):
        return select_max_residual(ctx)


class MaxDistance(SketchSource):
    adaptive = True

    def __init__(self, exponent=2):
        if exponent not in (1, 2):
            raise ValueError("exponent must be 1 or 2")
        self.exponent = exponent
        self.token = "maxdist" if exponent == 2 else "maxdist:1"

    def __call__(self, ctx):
        return select_max_distance(ctx, self.exponent)


class GreedyRandomizedKaczmarz(SketchSource):
    adaptive = True
    token = "grk"

    def __init__(self, seed):
        self.rng = rng_from_seed(seed)

    def __call__(self, ctx):
        return select_grk(ctx, self.rng)


class SamplingKaczmarzMotzkin(SketchSource):
    adaptive = True

    def __init__(self, beta, seed):
        if beta < 1:
            raise ValueError(f"beta must be >= 1, got {beta}")
        self.beta = beta
        self.rng = rng_from_seed(seed)
        self.token = f"skm:{beta}"

    def __call__(self, ctx):
        return select_skm(ctx, self.beta, self.rng)


STRATEGY_TOKENS = ("gaussian", "countsketch:K", "uniform", "rownorm", "cyclic",
                   "colcyclic", "coluniform", "maxres", "maxdist", "grk", "skm:B")


def make_source(token, system, seed=0):
    """Build a source from a strategy token such as ``countsketch:10`` or ``skm:3``."""
    name, _, arg = token.strip().lower().partition(":")
    n, d = system.n, system.d
    if name == "gaussian":
        return GaussianSketch(n, seed)
    if name == "countsketch":
        return CountSketch(n, int(arg) if arg else 10, seed)
    if name == "uniform":
        return UniformRows(n, seed)
    if name == "rownorm":
        return RowNormRows(system.A, seed)
    if name == "cyclic":
        return PermutationRows(n, seed)
    if name == "colcyclic":
        return ColumnPermutation(d, seed)
    if name == "coluniform":
        return ColumnUniform(d, seed)
    if name == "maxres":
        return MaxResidual()
    if name == "maxdist":
        return MaxDistance(int(arg) if arg else 2)
    if name == "grk":
        return GreedyRandomizedKaczmarz(seed)
    if name == "skm":
        if not arg:
            raise ValueError("skm needs a subset size, e.g. skm:3")
        beta = int(arg)
        if not 1 <= beta <= n:
            raise ValueError(f"skm subset size must lie in [1, {n}]")
        return SamplingKaczmarzMotzkin(beta, seed)
    raise ValueError(f"unknown strategy {token!r}; expected one of {', '.join(STRATEGY_TOKENS)}")
