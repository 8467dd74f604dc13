"""Linear systems, residuals, synthetic test matrices and dense oracle solves.

All randomness is drawn from Philox streams keyed by explicit 64-bit seeds so
that independent streams can be split off deterministically.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InfeasibleSystemError

FEASIBILITY_RANK_TOL = 1e-8
PINV_CUTOFF = 1e-12


def rng_from_seed(seed):
    """Return a counter-based generator for ``seed``.

    ``seed`` may be an int, a ``numpy.random.SeedSequence`` or an existing
    ``Generator`` (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def split_seed(seed, count):
    """Split ``seed`` into ``count`` independent child seed sequences."""
    return np.random.SeedSequence(seed).spawn(count)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinearSystem:
    """Coefficient matrix ``A`` (n x d), right-hand side ``b`` and optional ``x_star``.

    Arrays are copied and made read-only on construction. ``half_bandwidth``
    is set for banded systems so the distributed simulator can read the band.
    """

    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray = None
    half_bandwidth: int = None
    name: str = field(default="system", compare=False)

    def __post_init__(self):
        A = _frozen(self.A)
        if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionError(f"A must be a nonempty 2-D array, got shape {A.shape}")
        b = _frozen(self.b).reshape(-1)
        if b.shape[0] != A.shape[0]:
            raise DimensionError(f"b has {b.shape[0]} entries, A has {A.shape[0]} rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.x_star is not None:
            xs = _frozen(self.x_star).reshape(-1)
            if xs.shape[0] != A.shape[1]:
                raise DimensionError(
                    f"x_star has {xs.shape[0]} entries, A has {A.shape[1]} columns")
            object.__setattr__(self, "x_star", xs)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def __repr__(self):
        return f"LinearSystem(name={self.name!r}, n={self.n}, d={self.d})"


@dataclass(frozen=True)
class SpectrumSpec:
    """Prescribed singular values (non-increasing, not all zero) and a seed."""

    singular_values: tuple
    seed: int = 0

    def __post_init__(self):
        s = tuple(float(v) for v in self.singular_values)
        if not s:
            raise ValueError("singular_values must be nonempty")
        if any(v < 0 for v in s):
            raise ValueError("singular values must be nonnegative")
        if any(s[i] < s[i + 1] for i in range(len(s) - 1)):
            raise ValueError("singular values must be sorted non-increasing")
        if s[0] <= 0:
            raise ValueError("at least one singular value must be positive")
        object.__setattr__(self, "singular_values", s)

    @classmethod
    def geometric(cls, count, condition_number, seed=0):
        """Singular values spaced geometrically from 1 down to ``1/condition_number``."""
        return cls(tuple(np.geomspace(1.0, 1.0 / condition_number, count)), seed)


def _check_x(system, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (system.d,):
        raise DimensionError(f"x must have shape ({system.d},), got {x.shape}")
    return x


def residual(system, x):
    """Return ``b - A x``."""
    x = _check_x(system, x)
    return system.b - system.A @ x


def signed_residual(system, x):
    """Return ``A x - b``."""
    x = _check_x(system, x)
    return system.A @ x - system.b


def make_consistent_system(A, seed, name="system", half_bandwidth=None):
    """Draw ``x_star ~ N(0, I_d)`` and return the system with ``b = A x_star``."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise DimensionError("A must be a nonempty 2-D array")
    x_star = rng_from_seed(seed).standard_normal(A.shape[1])
    return LinearSystem(A, A @ x_star, x_star, half_bandwidth=half_bandwidth, name=name)


def _haar(rng, k):
    Z = rng.standard_normal((k, k))
    Q, R = np.linalg.qr(Z)
    # sign fix makes the distribution Haar rather than QR-biased
    return Q * np.sign(np.diag(R))


def gen_prescribed_svd(n, d, spec):
    """Return ``U diag(sigma) V'`` with Haar-distributed ``U`` and ``V``."""
    sigma = np.asarray(spec.singular_values, dtype=float)
    if sigma.shape[0] != min(n, d):
        raise ValueError(
            f"spectrum has {sigma.shape[0]} values, expected min(n, d) = {min(n, d)}")
    rng = rng_from_seed(spec.seed)
    U = _haar(rng, n)[:, : sigma.shape[0]]
    V = _haar(rng, d)[:, : sigma.shape[0]]
    return (U * sigma) @ V.T


def band_mask(n, half_bandwidth):
    i, j = np.indices((n, n))
    return np.abs(i - j) <= half_bandwidth


def gen_banded(n, half_bandwidth, seed):
    """Square matrix with i.i.d. N(0, 1) entries where ``|i - j| <= half_bandwidth``."""
    if not 0 <= half_bandwidth < n:
        raise ValueError(f"half_bandwidth must lie in [0, {n}), got {half_bandwidth}")
    A = rng_from_seed(seed).standard_normal((n, n))
    A[~band_mask(n, half_bandwidth)] = 0.0
    return A


def _svd_pieces(A):
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return U, s, Vt


def min_norm_solution(system):
    """Minimum-norm solution ``A^+ b`` of a consistent system.

    Raises
    ------
    InfeasibleSystemError
        If ``b`` has a component outside ``range(A)`` larger than
        ``1e-8 * ||b||``.
    """
    U, s, Vt = _svd_pieces(system.A)
    b = system.b
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        Ur = U[:, :0]
    else:
        Ur = U[:, s > FEASIBILITY_RANK_TOL * smax]
    defect = np.linalg.norm(b - Ur @ (Ur.T @ b))
    bnorm = np.linalg.norm(b)
    if defect > FEASIBILITY_RANK_TOL * bnorm:
        raise InfeasibleSystemError(
            f"system is inconsistent: ||b - A A^+ b|| = {defect:.3e}", defect)
    if smax == 0.0:
        return np.zeros(system.d)
    keep = s > PINV_CUTOFF * smax
    return Vt[keep].T @ ((U[:, keep].T @ b) / s[keep])


def numerical_rank(A, tol=FEASIBILITY_RANK_TOL):
    s = np.linalg.svd(np.asarray(A, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))
