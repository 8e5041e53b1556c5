"""Large-electorate limits under Impartial Culture.

The probability that candidate ``m`` is a Super Condorcet Winner tends to the
Gaussian measure of the positive orthant under covariance ``H``, indexed by
nonempty opponent subsets ``S, T`` of ``1..m-1``::

    H[S, T] = 1/(|S u T| + 1) - 1/((|S| + 1)(|T| + 1))

By symmetry ``P(SCW exists) = m * orthant(H)``, and the limiting IRV
manipulability rate is one minus that.

The orthant probability is integrated with the separation-of-variables
transform (sequential conditioning through a Cholesky factor) over randomly
shifted Sobol points; the standard error comes from independent shifts.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

DEFAULT_TARGET_SE = 5e-4
MAX_DIM = 2**13 - 1


class NotPositiveDefinite(np.linalg.LinAlgError):
    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite: pivot {pivot} is {value:.3g}")


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, partial: "OrthantEstimate"):
        self.partial = partial
        super().__init__(message)


@dataclass(frozen=True)
class SubsetCovariance:
    m: int
    index: tuple[frozenset[int], ...]
    entries: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.index)


@dataclass(frozen=True)
class OrthantEstimate:
    value: float
    std_error: float
    replicates: int
    points_per_replicate: int
    seed: int

    def scaled(self, factor: float) -> "OrthantEstimate":
        return OrthantEstimate(self.value * factor, self.std_error * abs(factor),
                               self.replicates, self.points_per_replicate, self.seed)


@dataclass(frozen=True)
class LimitResult:
    m: int
    p_scw: OrthantEstimate
    p_irv_cm: OrthantEstimate


def opponent_subsets(m: int) -> list[frozenset[int]]:
    """Nonempty subsets of ``1..m-1`` ordered by size, then lexicographically."""
    out = []
    for size in range(1, m):
        out.extend(frozenset(c) for c in combinations(range(1, m), size))
    return out


def build_H(m: int, max_dim: int = MAX_DIM) -> SubsetCovariance:
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    d = 2 ** (m - 1) - 1
    if d > max_dim:
        raise MemoryError(f"dimension {d} for m={m} exceeds the cap {max_dim}")
    index = opponent_subsets(m)
    masks = np.array([sum(1 << x for x in s) for s in index], dtype=np.int64)
    sizes = np.array([len(s) for s in index], dtype=np.float64)
    union = np.bitwise_or.outer(masks, masks)
    usize = np.zeros(union.shape, dtype=np.float64)
    for bit in range(1, m):
        usize += (union >> bit) & 1
    H = 1.0 / (usize + 1.0) - np.outer(1.0 / (sizes + 1.0), 1.0 / (sizes + 1.0))
    return SubsetCovariance(m, tuple(index), H)


def _entries(c) -> np.ndarray:
    return c.entries if isinstance(c, SubsetCovariance) else np.asarray(c, dtype=np.float64)


def _first_bad_pivot(a: np.ndarray) -> tuple[int, float]:
    a = np.array(a, dtype=np.float64, copy=True)
    d = a.shape[0]
    for j in range(d):
        piv = a[j, j]
        if not piv > 0:
            return j, float(piv)
        a[j + 1:, j] /= math.sqrt(piv)
        a[j + 1:, j + 1:] -= np.outer(a[j + 1:, j], a[j + 1:, j])
    return d - 1, float(a[d - 1, d - 1])


ORDERINGS = ("variance-desc", "variance-asc", "none")


def variance_order(cov, ordering: str = "variance-desc") -> np.ndarray | None:
    """Coordinate permutation by marginal variance (stable), or None to keep order.

    For ``build_H`` the descending order puts singleton subsets first, which
    gives a markedly smaller integration variance than the ascending one.
    """
    if ordering not in ORDERINGS:
        raise ValueError(f"ordering must be one of {ORDERINGS}, got {ordering!r}")
    if ordering == "none":
        return None
    var = np.diag(_entries(cov))
    key = -var if ordering == "variance-desc" else var
    return np.argsort(key, kind="stable")


def cholesky(cov, order: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Lower factor ``L`` of ``cov[perm][:, perm]`` and the permutation ``perm``.

    ``order=None`` keeps the given coordinate order.
    """
    a = _entries(cov)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("covariance must be symmetric")
    perm = np.arange(a.shape[0]) if order is None else np.asarray(order)
    ap = a[np.ix_(perm, perm)]
    try:
        L = np.linalg.cholesky(ap)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(*_first_bad_pivot(ap)) from None
    return L, perm


# Acklam's rational approximation for the normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _lower_quantile(u: np.ndarray) -> np.ndarray:
    """Quantile for ``0 < u <= 0.5``: rational start plus one Halley step."""
    x = np.empty_like(u)
    tail = u < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(u[tail]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[tail] = num / den
    mid = ~tail
    if mid.any():
        q = u[mid] - 0.5
        r = q * q
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num / den
    e = ndtr(x) - u
    g = e * _SQRT_2PI * np.exp(0.5 * x * x)
    return x - g / (1.0 + 0.5 * x * g)


def inverse_normal_cdf(u):
    """Standard normal quantile for ``0 < u < 1`` (scalar or array)."""
    arr = np.asarray(u, dtype=np.float64)
    if not np.all((arr > 0) & (arr < 1)):
        raise ValueError("inverse_normal_cdf needs 0 < u < 1")
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    upper = flat > 0.5
    out[~upper] = _lower_quantile(flat[~upper])
    # 1 - u is exact for u >= 0.5
    out[upper] = -_lower_quantile(1.0 - flat[upper])
    out = out.reshape(arr.shape)
    return float(out) if np.ndim(u) == 0 else out


def _sov_values(L: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Integrand of the orthant probability at unit-cube points ``w`` (N x d-1)."""
    d = L.shape[0]
    N = w.shape[0]
    y = np.empty((N, d - 1))
    f = np.ones(N)
    tiny = np.finfo(np.float64).tiny
    for i in range(d):
        # Z_i = L[i, :i] y + L[i, i] y_i > 0  <=>  y_i > lower
        lower = -(y[:, :i] @ L[i, :i]) / L[i, i] if i else np.zeros(N)
        mass = ndtr(-lower)
        f *= mass
        if i == d - 1:
            break
        tail = np.maximum((1.0 - w[:, i]) * mass, tiny)
        y[:, i] = -_quantile_open(tail)
    return f


def _quantile_open(p: np.ndarray) -> np.ndarray:
    """Normal quantile clipped into the open interval; p may round to 1."""
    p = np.clip(p, np.finfo(np.float64).tiny, 1.0 - 2.0**-53)
    return inverse_normal_cdf(p)


_SOBOL_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _sobol(dim: int, log2n: int) -> np.ndarray:
    key = (dim, log2n)
    pts = _SOBOL_CACHE.get(key)
    if pts is None:
        pts = qmc.Sobol(dim, scramble=False).random_base2(log2n)
        _SOBOL_CACHE[key] = pts
    return pts


def _replicate(args) -> float:
    L, seed, r, log2n, method = args
    d = L.shape[0]
    rng = np.random.default_rng([seed, r])
    if method == "qmc":
        shift = rng.random(d - 1)
        w = _sobol(d - 1, log2n) + shift
        w -= np.floor(w)
    else:
        w = rng.random((1 << log2n, d - 1))
    return float(_sov_values(L, w).mean())


def orthant_probability(cov, target_se: float = DEFAULT_TARGET_SE, seed: int = 0, *,
                        log2_points: int = 12, min_replicates: int = 30,
                        max_points: int = 2**26, method: str = "qmc",
                        ordering: str = "variance-desc", workers: int = 1) -> OrthantEstimate:
    """``P[Z > 0]`` for ``Z ~ N(0, cov)``.

    Shifted replicates of ``2**log2_points`` points are added until the
    cross-replicate standard error is at most ``target_se`` or ``max_points``
    are spent. Replicate ``r`` depends only on ``(seed, r)``, so the estimate
    does not depend on ``workers``. ``method='mc'`` swaps Sobol points for
    plain pseudo-random ones.
    """
    if target_se <= 0:
        raise ValueError("target_se must be positive")
    if method not in ("qmc", "mc"):
        raise ValueError(f"unknown method {method!r}")
    a = _entries(cov)
    d = a.shape[0]
    order = variance_order(a, ordering)
    L, _ = cholesky(a, order)
    if d == 1:
        return OrthantEstimate(0.5, 0.0, 1, 1, seed)
    npts = 1 << log2_points
    max_reps = max(min_replicates, max_points // npts)
    values: list[float] = []
    batch = max(min_replicates, workers)
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while len(values) < max_reps:
            start = len(values)
            todo = range(start, min(start + batch, max_reps))
            jobs = [(L, seed, r, log2_points, method) for r in todo]
            results = list(pool.map(_replicate, jobs)) if pool else [_replicate(j) for j in jobs]
            for v in results:
                values.append(v)
                if len(values) >= min_replicates and _se(values) <= target_se:
                    break
            if len(values) >= min_replicates and _se(values) <= target_se:
                break
            batch = max(workers, 8)
    finally:
        if pool:
            pool.shutdown()
    est = OrthantEstimate(float(np.mean(values)), _se(values), len(values), npts, seed)
    if est.std_error > 10 * target_se:
        raise ConvergenceError(
            f"standard error {est.std_error:.3g} after {len(values)} replicates exceeds "
            f"10x target {target_se:.3g}", est)
    return est


def _se(values) -> float:
    v = np.asarray(values)
    if len(v) < 2:
        return math.inf
    return float(v.std(ddof=1) / math.sqrt(len(v)))


def orthant_probability_closed_form(cov) -> float:
    """Exact orthant probability in dimensions 1 to 3."""
    a = _entries(cov)
    d = a.shape[0]
    if d > 3:
        raise NotImplementedError(f"closed form only for dim <= 3, got {d}")
    if d == 1:
        return 0.5
    sd = np.sqrt(np.diag(a))
    rho = a / np.outer(sd, sd)
    if d == 2:
        return 0.25 + math.asin(float(np.clip(rho[0, 1], -1, 1))) / (2 * math.pi)
    s = sum(math.asin(float(np.clip(rho[i, j], -1, 1))) for i, j in ((0, 1), (0, 2), (1, 2)))
    return 0.125 + s / (4 * math.pi)


def limit_scw_prob(m: int, target_se: float = DEFAULT_TARGET_SE, seed: int = 0,
                   **kwargs) -> OrthantEstimate:
    """Limiting probability that an SCW exists; ``target_se`` applies to this value."""
    H = build_H(m)
    est = orthant_probability(H, target_se / m, seed, **kwargs)
    return est.scaled(m)


def limit_irv_cm(m: int, target_se: float = DEFAULT_TARGET_SE, seed: int = 0,
                 **kwargs) -> LimitResult:
    p_scw = limit_scw_prob(m, target_se, seed, **kwargs)
    p_cm = OrthantEstimate(1.0 - p_scw.value, p_scw.std_error, p_scw.replicates,
                           p_scw.points_per_replicate, p_scw.seed)
    return LimitResult(m, p_scw, p_cm)
