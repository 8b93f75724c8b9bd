"""Marginal screening for censored responses.

The main filter is the fused mean-variance (FMV) utility: for each covariate
it sums, over several quantile slicings of the event-time distribution, an
IPCW-weighted Cramer-von Mises contrast between the slice-conditional and the
marginal empirical distribution of that covariate. Correlation (SIS) and
fused Kolmogorov (FKS) filters are provided as baselines.

Covariate indices are 0-based throughout.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSlicingError, InvalidArgumentError
from .survival import event_curve, ipcw_weights, kaplan_meier


@dataclass(frozen=True, eq=False)
class SlicingScheme:
    """Half-open slices ``[a_g, a_{g+1})`` over observed times.

    ``boundaries`` starts at ``-inf`` and ends at ``+inf`` so every observed
    time falls in exactly one slice.
    """

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.array(self.boundaries, dtype=float)
        if b.ndim != 1 or b.size < 3 or b[0] != -np.inf or b[-1] != np.inf:
            raise InvalidArgumentError("boundaries must run from -inf to +inf "
                                       "with at least one interior cut",
                                       operation="SlicingScheme")
        if np.any(np.diff(b) <= 0):
            raise InvalidArgumentError("boundaries must be strictly increasing",
                                       operation="SlicingScheme")
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)

    @property
    def slice_count(self):
        return self.boundaries.size - 1

    @property
    def cuts(self):
        return self.boundaries[1:-1]

    def assign(self, t):
        """0-based slice index of each time in ``t``."""
        return np.searchsorted(self.cuts, t, side="right")


@dataclass(frozen=True, eq=False)
class ScreeningResult:
    utilities: np.ndarray
    order: np.ndarray
    method: str

    @classmethod
    def from_utilities(cls, utilities, method):
        u = np.array(utilities, dtype=float)
        # descending utility, ties by ascending index
        order = np.lexsort((np.arange(u.size), -u))
        u.setflags(write=False)
        order.setflags(write=False)
        return cls(u, order, method)

    @property
    def p(self):
        return self.utilities.size

    def ranks(self):
        """1-based rank of every covariate."""
        r = np.empty(self.p, dtype=int)
        r[self.order] = np.arange(1, self.p + 1)
        return r


@dataclass(frozen=True)
class CandidateGroups:
    groups: tuple
    d_n: int

    @property
    def k(self):
        return len(self.groups)


def ceil_cube_root(n):
    """Smallest integer ``c`` with ``c**3 >= n``."""
    c = int(round(n ** (1.0 / 3.0)))
    while c ** 3 < n:
        c += 1
    while c > 1 and (c - 1) ** 3 >= n:
        c -= 1
    return c


def slice_counts(n, max_slices=None):
    """Slice counts used for fusion: 3, 4, ..., max_slices.

    The default upper end is ``ceil(n ** (1/3))`` floored at 3.
    """
    if max_slices is None:
        max_slices = max(3, ceil_cube_root(n))
    max_slices = int(max_slices)
    if max_slices < 3:
        return [max_slices]
    return list(range(3, max_slices + 1))


def uniform_slices(event_km, s):
    """Quantile slicing of an estimated event-time distribution.

    Interior cuts are ``F^{-1}((g-1)/s)`` for ``g = 2..s`` with
    ``F = 1 - event_km``. Cuts that do not exist (the curve never reaches
    the level), cuts at or below the first jump (empty lower slice) and
    duplicates are dropped, so the effective slice count may be below ``s``.
    """
    s = int(s)
    if s < 2:
        raise DegenerateSlicingError("a slicing needs at least 2 slices",
                                     operation="uniform_slices", datum=s)
    cuts = []
    for g in range(2, s + 1):
        a = event_km.quantile((g - 1) / s)
        if not np.isfinite(a):
            continue
        if event_km.left_limit(a) >= 1.0:
            continue
        cuts.append(a)
    cuts = np.unique(cuts)
    if cuts.size == 0:
        raise DegenerateSlicingError(
            f"no distinct quantile cuts for {s} slices",
            operation="uniform_slices", datum=s)
    return SlicingScheme(np.concatenate(([-np.inf], cuts, [np.inf])))


def fmv_schemes(data, max_slices=None):
    km = event_curve(data)
    return [uniform_slices(km, s) for s in slice_counts(data.n, max_slices)]


def empirical_schemes(times, max_slices=None):
    """Slicings from the unweighted empirical distribution of ``times``."""
    times = np.asarray(times, dtype=float)
    km = kaplan_meier(times, np.ones(times.size))
    return [uniform_slices(km, s) for s in slice_counts(times.size, max_slices)]


class _SortedColumns:
    """Per-column sort data shared by every slicing scheme.

    For sorted position ``k`` of column ``j``, ``end[k, j]`` is the last
    sorted position holding the same value, so cumulative sums read at
    ``end`` count ``I{X_i'j <= X_ij}`` with ties included.
    """

    def __init__(self, x):
        n = x.shape[0]
        self.order = np.argsort(x, axis=0, kind="stable")
        xs = np.take_along_axis(x, self.order, axis=0)
        is_end = np.ones(x.shape, dtype=bool)
        is_end[:-1] = xs[:-1] != xs[1:]
        pos = np.where(is_end, np.arange(n)[:, None], n)
        self.end = np.minimum.accumulate(pos[::-1], axis=0)[::-1]
        self.n = n

    def cumulative(self, w):
        """``sum_i' w[i', g] I{X_i'j <= X_ij}`` for every (sorted i, j, g)."""
        c = np.cumsum(w[self.order], axis=0)
        return np.take_along_axis(c, self.end[..., None], axis=0)


def _slice_weights(slices, pi, n_slices):
    w = np.zeros((slices.size, n_slices))
    w[np.arange(slices.size), slices] = pi
    return w


def _mv_from_sorted(sc, slices, pi, n_slices):
    n = sc.n
    w = _slice_weights(slices, pi, n_slices)
    p_g = w.sum(axis=0) / n
    live = p_g > 0
    cum = sc.cumulative(w[:, live])
    cond = cum / (n * p_g[live])
    marg = (sc.end + 1)[..., None] / n
    return np.einsum("ijg,g->j", (cond - marg) ** 2, p_g[live]) / n


def _fks_from_sorted(sc, slices, n_slices):
    w = _slice_weights(slices, np.ones(slices.size), n_slices)
    counts = w.sum(axis=0)
    live = counts > 0
    cond = sc.cumulative(w[:, live]) / counts[live]
    return (cond.max(axis=2) - cond.min(axis=2)).max(axis=0)


def _column_chunks(p, threads):
    threads = max(1, int(threads))
    return [c for c in np.array_split(np.arange(p), threads) if c.size]


def _map_columns(fn, x, threads):
    chunks = _column_chunks(x.shape[1], threads)
    if len(chunks) == 1:
        return fn(x)
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(lambda c: fn(x[:, c]), chunks))
    return np.concatenate(parts)


def fmv_utilities(x, y, pi, schemes, threads=1):
    """Fused mean-variance utility for every column of ``x``.

    ``y`` are the observed times that ``schemes`` slice and ``pi`` the IPCW
    weights. Slices with zero weighted mass contribute nothing.
    """
    x = np.asarray(x, dtype=float)
    pi = np.asarray(pi, dtype=float)
    assigned = [(s.assign(y), s.slice_count) for s in schemes]

    def run(xc):
        sc = _SortedColumns(xc)
        total = np.zeros(xc.shape[1])
        for slices, g in assigned:
            total += _mv_from_sorted(sc, slices, pi, g)
        return total

    return _map_columns(run, x, threads)


def mv_statistic(j, data, w, scheme):
    """Single-scheme mean-variance statistic of covariate ``j``."""
    _check_index(j, data.p, "mv_statistic")
    return float(fmv_utilities(data.x[:, [j]], data.y, w, [scheme])[0])


def fused_mv(j, data, w, schemes):
    _check_index(j, data.p, "fused_mv")
    if len(schemes) == 0:
        raise InvalidArgumentError("at least one slicing scheme is required",
                                   operation="fused_mv")
    return float(fmv_utilities(data.x[:, [j]], data.y, w, schemes)[0])


def screen_fmv(data, max_slices=None, weights=None, threads=1, schemes=None):
    """Rank covariates by the fused mean-variance utility.

    Schemes use 3..``max_slices`` quantile slices of the KM estimate of the
    event-time distribution (default upper end ``ceil(n^(1/3))``).
    """
    if weights is None:
        weights = ipcw_weights(data)
    if schemes is None:
        schemes = fmv_schemes(data, max_slices)
    u = fmv_utilities(data.x, data.y, weights, schemes, threads)
    return ScreeningResult.from_utilities(u, "FMV")


def screen_fks(data, max_slices=None, threads=1):
    """Fused Kolmogorov filter on the observed times, ignoring censoring.

    Per scheme the statistic is the largest sup-distance between the
    empirical covariate distributions of any two non-empty slices; schemes
    are fused by summation.
    """
    schemes = empirical_schemes(data.y, max_slices)
    assigned = [(s.assign(data.y), s.slice_count) for s in schemes]

    def run(xc):
        sc = _SortedColumns(xc)
        total = np.zeros(xc.shape[1])
        for slices, g in assigned:
            total += _fks_from_sorted(sc, slices, g)
        return total

    u = _map_columns(run, data.x, threads)
    return ScreeningResult.from_utilities(u, "FKS")


def screen_sis(data):
    """Absolute Pearson correlation with the transformed observed response."""
    x = data.x - data.x.mean(axis=0)
    r = data.response - data.response.mean()
    sx = np.sqrt((x ** 2).sum(axis=0))
    sr = np.sqrt((r ** 2).sum())
    u = np.zeros(data.p)
    if sr > 0:
        ok = sx > 0
        u[ok] = np.abs(x[:, ok].T @ r) / (sx[ok] * sr)
    return ScreeningResult.from_utilities(np.minimum(u, 1.0), "SIS")


SCREENERS = {
    "FMV": screen_fmv,
    "SIS": lambda data, max_slices=None, threads=1: screen_sis(data),
    "FKS": screen_fks,
}


def select_active(r, d_n):
    """Indices of the ``d_n`` largest utilities, in rank order."""
    d_n = int(d_n)
    if d_n < 1 or d_n > r.p:
        raise InvalidArgumentError(f"d_n={d_n} must lie in [1, {r.p}]",
                                   operation="select_active", datum=d_n)
    return r.order[:d_n].copy()


def build_candidate_groups(r, d_n, k):
    """Split the top ``d_n`` ranks into ``k`` contiguous rank blocks.

    Block sizes differ by at most one, larger blocks first; everything below
    rank ``d_n`` is discarded.
    """
    k = int(k)
    if k < 1 or k > d_n:
        raise InvalidArgumentError(f"group count {k} must lie in [1, d_n={d_n}]",
                                   operation="build_candidate_groups", datum=k)
    top = select_active(r, d_n)
    groups = tuple(tuple(int(i) for i in g) for g in np.array_split(top, k))
    return CandidateGroups(groups, int(d_n))


def _check_index(j, p, op):
    if not (0 <= int(j) < p):
        raise InvalidArgumentError(f"covariate index {j} out of range [0, {p})",
                                   operation=op, datum=int(j))
