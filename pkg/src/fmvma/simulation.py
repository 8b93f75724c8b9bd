"""Accelerated-failure-time simulation study and evaluation metrics.

The generator draws AR(rho) Gaussian covariates, a sparse coefficient vector
with evenly spaced active indices, log-normal event times and censoring times
``min(l, Unif(0, l + 2))``. Replications are seeded through
``SeedSequence(seed, spawn_key=(rep,))`` so each one is reproducible on its
own and independent of evaluation order.
"""

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter
from scipy.stats import norm

from .errors import (DegenerateSlicingError, FMVMAError, InvalidArgumentError,
                     UndefinedMetricError, UnsupportedOperationError)
from .pipeline import METHODS, build_candidates, weigh
from .screening import (ScreeningResult, SlicingScheme, fmv_utilities,
                        screen_fmv, slice_counts)
from .survival import SurvivalDataset, ipcw_weights

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 100
    p: int = 2000
    s: int = 50
    stride: int = 40
    rho: float = 0.5
    sigma_eps: float = 0.5
    coef_sd: float = 0.5
    censor_l: float = 8.0
    k: int = 10
    d_n: int = 100
    seed: int = 0
    replications: int = 200
    max_slices: int | None = None

    def __post_init__(self):
        for name in ("n", "p", "s", "stride", "k", "d_n", "replications"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgumentError(f"{name} must be positive",
                                           operation="SimulationConfig",
                                           datum=getattr(self, name))
        if self.s * self.stride > self.p + self.stride - 1:
            raise InvalidArgumentError(
                f"{self.s} active indices with stride {self.stride} do not fit "
                f"in p={self.p}", operation="SimulationConfig",
                datum=[self.s, self.stride, self.p])
        for name in ("sigma_eps", "coef_sd", "censor_l"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive",
                                           operation="SimulationConfig",
                                           datum=getattr(self, name))
        if not -1.0 < self.rho < 1.0:
            raise InvalidArgumentError("rho must lie in (-1, 1)",
                                       operation="SimulationConfig", datum=self.rho)

    @property
    def active_indices(self):
        """0-based active covariates ``stride * (j - 1)``, j = 1..s."""
        return np.arange(self.s) * self.stride

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class GeneratedDataset:
    data: SurvivalDataset
    theta: np.ndarray
    u_true: np.ndarray
    censor_rate: float
    event_times: np.ndarray
    config: SimulationConfig


def replication_rng(cfg, rep, stream=0):
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(rep, stream)))


def ar_gaussian(rng, n, p, rho):
    """Rows with covariance ``rho^|j-l|`` by the stationary AR(1) recursion."""
    z = rng.standard_normal((n, p))
    c = np.sqrt(1.0 - rho * rho)
    z[:, 0] /= c
    return lfilter([c], [1.0, -rho], z, axis=1)


def generate_dataset(cfg, rep=0):
    rng = replication_rng(cfg, rep)
    x = ar_gaussian(rng, cfg.n, cfg.p, cfg.rho)
    theta = np.zeros(cfg.p)
    theta[cfg.active_indices] = rng.normal(0.0, cfg.coef_sd, cfg.s)
    eps = rng.normal(0.0, cfg.sigma_eps, cfg.n)
    censor = np.minimum(cfg.censor_l, rng.uniform(0.0, cfg.censor_l + 2.0, cfg.n))
    u = x @ theta
    t = np.exp(u + eps)
    y = np.minimum(t, censor)
    delta = (t <= censor).astype(np.int8)
    data = SurvivalDataset(y, delta, x, transform="log")
    return GeneratedDataset(data, theta, u, float(1.0 - delta.mean()), t, cfg)


def weighted_mse(u_true, u_hat, w):
    u_true = np.asarray(u_true, dtype=float)
    u_hat = np.asarray(u_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    if not (u_true.shape == u_hat.shape == w.shape):
        raise InvalidArgumentError("weighted_mse inputs differ in length",
                                   operation="weighted_mse",
                                   datum=[u_true.size, u_hat.size, w.size])
    r = u_true - u_hat
    return float(r @ (w * r) / r.size)


def waspe(test, mu_hat, w):
    """Weighted average squared prediction error over test-set events.

    Each event contributes ``(1 / pi_i) * (response_i - mu_hat_i)^2``; the sum
    is divided by the number of events.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    w = np.asarray(w, dtype=float)
    if mu_hat.shape != (test.n,) or w.shape != (test.n,):
        raise InvalidArgumentError("waspe inputs differ in length",
                                   operation="waspe",
                                   datum=[test.n, mu_hat.size, w.size])
    ev = test.delta == 1
    if not ev.any():
        raise UndefinedMetricError("every test observation is censored",
                                   operation="waspe")
    if np.any(w[ev] <= 0):
        j = int(np.flatnonzero(ev & (w <= 0))[0])
        raise UndefinedMetricError(f"event {j} has a non-positive weight",
                                   operation="waspe", datum=j)
    r = test.response[ev] - mu_hat[ev]
    return float(np.sum(r * r / w[ev]) / ev.sum())


def _split_methods(methods):
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise InvalidArgumentError(f"unknown methods {unknown}",
                                   operation="run_replications", datum=unknown)
    screenings = []
    for m in methods:
        if METHODS[m][0] not in screenings:
            screenings.append(METHODS[m][0])
    return screenings


def run_replication(cfg, rep, methods, tol=1e-10, max_sweeps=100_000):
    """Weighted MSE of every method on replication ``rep``.

    Returns ``{method: (metric, error)}`` where exactly one entry is None.
    """
    out = {}
    gen = generate_dataset(cfg, rep)
    try:
        pi = ipcw_weights(gen.data)
    except FMVMAError as exc:
        return {m: (None, f"{type(exc).__name__}: {exc}") for m in methods}
    for scr in _split_methods(methods):
        try:
            cands = build_candidates(gen.data, scr, cfg.d_n, cfg.k,
                                     cfg.max_slices, weights=pi)
        except FMVMAError as exc:
            for m in methods:
                if METHODS[m][0] == scr:
                    out[m] = (None, f"{type(exc).__name__}: {exc}")
            continue
        for m in methods:
            if METHODS[m][0] != scr:
                continue
            try:
                avg = weigh(cands, gen.data, METHODS[m][1], tol, max_sweeps)
                out[m] = (weighted_mse(gen.u_true, avg.fitted(), pi), None)
            except FMVMAError as exc:
                out[m] = (None, f"{type(exc).__name__}: {exc}")
    return out


def _replication_job(args):
    cfg, rep, methods, tol, max_sweeps = args
    return rep, run_replication(cfg, rep, methods, tol, max_sweeps)


QUANTILE_KEYS = ("min", "q1", "median", "q3", "max")


@dataclass(frozen=True, eq=False)
class SimulationSummary:
    config: SimulationConfig
    methods: tuple
    metrics: np.ndarray          # replications x methods, NaN where failed
    failures: dict               # method -> [(rep, reason), ...]

    def quantiles(self):
        out = {}
        for j, m in enumerate(self.methods):
            col = self.metrics[:, j]
            ok = col[~np.isnan(col)]
            if ok.size:
                qs = np.quantile(ok, [0.0, 0.25, 0.5, 0.75, 1.0])
                row = dict(zip(QUANTILE_KEYS, (float(v) for v in qs)))
            else:
                row = dict.fromkeys(QUANTILE_KEYS)
            row["completed"] = int(ok.size)
            row["failed"] = len(self.failures.get(m, []))
            out[m] = row
        return out

    def median(self, method):
        return self.quantiles()[method]["median"]

    def rows(self):
        for r in range(self.metrics.shape[0]):
            for j, m in enumerate(self.methods):
                yield m, r, self.metrics[r, j]

    def to_json(self):
        return {
            "config": dataclasses.asdict(self.config),
            "seed": self.config.seed,
            "methods": list(self.methods),
            "quantiles": self.quantiles(),
            "failures": {m: [{"replication": r, "reason": why} for r, why in f]
                         for m, f in self.failures.items()},
        }


def run_replications(cfg, methods=tuple(METHODS), threads=1, tol=1e-10,
                     max_sweeps=100_000):
    """Run every replication of ``cfg`` for each method.

    Failed (method, replication) cells are logged, stored as NaN and counted
    rather than aborting the run.
    """
    methods = tuple(methods)
    _split_methods(methods)
    jobs = [(cfg, rep, methods, tol, max_sweeps) for rep in range(cfg.replications)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = dict(pool.map(_replication_job, jobs))
    else:
        results = dict(map(_replication_job, jobs))
    metrics = np.full((cfg.replications, len(methods)), np.nan)
    failures = {}
    for rep in range(cfg.replications):
        for j, m in enumerate(methods):
            value, err = results[rep][m]
            if err is None:
                metrics[rep, j] = value
            else:
                log.warning("replication %d, %s failed: %s", rep, m, err)
                failures.setdefault(m, []).append((rep, err))
    return SimulationSummary(cfg, methods, metrics, failures)


# -- oracle slicing ---------------------------------------------------------

def log_time_sd(cfg, theta):
    """SD of ``log T``; ``X theta + eps`` is exactly Gaussian under the design."""
    act = np.flatnonzero(theta)
    lag = np.abs(act[:, None] - act[None, :])
    var = theta[act] @ (cfg.rho ** lag) @ theta[act] + cfg.sigma_eps ** 2
    return float(np.sqrt(var))


def oracle_slices(cfg, theta, s):
    """Slicing at the true event-time quantiles ``F^{-1}((g-1)/s)``."""
    s = int(s)
    if s < 2:
        raise DegenerateSlicingError("a slicing needs at least 2 slices",
                                     operation="oracle_slices", datum=s)
    sd = log_time_sd(cfg, theta)
    levels = np.arange(1, s) / s
    cuts = np.exp(sd * norm.ppf(levels))
    return SlicingScheme(np.concatenate(([-np.inf], cuts, [np.inf])))


def oracle_fused_mv(cfg, generated, w, max_slices=None):
    """FMV utilities with true-quantile slices; needs a generated dataset."""
    if not isinstance(generated, GeneratedDataset):
        raise UnsupportedOperationError(
            "oracle slicing needs the known event-time law of a generated dataset",
            operation="oracle_fused_mv", datum=type(generated).__name__)
    data = generated.data
    schemes = [oracle_slices(cfg, generated.theta, s)
               for s in slice_counts(data.n, max_slices)]
    u = fmv_utilities(data.x, data.y, w, schemes)
    return ScreeningResult.from_utilities(u, "FMV-oracle")


# -- large-sample property checks ----------------------------------------

def loss_ratio(cfg, rep, n_draws=10_000, screening="FMV"):
    """``L_n(w_hat) / min L_n`` over uniform draws on ``[0,1]^K`` and vertices.

    ``L_n(w) = (u - F w)' Pi (u - F w)`` with ``F`` the in-sample candidate
    fits and ``u`` the true conditional mean.
    """
    gen = generate_dataset(cfg, rep)
    pi = ipcw_weights(gen.data)
    cands = build_candidates(gen.data, screening, cfg.d_n, cfg.k,
                             cfg.max_slices, weights=pi)
    sol = weigh(cands, gen.data, "MCV2")
    f = np.column_stack([c.fitted for c in cands.fits])
    draws = replication_rng(cfg, rep, stream=1).uniform(size=(n_draws, cfg.k))
    omegas = np.vstack([draws, np.eye(cfg.k)])
    resid = gen.u_true[None, :] - omegas @ f.T
    losses = np.einsum("ri,ri->r", resid, resid * pi[None, :])
    r_hat = gen.u_true - f @ sol.omega
    return float(r_hat @ (pi * r_hat) / losses.min())


def rank_separation(cfg, rep):
    """Margin ``min_active Q - max_inactive Q`` of the FMV utilities."""
    gen = generate_dataset(cfg, rep)
    q = screen_fmv(gen.data, cfg.max_slices).utilities
    active = np.zeros(cfg.p, dtype=bool)
    active[cfg.active_indices] = True
    return float(q[active].min() - q[~active].max())


def loss_ratio_study(cfg, ns, replications, n_draws=10_000):
    """Median loss ratio for each sample size in ``ns``."""
    out = {}
    for n in ns:
        c = cfg.replace(n=n)
        ratios = []
        for rep in range(replications):
            try:
                ratios.append(loss_ratio(c, rep, n_draws))
            except FMVMAError as exc:
                log.warning("loss ratio n=%d rep=%d failed: %s", n, rep, exc)
        out[n] = {"median": float(np.median(ratios)), "completed": len(ratios)}
    return out


def rank_separation_study(cfg, ns, replications):
    """Fraction of replications where every active utility beats every inactive one."""
    out = {}
    for n in ns:
        c = cfg.replace(n=n)
        margins = np.array([rank_separation(c, rep) for rep in range(replications)])
        out[n] = {"fraction": float(np.mean(margins > 0)),
                  "median_margin": float(np.median(margins))}
    return out


# -- train/test evaluation ----------------------------------------------------

def evaluate_splits(data, methods=tuple(METHODS), train_size=50, splits=200,
                    seed=0, d_n=80, k=10, max_slices=None, tol=1e-10,
                    max_sweeps=100_000):
    """WASPE of each method over random train/test splits.

    Models are fitted on ``train_size`` random observations and scored on the
    rest, with IPCW weights recomputed on the test part. Returns
    ``(values, failures)`` where ``values[method]`` has one entry per split
    (NaN when the split failed).
    """
    methods = tuple(methods)
    screenings = _split_methods(methods)
    if not 0 < train_size < data.n:
        raise InvalidArgumentError(f"train_size must lie in (0, {data.n})",
                                   operation="evaluate_splits", datum=train_size)
    values = {m: np.full(splits, np.nan) for m in methods}
    failures = {}
    for b in range(splits):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        perm = rng.permutation(data.n)
        train, test = data.subset(np.sort(perm[:train_size])), data.subset(np.sort(perm[train_size:]))
        try:
            w_test = ipcw_weights(test)
        except FMVMAError as exc:
            for m in methods:
                failures.setdefault(m, []).append((b, str(exc)))
            continue
        for scr in screenings:
            mine = [m for m in methods if METHODS[m][0] == scr]
            try:
                cands = build_candidates(train, scr, d_n, k, max_slices)
            except FMVMAError as exc:
                for m in mine:
                    failures.setdefault(m, []).append((b, f"{type(exc).__name__}: {exc}"))
                continue
            for m in mine:
                try:
                    avg = weigh(cands, train, METHODS[m][1], tol, max_sweeps)
                    values[m][b] = waspe(test, avg.predict(test.x), w_test)
                except FMVMAError as exc:
                    failures.setdefault(m, []).append((b, f"{type(exc).__name__}: {exc}"))
    return values, failures
