"""Product-limit estimation and inverse-probability-of-censoring weights."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, WeightUndefinedError

TRANSFORMS = ("identity", "log")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored observations ``(y, delta, x)``.

    ``y`` holds observed times on the raw scale, ``min(T, C)``. The response
    used by the regression stage is ``transform`` applied to ``y`` and is
    available as :attr:`response`.
    """

    y: np.ndarray
    delta: np.ndarray
    x: np.ndarray
    transform: str = "log"

    def __post_init__(self):
        y = _frozen(self.y)
        delta = _frozen(self.delta, dtype=np.int8)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        x = _frozen(x)
        if y.ndim != 1 or y.size < 1:
            raise InvalidArgumentError("y must be a non-empty vector",
                                       operation="SurvivalDataset")
        if delta.shape != y.shape:
            raise InvalidArgumentError("y and delta lengths differ",
                                       operation="SurvivalDataset",
                                       datum=[y.size, delta.size])
        if x.ndim != 2 or x.shape[0] != y.size:
            raise InvalidArgumentError("x must have one row per observation",
                                       operation="SurvivalDataset",
                                       datum=list(x.shape))
        raw_delta = np.asarray(self.delta)
        if not np.all((raw_delta == 0) | (raw_delta == 1)):
            raise InvalidArgumentError("delta values must be 0 or 1",
                                       operation="SurvivalDataset")
        if self.transform not in TRANSFORMS:
            raise InvalidArgumentError(f"unknown transform {self.transform!r}",
                                       operation="SurvivalDataset",
                                       datum=self.transform)
        if self.transform == "log" and np.any(y <= 0):
            bad = int(np.flatnonzero(y <= 0)[0])
            raise InvalidArgumentError("log transform needs positive times",
                                       operation="SurvivalDataset", datum=bad)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "x", x)

    @property
    def n(self):
        return self.y.size

    @property
    def p(self):
        return self.x.shape[1]

    @property
    def response(self):
        if self.transform == "log":
            return np.log(self.y)
        return np.array(self.y)

    def subset(self, rows):
        rows = np.asarray(rows)
        return SurvivalDataset(self.y[rows], self.delta[rows], self.x[rows],
                               self.transform)


@dataclass(frozen=True, eq=False)
class StepSurvivalCurve:
    """Right-continuous step function stored at its jump times only.

    ``surv[j]`` is the value on ``[times[j], times[j+1])``; the curve equals 1
    before ``times[0]``.
    """

    times: np.ndarray
    surv: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "surv", _frozen(self.surv))

    def __call__(self, t):
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self._lookup(idx)

    def left_limit(self, t):
        """S(t-): product over grid times strictly less than ``t``."""
        idx = np.searchsorted(self.times, t, side="left") - 1
        return self._lookup(idx)

    def _lookup(self, idx):
        padded = np.concatenate(([1.0], self.surv))
        out = padded[np.asarray(idx) + 1]
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, t):
        return 1.0 - np.asarray(self(t))

    def quantile(self, q, rtol=1e-10):
        """Right-continuous generalized inverse ``inf{t : F(t) > q}``.

        ``F = 1 - S``. Returns ``inf`` when the curve never rises above
        ``q``. The comparison carries a small guard so that products such
        as ``0.75 * (2/3)`` hit the exact grid quantile.
        """
        F = 1.0 - self.surv
        hit = np.flatnonzero(F > q + rtol)
        if hit.size == 0:
            return np.inf
        return float(self.times[hit[0]])


def kaplan_meier(times, events):
    """Product-limit estimate from ``times`` with 0/1 ``events``.

    At each distinct event time ``t_j`` the curve multiplies by
    ``1 - d_j / n_j`` where ``n_j = #{times >= t_j}``, so a subject
    censored at ``t_j`` still counts as at risk there.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    if times.ndim != 1 or times.size == 0:
        raise InvalidArgumentError("kaplan_meier needs at least one time",
                                   operation="kaplan_meier")
    if events.shape != times.shape:
        raise InvalidArgumentError("times and events lengths differ",
                                   operation="kaplan_meier",
                                   datum=[times.size, events.size])
    if not np.all(np.isfinite(times)):
        raise InvalidArgumentError("times must be finite", operation="kaplan_meier")
    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order].astype(float)

    uniq, first = np.unique(t_sorted, return_index=True)
    at_risk = times.size - first
    d = np.add.reduceat(e_sorted, first)
    keep = d > 0
    grid, d, at_risk = uniq[keep], d[keep], at_risk[keep]
    surv = np.cumprod(1.0 - d / at_risk)
    return StepSurvivalCurve(grid, surv)


def left_limit(curve, t):
    return curve.left_limit(t)


def censoring_curve(data):
    """KM estimate of the censoring survival function (events = 1 - delta)."""
    return kaplan_meier(data.y, 1 - data.delta)


def event_curve(data):
    """KM estimate of the event-time survival function (events = delta)."""
    return kaplan_meier(data.y, data.delta)


def ipcw_weights(data):
    """Inverse-probability-of-censoring weights, one per observation.

    Events get ``1 / G(Y_i-)`` and censored subjects 0, where ``G`` is the
    KM censoring survival curve. Every observation tied at the largest
    observed time gets ``1 / G(Y_max-)`` whatever its status.
    """
    g_minus = np.asarray(censoring_curve(data).left_limit(data.y), dtype=float)
    g_minus = np.atleast_1d(g_minus)
    is_max = data.y == data.y.max()
    uses = (data.delta == 1) | is_max
    zero = uses & (g_minus <= 0.0)
    if np.any(zero):
        i = int(np.flatnonzero(zero)[0])
        raise WeightUndefinedError(
            f"censoring survival is 0 just before observation {i}",
            operation="ipcw_weights", datum=i)
    pi = np.zeros(data.n)
    pi[uses] = 1.0 / g_minus[uses]
    pi.setflags(write=False)
    return pi
