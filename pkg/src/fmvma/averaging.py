"""Delete-one Mallows model averaging.

The criterion is ``M(w) = (Y - E w)' Pi (Y - E w)`` where column ``k`` of
``E`` holds the delete-one predictions of candidate model ``k`` computed with
the full-data IPCW weights held fixed. Expanded, ``M(w) = w'Aw - 2b'w + c``
with ``A = E'Pi E``, ``b = E'Pi Y`` and ``c = Y'Pi Y``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceError, InfiniteFitError, InvalidArgumentError,
                     LeverageOneError)
from .regression import predict

LEVERAGE_GUARD = 1e-10


@dataclass(frozen=True, eq=False)
class AveragingProblem:
    deleteone_preds: np.ndarray
    gram: np.ndarray
    linear: np.ndarray
    constant: float

    @property
    def k(self):
        return self.linear.size

    def criterion(self, omega):
        omega = np.asarray(omega, dtype=float)
        return float(omega @ self.gram @ omega - 2.0 * self.linear @ omega
                     + self.constant)

    def gradient(self, omega):
        return 2.0 * (self.gram @ omega - self.linear)


@dataclass(frozen=True, eq=False)
class WeightSolution:
    omega: np.ndarray
    constraint: str
    criterion_value: float
    kkt_residual: float = float("nan")
    iterations: int = 0
    trace: list = field(default_factory=list, repr=False)


def _check_leverage(hat_diag, op, model_id=None):
    bad = np.flatnonzero(np.asarray(hat_diag) >= 1.0 - LEVERAGE_GUARD)
    if bad.size:
        j = int(bad[0])
        where = "" if model_id is None else f" in model {model_id}"
        raise LeverageOneError(
            f"observation {j} has leverage {hat_diag[j]:.17g}{where}; it "
            "fully determines its own fit",
            operation=op, datum=j if model_id is None else [model_id, j])


def deleteone_matrix(h, hat_diag=None):
    """Smoothing matrix ``D (H - I) + I`` with ``D = diag(1 / (1 - h_jj))``."""
    h = np.asarray(h, dtype=float)
    d = np.diag(h) if hat_diag is None else np.asarray(hat_diag, dtype=float)
    _check_leverage(d, "deleteone_matrix")
    n = h.shape[0]
    eye = np.eye(n)
    return (h - eye) / (1.0 - d)[:, None] + eye


def deleteone_predictions(fit, y):
    """Delete-one predictions ``(H~ Y)_j = (yhat_j - h_jj y_j) / (1 - h_jj)``."""
    _check_leverage(fit.hat_diag, "deleteone_predictions", fit.model_id)
    h = fit.hat_diag
    return (fit.fitted - h * y) / (1.0 - h)


def build_problem(fits, data, w, response=None):
    if len(fits) == 0:
        raise InvalidArgumentError("need at least one candidate model",
                                   operation="build_problem")
    y = data.response if response is None else np.asarray(response, dtype=float)
    pi = np.asarray(w, dtype=float)
    e = np.column_stack([deleteone_predictions(f, y) for f in fits])
    pe = pi[:, None] * e
    gram = e.T @ pe
    gram = 0.5 * (gram + gram.T)
    linear = pe.T @ y
    constant = float(y @ (pi * y))
    for arr in (e, gram, linear):
        arr.setflags(write=False)
    return AveragingProblem(e, gram, linear, constant)


def box_kkt_residual(prob, omega):
    """Norm of ``w - clip(w - grad M(w), 0, 1)``; zero exactly at the optimum."""
    g = prob.gradient(omega)
    return float(np.linalg.norm(omega - np.clip(omega - g, 0.0, 1.0)))


def simplex_kkt_residual(prob, omega):
    g = prob.gradient(omega)
    return float(np.linalg.norm(omega - project_simplex(omega - g)))


def project_simplex(v):
    """Euclidean projection onto ``{w >= 0, sum w = 1}`` (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / idx > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _degenerate_columns(gram):
    scale = max(float(np.trace(gram)), 1.0)
    return np.diag(gram) <= 1e-14 * scale


def _box_face_solve(prob, omega, dead):
    a, b = prob.gram, prob.linear
    free = (omega > 0.0) & (omega < 1.0) & ~dead
    if not free.any():
        return None
    fixed = ~free
    rhs = b[free] - a[np.ix_(free, fixed)] @ omega[fixed]
    x = np.linalg.lstsq(a[np.ix_(free, free)], rhs, rcond=None)[0]
    if np.any(x < 0.0) or np.any(x > 1.0):
        return None
    cand = omega.copy()
    cand[free] = x
    return cand


def optimize_weights_box(prob, tol=1e-10, max_sweeps=100_000, kkt_tol=1e-8,
                         polish_every=25):
    """Minimise the criterion over ``[0, 1]^K`` by cyclic coordinate descent.

    Each coordinate is set to its exact minimiser clipped to ``[0, 1]``.
    Iteration stops once no coordinate moves more than ``tol`` in a sweep.
    Every ``polish_every`` sweeps, and at the end, the current face is solved
    exactly; the result is kept only if it is feasible, no worse, and meets
    ``kkt_tol``. Coordinates whose column of ``A`` vanishes are pinned at 0.
    """
    a, b = prob.gram, prob.linear
    k = prob.k
    dead = _degenerate_columns(a)
    omega = np.zeros(k)
    m_prev = prob.criterion(omega)
    trace = [m_prev]
    slack = 1e-12 * (1.0 + abs(prob.constant))

    converged = False
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        g = a @ omega
        biggest = 0.0
        for j in range(k):
            if dead[j]:
                new = 0.0
            else:
                new = min(1.0, max(0.0, omega[j] + (b[j] - g[j]) / a[j, j]))
            step = new - omega[j]
            if step != 0.0:
                g += step * a[:, j]
                omega[j] = new
                biggest = max(biggest, abs(step))
        m = prob.criterion(omega)
        if m > m_prev + slack:
            raise ConvergenceError(
                f"coordinate descent increased the criterion at sweep {sweep}",
                operation="optimize_weights_box", last_iterate=omega.copy())
        m_prev = m
        trace.append(m)
        if biggest <= tol:
            converged = True
            break
        if sweep % polish_every == 0:
            cand = _box_face_solve(prob, omega, dead)
            if cand is not None and prob.criterion(cand) <= m + slack \
                    and box_kkt_residual(prob, cand) <= kkt_tol:
                omega = cand
                converged = True
                break

    if not converged:
        raise ConvergenceError(
            f"no convergence after {max_sweeps} sweeps",
            operation="optimize_weights_box", last_iterate=omega.copy())
    cand = _box_face_solve(prob, omega, dead)
    if cand is not None and prob.criterion(cand) <= prob.criterion(omega) + slack \
            and box_kkt_residual(prob, cand) < box_kkt_residual(prob, omega):
        omega = cand
    omega.setflags(write=False)
    return WeightSolution(omega, "box", prob.criterion(omega),
                          box_kkt_residual(prob, omega), sweep, trace)


def _simplex_face_solve(prob, omega):
    support = omega > 0.0
    s = int(support.sum())
    kkt = np.zeros((s + 1, s + 1))
    kkt[:s, :s] = 2.0 * prob.gram[np.ix_(support, support)]
    kkt[:s, s] = 1.0
    kkt[s, :s] = 1.0
    rhs = np.concatenate((2.0 * prob.linear[support], [1.0]))
    x = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:s]
    if np.any(x < 0.0):
        return None
    cand = np.zeros_like(omega)
    cand[support] = x / x.sum()
    return cand


def optimize_weights_simplex(prob, tol=1e-8, max_iter=100_000, polish_every=10):
    """Minimise the criterion over the probability simplex.

    Projected gradient with backtracking from the barycentre; stops when the
    projected-gradient residual drops to ``tol``. The support face is solved
    exactly every ``polish_every`` iterations and accepted when it is
    feasible, no worse, and meets ``tol``.
    """
    k = prob.k
    omega = np.full(k, 1.0 / k)
    if k == 1:
        omega.setflags(write=False)
        return WeightSolution(omega, "simplex", prob.criterion(omega),
                              simplex_kkt_residual(prob, omega), 0, [])
    lmax = float(np.linalg.eigvalsh(prob.gram)[-1])
    t = 1.0 / (2.0 * lmax) if lmax > 0 else 1.0
    slack = 1e-12 * (1.0 + abs(prob.constant))
    m = prob.criterion(omega)
    trace = [m]
    for it in range(1, max_iter + 1):
        if simplex_kkt_residual(prob, omega) <= tol:
            break
        if it % polish_every == 0:
            cand = _simplex_face_solve(prob, omega)
            if cand is not None and prob.criterion(cand) <= m + slack \
                    and simplex_kkt_residual(prob, cand) <= tol:
                omega, m = cand, prob.criterion(cand)
                trace.append(m)
                break
        g = prob.gradient(omega)
        t *= 2.0
        while True:
            new = project_simplex(omega - t * g)
            d = new - omega
            m_new = prob.criterion(new)
            if m_new <= m + g @ d + (d @ d) / (2.0 * t) + slack or t < 1e-30:
                break
            t *= 0.5
        omega, m = new, m_new
        trace.append(m)
    else:
        raise ConvergenceError(
            f"no convergence after {max_iter} iterations",
            operation="optimize_weights_simplex", last_iterate=omega.copy())
    omega.setflags(write=False)
    return WeightSolution(omega, "simplex", prob.criterion(omega),
                          simplex_kkt_residual(prob, omega), it, trace)


def information_criteria(rss, p_k, n, criterion):
    rss = np.asarray(rss, dtype=float)
    if np.any(rss <= 0.0):
        j = int(np.flatnonzero(rss <= 0.0)[0])
        raise InfiniteFitError(
            f"candidate model {j + 1} has zero weighted residual sum of squares",
            operation="info_criterion_weights", datum=j + 1)
    crit = criterion.upper()
    if crit == "AIC":
        penalty = 2.0
    elif crit == "BIC":
        penalty = np.log(n)
    else:
        raise InvalidArgumentError(f"unknown criterion {criterion!r}",
                                   operation="info_criterion_weights",
                                   datum=criterion)
    return n * np.log(rss / n) + penalty * np.asarray(p_k, dtype=float)


def ic_weights(ic):
    """Smoothed information-criterion weights ``exp(-dIC/2)``, summing to 1."""
    ic = np.asarray(ic, dtype=float)
    w = np.exp(-(ic - ic.min()) / 2.0)
    return w / w.sum()


def info_criterion_weights(fits, data, w, criterion, problem=None, response=None):
    """AIC/BIC model-averaging weights on the simplex.

    ``criterion_value`` is the Mallows criterion at the resulting weights when
    ``problem`` is given, otherwise NaN.
    """
    y = data.response if response is None else np.asarray(response, dtype=float)
    pi = np.asarray(w, dtype=float)
    rss = [float((y - f.fitted) @ (pi * (y - f.fitted))) for f in fits]
    ic = information_criteria(rss, [f.p_k for f in fits], data.n, criterion)
    omega = ic_weights(ic)
    omega.setflags(write=False)
    value = problem.criterion(omega) if problem is not None else float("nan")
    return WeightSolution(omega, criterion.upper(), value)


def _check_omega(fits, omega, op):
    omega = np.asarray(omega, dtype=float)
    if omega.shape != (len(fits),):
        raise InvalidArgumentError(
            f"{len(fits)} models but {omega.size} weights",
            operation=op, datum=[len(fits), int(omega.size)])
    return omega


def average_predict(fits, omega, x_new):
    """``sum_k w_k X_new[:, A_k] beta_k`` for a full-width covariate matrix."""
    omega = _check_omega(fits, omega, "average_predict")
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new[None, :]
    out = np.zeros(x_new.shape[0])
    for wk, f in zip(omega, fits):
        if f.index_set and max(f.index_set) >= x_new.shape[1]:
            raise InvalidArgumentError(
                f"model {f.model_id} uses column {max(f.index_set)} but x_new "
                f"has {x_new.shape[1]} columns",
                operation="average_predict", datum=f.model_id)
        out += wk * predict(f, x_new[:, list(f.index_set)])
    return out


def average_fitted(fits, omega):
    """In-sample averaged predictor ``sum_k w_k H_k Y``."""
    omega = _check_omega(fits, omega, "average_fitted")
    return np.column_stack([f.fitted for f in fits]) @ omega
