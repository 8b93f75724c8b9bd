"""IPCW-weighted least squares for candidate models."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularDesignError

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class CandidateFit:
    """Weighted least-squares fit of one candidate model.

    ``hat_diag`` is the diagonal of the oblique hat matrix
    ``X_k (X_k' Pi X_k)^{-1} X_k' Pi`` and ``fitted`` its image of the
    response.
    """

    index_set: tuple
    beta: np.ndarray
    hat_diag: np.ndarray
    fitted: np.ndarray
    model_id: int = 0

    @property
    def p_k(self):
        return len(self.index_set)


def _design(data, a):
    a = tuple(int(i) for i in a)
    if len(a) == 0:
        raise InvalidArgumentError("empty candidate model", operation="wls_fit")
    if min(a) < 0 or max(a) >= data.p:
        raise InvalidArgumentError(f"index set {a} out of range for p={data.p}",
                                   operation="wls_fit", datum=list(a))
    return a, data.x[:, list(a)]


def _whitened_svd(x, pi, model_id):
    sw = np.sqrt(pi)
    u, s, vt = np.linalg.svd(sw[:, None] * x, full_matrices=False)
    # cond(X*'X*) = cond(X*)^2
    if s.size == 0 or s[-1] == 0 or (s[0] / s[-1]) ** 2 > COND_LIMIT:
        cond = np.inf if s.size == 0 or s[-1] == 0 else (s[0] / s[-1]) ** 2
        raise SingularDesignError(
            f"candidate model {model_id}: weighted normal matrix is singular "
            f"(condition number {cond:.3g})",
            operation="wls_fit", datum=model_id)
    return sw, u, s, vt


def wls_fit(data, w, a, model_id=0, response=None):
    """Minimise ``(Y - X_k b)' Pi (Y - X_k b)`` over ``b``.

    The response defaults to the dataset's transformed observed times.
    """
    a, xk = _design(data, a)
    pi = np.asarray(w, dtype=float)
    y = data.response if response is None else np.asarray(response, dtype=float)
    sw, u, s, vt = _whitened_svd(xk, pi, model_id)
    beta = vt.T @ ((u.T @ (sw * y)) / s)
    # rows of X_k V S^{-1}; h_j = pi_j * ||q_j||^2
    q = xk @ (vt.T / s)
    hat_diag = pi * np.einsum("ij,ij->i", q, q)
    fitted = xk @ beta
    for arr in (beta, hat_diag, fitted):
        arr.setflags(write=False)
    return CandidateFit(a, beta, hat_diag, fitted, model_id)


def hat_matrix(data, w, a, model_id=0):
    """Dense oblique hat matrix ``X_k (X_k' Pi X_k)^{-1} X_k' Pi``."""
    a, xk = _design(data, a)
    pi = np.asarray(w, dtype=float)
    _, _, s, vt = _whitened_svd(xk, pi, model_id)
    q = xk @ (vt.T / s)
    return (q @ q.T) * pi[None, :]


def predict(fit, x_new):
    x_new = np.asarray(x_new, dtype=float)
    if x_new.ndim == 1:
        x_new = x_new[None, :]
    if x_new.shape[1] != fit.p_k:
        raise InvalidArgumentError(
            f"model {fit.model_id} expects {fit.p_k} columns, got {x_new.shape[1]}",
            operation="predict", datum=[fit.model_id, x_new.shape[1]])
    return x_new @ fit.beta


def fit_candidates(data, w, groups, threads=1):
    """Fit every group of a :class:`CandidateGroups`; order is preserved."""
    jobs = list(enumerate(groups.groups, start=1))
    if threads <= 1 or len(jobs) == 1:
        return [wls_fit(data, w, g, model_id=k) for k, g in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda kg: wls_fit(data, w, kg[1], model_id=kg[0]), jobs))
