"""Two-step model averaging: screen and group, then fit and weight."""

from dataclasses import dataclass

import numpy as np

from .averaging import (average_fitted, average_predict, build_problem,
                        info_criterion_weights, optimize_weights_box,
                        optimize_weights_simplex)
from .errors import InvalidArgumentError
from .regression import fit_candidates
from .screening import SCREENERS, build_candidate_groups
from .survival import ipcw_weights

# method label -> (screening filter, weight rule)
METHODS = {
    "FMV+MCV2": ("FMV", "MCV2"),
    "FMV+MCV1": ("FMV", "MCV1"),
    "SIS+MCV2": ("SIS", "MCV2"),
    "FKS+MCV2": ("FKS", "MCV2"),
    "MAIC": ("FMV", "AIC"),
    "MBIC": ("FMV", "BIC"),
}
WEIGHTINGS = ("MCV2", "MCV1", "AIC", "BIC")


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """Screening, grouping and per-group fits; shared by every weight rule."""

    screening: object
    groups: object
    fits: list
    problem: object
    weights: np.ndarray
    response: np.ndarray


@dataclass(frozen=True, eq=False)
class ModelAverage:
    candidates: CandidateSet
    solution: object

    @property
    def fits(self):
        return self.candidates.fits

    @property
    def omega(self):
        return self.solution.omega

    def fitted(self):
        return average_fitted(self.fits, self.omega)

    def predict(self, x_new):
        return average_predict(self.fits, self.omega, x_new)


def build_candidates(data, screening="FMV", d_n=100, k=10, max_slices=None,
                     weights=None, response=None, threads=1):
    """Screen, group the top ``d_n`` covariates into ``k`` models, fit each."""
    screening = screening.upper()
    if screening not in SCREENERS:
        raise InvalidArgumentError(f"unknown screening method {screening!r}",
                                   operation="build_candidates", datum=screening)
    pi = ipcw_weights(data) if weights is None else np.asarray(weights, dtype=float)
    if screening == "FMV":
        result = SCREENERS["FMV"](data, max_slices=max_slices, weights=pi,
                                  threads=threads)
    else:
        result = SCREENERS[screening](data, max_slices=max_slices, threads=threads)
    groups = build_candidate_groups(result, d_n, k)
    y = data.response if response is None else np.asarray(response, dtype=float)
    fits = fit_candidates(data, pi, groups, threads=threads)
    problem = build_problem(fits, data, pi, response=y)
    return CandidateSet(result, groups, fits, problem, pi, y)


def weigh(candidates, data, weighting="MCV2", tol=1e-10, max_sweeps=100_000):
    weighting = weighting.upper()
    if weighting == "MCV2":
        sol = optimize_weights_box(candidates.problem, tol=tol, max_sweeps=max_sweeps)
    elif weighting == "MCV1":
        sol = optimize_weights_simplex(candidates.problem, max_iter=max_sweeps)
    elif weighting in ("AIC", "BIC"):
        sol = info_criterion_weights(candidates.fits, data, candidates.weights,
                                     weighting, problem=candidates.problem,
                                     response=candidates.response)
    else:
        raise InvalidArgumentError(f"unknown weighting {weighting!r}",
                                   operation="weigh", datum=weighting)
    return ModelAverage(candidates, sol)


def fit_model_average(data, screening="FMV", weighting="MCV2", d_n=100, k=10,
                      max_slices=None, weights=None, tol=1e-10,
                      max_sweeps=100_000, threads=1):
    cands = build_candidates(data, screening, d_n, k, max_slices, weights,
                             threads=threads)
    return weigh(cands, data, weighting, tol, max_sweeps)
