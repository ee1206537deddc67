"""scikit-learn style wrappers around the main operations.

Each wrapper stores its parameters in ``__init__`` untouched, does the work in
``fit`` and exposes results as trailing-underscore attributes, so the objects
work with ``get_params``/``set_params``/``clone``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .averaging import normalize
from .bnf import birkhoff_normal_form, constants_for, verify_dg_bounds
from .poly import Polynomial
from .steepness import certify_stably_steep, certify_steep, default_xi_grid


class BirkhoffNormalizer(TransformerMixin, BaseEstimator):
    """fit(H) computes the normal form; transform(H) returns the normalized jets.

    ``H`` is a Polynomial in complex coordinates or a list of them.
    """

    def __init__(self, alpha=None, order=4, working_degree=None, R=None):
        self.alpha = alpha
        self.order = order
        self.working_degree = working_degree
        self.R = R

    def _one(self, H):
        return birkhoff_normal_form(H, self.alpha, self.order, self.working_degree)

    def fit(self, H, y=None):
        self.result_ = self._one(H if isinstance(H, Polynomial) else H[0])
        self.hm_ = self.result_.hm
        self.generators_ = self.result_.generators
        self.defect_norm_ = self.result_.defect_norm()
        if self.R is not None:
            self.constants_ = constants_for(self.result_, R=self.R)
            self.bounds_report_ = verify_dg_bounds(self.result_, self.constants_)
        return self

    def transform(self, H):
        if isinstance(H, Polynomial):
            return self._one(H).transformed
        return [self._one(h).transformed for h in H]


class SteepnessCertifier(BaseEstimator):
    """fit(P) certifies P (a polynomial in the actions) as steep or stably steep."""

    def __init__(self, mode="steep", samples=8, perturbations=8, radius=1e-3, delta=0.1, decades=2.0,
                 per_decade=10, seed=0, n_jobs=1):
        self.mode = mode
        self.samples = samples
        self.perturbations = perturbations
        self.radius = radius
        self.delta = delta
        self.decades = decades
        self.per_decade = per_decade
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, P, y=None):
        grid = default_xi_grid(self.delta, self.decades, self.per_decade)
        if self.mode == "steep":
            cert = certify_steep(P, grid, self.samples, self.seed)
        elif self.mode == "stably-steep":
            cert = certify_stably_steep(P, self.radius, self.perturbations, grid, self.samples, self.seed,
                                        self.n_jobs)
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        self.certificate_ = cert
        self.verdict_ = cert.verdict
        self.p_ = cert.p
        self.C_ = cert.C
        return self

    def score(self, P=None, y=None):
        """1.0 when certified, else 0.0."""
        return float(self.certificate_.certified)


class ResonantAverager(BaseEstimator):
    """fit(datum) runs the averaging iterations of a normal-form datum against ``omega``."""

    def __init__(self, omega=None, iterations=None, working_degree=8, enforce_thresholds=True):
        self.omega = omega
        self.iterations = iterations
        self.working_degree = working_degree
        self.enforce_thresholds = enforce_thresholds

    def fit(self, datum, y=None):
        res = normalize(datum, self.omega, self.iterations, self.working_degree, self.enforce_thresholds)
        self.result_ = res
        self.generators_ = res.generators
        self.datum_ = res.datum
        self.contractions_ = np.array([l.contraction for l in res.logs])
        return self


class DriftExperiment(BaseEstimator):
    """fit(z0) integrates H from z0 and records the maximal action drift."""

    def __init__(self, hamiltonian=None, dt=1e-3, steps=10_000, stride=None, escape=None):
        self.hamiltonian = hamiltonian
        self.dt = dt
        self.steps = steps
        self.stride = stride
        self.escape = escape

    def fit(self, z0, y=None):
        from .nekho import integrate, measure_drift

        stride = self.stride or max(1, self.steps // 5000)
        self.trajectory_ = integrate(self.hamiltonian, z0, self.dt, self.steps, stride=stride, escape=self.escape)
        self.report_ = measure_drift(self.trajectory_, self.escape)
        self.max_drift_ = self.report_.max_drift
        return self
