"""Scikit-learn style wrapper around the reconstruction pipeline.

``fit`` either consumes explicit gradient observations (X = points,
y = gradient values) or synthesizes them from the catalog problem, then
trains the conductivity/flux networks; ``predict`` evaluates the projected
conductivity at new points.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from . import metrics
from .loss import LossWeights
from .optimize import DEFAULT_HIDDEN, TrainConfig, reconstruction_callable, train
from .problems import ObservationField, ProblemInstance, make_example


class ConductivityReconstructor(BaseEstimator):
    """Recover a conductivity field from one internal gradient measurement."""

    def __init__(
        self,
        problem="neu1",
        variant=None,
        delta=0.0,
        gamma_sigma=10.0,
        gamma_b=10.0,
        gamma_q=1e-5,
        gamma_tv=0.0,
        n_r=5000,
        n_b=500,
        lr0=3e-3,
        dr=0.7,
        step=800,
        epochs=5000,
        seed=0,
        q_hidden=DEFAULT_HIDDEN,
        sigma_hidden=DEFAULT_HIDDEN,
        trace_interval=100,
    ):
        self.problem = problem
        self.variant = variant
        self.delta = delta
        self.gamma_sigma = gamma_sigma
        self.gamma_b = gamma_b
        self.gamma_q = gamma_q
        self.gamma_tv = gamma_tv
        self.n_r = n_r
        self.n_b = n_b
        self.lr0 = lr0
        self.dr = dr
        self.step = step
        self.epochs = epochs
        self.seed = seed
        self.q_hidden = q_hidden
        self.sigma_hidden = sigma_hidden
        self.trace_interval = trace_interval

    def _problem_instance(self) -> ProblemInstance:
        if isinstance(self.problem, ProblemInstance):
            return self.problem
        return make_example(self.problem)

    def _resolved_variant(self, instance: ProblemInstance) -> str:
        if self.variant is not None:
            return self.variant
        return "neumann" if instance.bc_kind == "neumann" else "dirichlet-fluxbc"

    def fit(self, X=None, y=None):
        """Train the networks; with X, y given they are used as the data term's
        observation points and gradient values."""
        instance = self._problem_instance()
        config = TrainConfig(
            lr0=self.lr0,
            dr=self.dr,
            step=self.step,
            epochs=self.epochs,
            seed=self.seed,
            n_r=self.n_r,
            n_b=self.n_b,
            weights=LossWeights(self.gamma_sigma, self.gamma_b, self.gamma_q, self.gamma_tv),
            q_hidden=tuple(self.q_hidden),
            sigma_hidden=tuple(self.sigma_hidden),
            delta=self.delta,
            variant=self._resolved_variant(instance),
            trace_interval=self.trace_interval,
        )
        if X is not None:
            X = check_array(X, dtype=np.float64)
            y = check_array(y, dtype=np.float64)
            if X.shape != y.shape or X.shape[1] != instance.dim:
                raise ValueError("X and y must both have shape (n, dim)")
            observation = ObservationField(
                points=X, grad_z=y, delta=self.delta, noise_seed=-1,
                scale=float(np.max(np.abs(y))),
            )
            result = train(instance, config, observation=observation)
        else:
            result = train(instance, config)
        self.result_ = result
        self.q_spec_ = result.q_spec
        self.q_params_ = result.q_params
        self.bounds_ = instance.bounds
        self.trace_ = result.trace
        self.n_parameters_ = result.q_spec.n_params + result.sigma_spec.n_params
        return self

    def _check_fitted(self):
        if not hasattr(self, "q_params_"):
            raise NotFittedError("call fit before predict/score")

    def predict(self, X):
        """Projected conductivity values at points X of shape (n, dim)."""
        self._check_fitted()
        X = check_array(X, dtype=np.float64)
        from .network import project_admissible

        raw = reconstruction_callable(self.q_spec_, self.q_params_)(X)
        clamped, _ = project_admissible(raw, self.bounds_)
        return clamped

    def score(self, X=None, y=None):
        """Negative relative L2 error against the instance's true conductivity."""
        self._check_fitted()
        instance = self._problem_instance()
        mode, resolution = metrics.default_error_settings(instance.dim)
        err = metrics.relative_l2_error(
            reconstruction_callable(self.q_spec_, self.q_params_),
            instance.q_true,
            instance.domain,
            bounds=instance.bounds,
            mode=mode,
            resolution=resolution,
        )
        return -err


