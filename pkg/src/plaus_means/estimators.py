"""Estimator-style interface over the functional core.

Both estimators follow the fit/predict convention with ``get_params`` and
``set_params``, so they compose with scikit-learn tooling (``clone``,
pipelines, grid search) without this package depending on it.  ``fit``
consumes a 1-D vector of observations (or an ``(n, 1)`` column); ``predict``
maps arbitrary new observations through the fitted model, while
``point_estimates`` and ``intervals`` answer for the fitted observations
themselves.
"""

from __future__ import annotations

import inspect

import numpy as np

from . import score as bd
from ._validation import as_float_vector
from .classic import ClassicFit, classic_mpe_fit, partial_conditional_estimate
from .deconv import (
    MPE_REGION_SLACK,
    AdaptiveResult,
    DeconvProblem,
    IntervalSet,
    SimplexWeights,
    SortedSample,
    adaptive_adjust,
    make_grid,
    posterior_mean,
    region_at_mpe,
)
from .optimize import OptimizerConfig

ROOT_95 = float(np.sqrt(0.95))
DEFAULT_ALPHA = 1.0 - ROOT_95
DEFAULT_PI = 1.0 - ROOT_95


class NotFittedError(RuntimeError):
    """Raised when predict-like methods are called before ``fit``."""


class _ParamsMixin:
    """Minimal sklearn-compatible parameter protocol."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(f"invalid parameter {key!r} for {type(self).__name__}")
            setattr(self, key, value)
        return self

    def _require_fitted(self, attr: str):
        if not hasattr(self, attr):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit(X) first")


class EmpiricalBayesMeans(_ParamsMixin):
    """Mean estimation through a fitted discrete mixing distribution.

    ``fit`` learns simplex weights over a data-driven grid by minimizing the
    boundary score of the fitted mixture CDF.  ``predict`` returns posterior
    means under the fitted weights; ``point_estimates`` returns the
    midpoint-of-extremes estimates for the fitted observations, and
    ``intervals`` the region-optimized interval estimates.
    """

    def __init__(
        self,
        K: int = 200,
        c_n: float = 2.0 / 3.0,
        nu: float = 2.0,
        alpha: float = DEFAULT_ALPHA,
        pi: float = DEFAULT_PI,
        mc_samples: int = 100_000,
        slack: float = MPE_REGION_SLACK,
        optimizer: OptimizerConfig | None = None,
        seed: int = 0,
    ):
        self.K = K
        self.c_n = c_n
        self.nu = nu
        self.alpha = alpha
        self.pi = pi
        self.mc_samples = mc_samples
        self.slack = slack
        self.optimizer = optimizer
        self.seed = seed

    # -- estimator protocol -------------------------------------------------

    def fit(self, X, y=None):
        x = as_float_vector(X, "X")
        self.sample_ = SortedSample.from_observations(x)
        self.grid_ = make_grid(self.sample_, self.K)
        self.spec_ = bd.make_boundary_spec(self.sample_.n, self.c_n, self.nu)
        self.problem_ = DeconvProblem(self.grid_, self.sample_, self.spec_)
        gamma, b_min = self.problem_.fit(self._config())
        self.weights_ = SimplexWeights(gamma=gamma)
        self.b_min_ = b_min
        return self

    def predict(self, X=None) -> np.ndarray:
        """Posterior means under the fitted weights (training data by default)."""
        self._require_fitted("weights_")
        x = self.sample_.x_input if X is None else as_float_vector(X, "X")
        return np.array([posterior_mean(self.grid_, self.weights_, xi) for xi in x])

    # -- domain queries ------------------------------------------------------

    def point_estimates(self) -> np.ndarray:
        """Midpoints of the posterior-mean ranges, in input order."""
        self._require_fitted("weights_")
        region = region_at_mpe(self.problem_, self._config(), self.slack)
        mids = np.array(
            [
                0.5 * sum(self.problem_.theta_extreme_pair(i, region.threshold))
                for i in range(self.sample_.n)
            ]
        )
        return self.sample_.to_input_order(mids)

    def theta_extremes(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-observation posterior-mean ranges, in input order."""
        self._require_fitted("weights_")
        region = region_at_mpe(self.problem_, self._config(), self.slack)
        pairs = [
            self.problem_.theta_extreme_pair(i, region.threshold)
            for i in range(self.sample_.n)
        ]
        lows = self.sample_.to_input_order(np.array([p[0] for p in pairs]))
        highs = self.sample_.to_input_order(np.array([p[1] for p in pairs]))
        return lows, highs

    def intervals(
        self,
        alpha: float | None = None,
        pi: float | None = None,
        rng: np.random.Generator | None = None,
    ) -> IntervalSet:
        """Region-optimized intervals for the fitted observations."""
        from .deconv import plausibility_intervals

        self._require_fitted("weights_")
        if rng is None:
            rng = np.random.default_rng(self.seed)
        return plausibility_intervals(
            self.grid_,
            self.sample_,
            self.spec_,
            pi if pi is not None else self.pi,
            alpha if alpha is not None else self.alpha,
            self._config(),
            rng=rng,
            mc_samples=self.mc_samples,
            problem=self.problem_,
        )

    def adaptive_intervals(
        self,
        target_coverage: float = 0.95,
        m: int = 10,
        reps: int = 50,
        rng: np.random.Generator | None = None,
    ) -> AdaptiveResult:
        """Monte Carlo tuned intervals targeting the requested coverage."""
        self._require_fitted("weights_")
        if rng is None:
            rng = np.random.default_rng(self.seed)
        return adaptive_adjust(
            self.grid_,
            self.sample_,
            self.spec_,
            target_coverage,
            m=m,
            reps=reps,
            rng=rng,
            config=self._config(),
            mc_samples=self.mc_samples,
            slack=self.slack,
        )

    def _config(self) -> OptimizerConfig:
        if self.optimizer is not None:
            return self.optimizer
        return OptimizerConfig(seed=self.seed)


class ClassicMeans(_ParamsMixin):
    """Mean estimation through a fitted collection of candidate means.

    ``fit`` minimizes the boundary score of the collection's marginal CDF
    over all real collections; ``predict`` averages the fitted collection
    under per-observation normal weights.
    """

    def __init__(
        self,
        c_n: float = 2.0 / 3.0,
        nu: float = 2.0,
        optimizer: OptimizerConfig | None = None,
    ):
        self.c_n = c_n
        self.nu = nu
        self.optimizer = optimizer

    def fit(self, X, y=None):
        x = as_float_vector(X, "X")
        self.sample_ = SortedSample.from_observations(x)
        self.spec_ = bd.make_boundary_spec(self.sample_.n, self.c_n, self.nu)
        fit: ClassicFit = classic_mpe_fit(self.sample_, self.spec_, self.optimizer)
        self.collection_ = fit.theta_hat_collection
        self.b_at_fit_ = fit.b_at_fit
        return self

    def predict(self, X=None) -> np.ndarray:
        self._require_fitted("collection_")
        x = self.sample_.x_input if X is None else as_float_vector(X, "X")
        return partial_conditional_estimate(self.collection_, x)

    def point_estimates(self) -> np.ndarray:
        """Estimates for the fitted observations, in input order."""
        return self.predict()
