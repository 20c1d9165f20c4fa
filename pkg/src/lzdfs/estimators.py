"""scikit-learn style wrapper around the unravelling fit.

Samples are measurement conditions ``[delta1, delta2, gamma, kBT]`` of the
perturbed-coupling family; targets are observed efficiencies. ``fit``
estimates the noise block W, ``predict`` runs the forward model with it.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .experiments import fig3_couplings
from .integrator import IntegratorOptions
from .unravel import ForwardModel, Measurement, UnravelOptions, unravel_noise

__all__ = ["NoiseUnraveller"]

N_FEATURES = 4


class NoiseUnraveller(RegressorMixin, BaseEstimator):
    """Estimate the 2:2 noise block from efficiency data.

    Parameters
    ----------
    g_magnitude : float
        Coherent coupling scale g of every scheme.
    text_couplings : bool
        Scheme family: True selects the decoherence-free parameterization.
    kappa, tau0 : float
        Sweep conditions shared by all samples.
    n_starts, seed, bound : multi-start settings.
    rtol, atol : forward-model tolerances.
    """

    def __init__(
        self,
        g_magnitude=1.0,
        text_couplings=True,
        kappa=0.1,
        tau0=50.0,
        n_starts=16,
        seed=0,
        bound=2.0,
        rtol=1e-7,
        atol=1e-9,
    ):
        self.g_magnitude = g_magnitude
        self.text_couplings = text_couplings
        self.kappa = kappa
        self.tau0 = tau0
        self.n_starts = n_starts
        self.seed = seed
        self.bound = bound
        self.rtol = rtol
        self.atol = atol

    def _measurements(self, X, y=None, sample_weight=None):
        out = []
        for i, (d1, d2, gam, temp) in enumerate(X):
            out.append(
                Measurement(
                    couplings=fig3_couplings(d1, d2, self.g_magnitude, self.text_couplings),
                    efficiency=0.0 if y is None else float(y[i]),
                    gamma=float(gam),
                    temperature=float(temp),
                    kappa=self.kappa,
                    tau0=self.tau0,
                    weight=1.0 if sample_weight is None else float(sample_weight[i]),
                    delta1=float(d1),
                    delta2=float(d2),
                )
            )
        return out

    def _integrator(self):
        return IntegratorOptions(rtol=self.rtol, atol=self.atol, n_samples=2)

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, dtype=float, ensure_min_samples=1)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features [delta1, delta2, gamma, kBT], got {X.shape[1]}")
        if sample_weight is not None:
            sample_weight = np.asarray(sample_weight, dtype=float)
        opts = UnravelOptions(n_starts=self.n_starts, seed=self.seed, bound=self.bound, integrator=self._integrator())
        self.result_ = unravel_noise(self._measurements(X, y, sample_weight), options=opts)
        self.noise_couplings_ = self.result_.estimated_w
        self.n_features_in_ = N_FEATURES
        return self

    def predict(self, X):
        check_is_fitted(self, "noise_couplings_")
        X = check_array(X, dtype=float)
        if X.shape[1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {X.shape[1]}")
        fwd = ForwardModel(self._measurements(X), self._integrator())
        return fwd.predict(self.noise_couplings_)
