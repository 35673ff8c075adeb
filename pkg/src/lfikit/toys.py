"""Toy generative models with tractable posteriors, for diagnostics and tests."""

import numpy as np

from .rng import _std_normal
from .simulators import DesignBox, Dataset, _CoordMixin, _count_simulation


class GaussianMeanModel(_CoordMixin):
    """m iid Normal(theta, sd^2) observations of a scalar location.

    With ``m=1`` this is the additive-noise toy whose posterior mean under a
    uniform design is available by quadrature; with larger ``m`` it backs the
    bootstrap-coverage and sampler-oracle checks.
    """

    name = "gaussian_toy"
    index_name = "n"
    parameter_names = ("theta",)

    def __init__(self, m=100, sd=1.0, lo=-5.0, hi=5.0):
        self.m = int(m)
        self.sd = float(sd)
        self.design = DesignBox(lo=(float(lo),), hi=(float(hi),))

    @property
    def output_length(self):
        return self.m

    def simulate(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        _count_simulation()
        gen = rng.generator
        y = np.empty(self.m)
        for i in range(self.m):
            y[i] = theta[0] + self.sd * _std_normal(gen)
        return Dataset({"y": y}, time_grid=np.arange(1, self.m + 1, dtype=float))
