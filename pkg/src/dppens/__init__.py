"""Determinantal point process sampling for kernel regression.

Modules:

``kernel_core``  kernels, Gram spectra, scaled elementary symmetric polynomials
``samplers``     uniform, ridge-leverage, DPP and kDPP landmark samplers
``regressors``   ridgeless and ridge regressors, Nystrom approximations, ensembles
``oracle``       exhaustive and Monte Carlo checks of the expectation identities
``bench``        datasets, stratified splits, ensemble experiments
``cli``          the ``dppens`` command
"""

from .errors import DataError, FactorizationError, PositiveDefinitenessError, SamplingError
from .kernel_core import (
    ElemSymTable,
    KernelSpec,
    Spectrum,
    cross_kernel,
    eigendecompose,
    elem_sym,
    gram,
    marginal_kernel,
    ridge_leverage_scores,
)
from .regressors import fit_ensemble, fit_krr, fit_ridgeless, nystrom
from .samplers import Sampler, SamplerConfig, sample_dpp, sample_kdpp, sample_rls, sample_uniform

__version__ = "0.1.0"
