"""Semisupervised Bayesian predictive models.

Submodules: ``stochastics`` (seeded samplers), ``mixture`` (Gaussian mixture
regression and discrimination), ``relevance`` (graph analysis of when
unlabeled x matters), ``binary`` (2x2 binary model), ``factor`` (empirical
factors and probit), ``kernel`` (RBF kernel models and LapRLS), ``data_io``
and ``harness``/``cli``.
"""

__version__ = "0.1.0"
