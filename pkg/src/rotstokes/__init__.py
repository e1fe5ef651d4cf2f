"""Numerical toolkit for planar viscous flow past a rotating obstacle.

Layers, bottom to top:

``specfun``
    complex-argument modified Bessel functions and cancellation-safe
    combinations; the sawtooth resummation.
``kernels``
    the steady log kernel, the frequency-domain (resolvent) kernel, and the
    purely periodic time-dependent kernel with its decay diagnostics.
``fields``
    polar-log grids, sampled/analytic fields, weighted norms, moments,
    decay fits, serialization.
``quad``
    singularity-aware convolution of kernels against fields.
``linsolve``
    the whole-plane rotating linear solver (torque-free data) built from the
    kernels via rotating-frame conjugation.
``nonlinear``
    cutoff/corrector construction, torque functional, forcing assembly,
    Picard iteration and the far-field structure report.
``cli``
    command-line front end (``rotstokes <subcommand>``).
"""

from . import specfun  # noqa: F401

__version__ = "0.1.0"
