"""Hybrid quantum-classical data assimilation testbed.

Exact statevector primitives feed QAOA initialization, Grover-amplified
MCMC weighting, and quantum/variational resampling particle filters, all
validated on 4DVAR twin experiments against classical baselines.
"""

__version__ = "0.1.0"

from . import (  # noqa: E402,F401
    config,
    dynamics,
    encoding,
    fourdvar,
    kalman,
    mcmc,
    particle_filter,
    pipeline,
    qaoa,
    report,
    scaling,
    statevector,
    twin,
)
