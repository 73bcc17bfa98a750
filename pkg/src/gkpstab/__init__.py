"""Dissipative stabilization of finite-energy grid states in a truncated Fock basis.

Submodules: ``fock`` (operators), ``lindblad`` (master equation and
integrators), ``observables`` (periodic observables, Pauli operators),
``bounds`` (energy bounds), ``spectrum`` (drift-diffusion spectra),
``rates`` (decay-rate fits and sweeps), ``cli``.

Importing the package does not import numpy, so the command line can pin
thread counts before any numerical library loads.
"""

__version__ = "0.1.0"
