"""dcslab: a simulation lab for online deep compressed sensing over
IoT sensor clusters.

Subpackages:

* ``nn`` -- dense-layer kernel with manual backprop and a finite-difference
  gradient oracle,
* ``codec`` -- the asymmetric autoencoder (shallow encoder, deep decoder,
  latent Gaussian noise, Huber loss, drift monitor),
* ``wsn`` -- aggregation trees and per-link transmission ledgers,
* ``sched`` -- device selection and upload scheduling (primal-dual solver,
  baselines, exhaustive oracle),
* ``datasets`` -- synthetic signals and the IDX image format,
* ``harness`` -- the ``dcslab`` CLI and experiment scenarios.
"""

__version__ = "0.1.0"

from . import codec, datasets, kernels, nn, sched, wsn  # noqa: F401
