"""Broadband passive-sonar track-before-detect toolkit.

Subpackages cover the full pipeline: array geometry and fractional-delay
beamforming (:mod:`sonartkbd.array`), vector-autoregressive ambient noise
modelling and whitening (:mod:`sonartkbd.noise`), heavy-tailed likelihood
ratios (:mod:`sonartkbd.stats`), a CFAR detector with a detection-based
likelihood (:mod:`sonartkbd.detect`), the Bernoulli particle filter
(:mod:`sonartkbd.tkbd`), a scenario simulator (:mod:`sonartkbd.sim`),
evaluation metrics (:mod:`sonartkbd.evaluate`), and the command line
interface (:mod:`sonartkbd.cli`).
"""

__version__ = "0.1.0"
