"""Gear fault diagnosis from fused ASTFT and DTCWT time-frequency images.

Submodules:

* ``signal``   synthetic two-channel gearbox recordings and the GFD1 dataset file
* ``tfa``      windows, STFT, Wigner-Ville, adaptive STFT, resampling and image export
* ``pso``      particle swarm search for the adaptive window schedule
* ``dtcwt``    dual-tree complex wavelet transform and scalograms
* ``nn``       numpy convolution, batch norm, Adam, gradient checks, checkpoints
* ``fusion``   the two-branch classifier, feature preparation, training and ablation
* ``cli``      the ``gearfuse`` command
"""

__version__ = "0.1.0"
