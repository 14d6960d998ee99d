"""Prototype-guided diffusion sampling for video dataset distillation.

The package runs the whole pipeline on a synthetic latent-video world:
Gaussian-mixture class priors with an exact denoiser, k-means prototypes,
guided DDIM sampling, multi-instance composition and small-classifier
evaluation.
"""

__version__ = "0.1.0"
