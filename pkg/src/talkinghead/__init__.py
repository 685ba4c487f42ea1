"""Desk-scale talking-head pipeline on procedural synthetic data.

Subpackages cover the full chain: linear face-landmark model, swap-trained
attribute disentanglement, contrastive audio-lip alignment, Transformer
GP-VAE attribute generation, conditional volume rendering, an evaluation
metric suite, the synthetic dataset generator, and a CLI orchestrator.
"""

__version__ = "0.1.0"
