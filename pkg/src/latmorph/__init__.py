"""Latent morphology model and baseline decoders for character-level translation."""

__version__ = "0.1.0"
