"""Flow-matching generation of protein sequences in a smoothed, compressed
continuous latent space, plus an evaluation metric suite for generated
sequence sets."""

__version__ = "0.1.0"
