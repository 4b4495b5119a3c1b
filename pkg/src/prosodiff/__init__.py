"""Prosody-conditioned guided diffusion over mel-spectrograms.

Subpackages cover a minimal autodiff/neural core, an audio DSP frontend,
classical pitch and energy extraction, a DDPM engine with combined
classifier-free and classifier guidance, a frame-wise prosody predictor, a
prosody metric suite, and a synthetic-corpus experiment harness.
"""

__version__ = "0.1.0"
