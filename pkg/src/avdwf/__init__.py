"""Audio-visual deepfake detector with dual transformer encoders and dynamic weight fusion."""

__version__ = "0.1.0"
