"""bandless: banding-artifact suppression for accelerated Cartesian MRI
reconstruction via orientation-adversarial training, with a self-contained
differentiable tensor engine and k-space simulator."""

__version__ = "0.1.0"
