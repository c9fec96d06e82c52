"""
killing-probe: numerical detection of polynomial-in-momenta first integrals
(Killing tensors) of geodesic flows
"""

__version__ = "0.1.0"
