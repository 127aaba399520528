"""Evidential regression with uncertainty-guided domain alignment.

Core pieces: a float64 reverse-mode autodiff engine (`autodiff`), the
normal-inverse-gamma evidential head and losses (`evidential`), kernel
two-sample discrepancies and alignment objectives (`alignment`), MLP and
recurrent feature extractors (`models`), synthetic and battery data
pipelines (`data`), the adaptation training loop (`train`), and metrics,
calibration diagnostics and reporting (`metrics`, `cli`).
"""

__version__ = "0.1.0"
