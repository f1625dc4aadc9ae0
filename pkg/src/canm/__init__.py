"""canm: reference-guided multi-contrast MRI super-resolution on a numpy
autodiff engine."""

__version__ = "0.1.0"
