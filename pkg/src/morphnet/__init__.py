"""Desk-scale galaxy morphology networks on a numpy autodiff core.

Subpackages cover the tensor/tape core (:mod:`morphnet.tensor`),
network building blocks (:mod:`morphnet.blocks`), compound scaling of
architectures (:mod:`morphnet.scaling`), catalog curation and image
preparation (:mod:`morphnet.gz2`, :mod:`morphnet.imaging`), the
training engine (:mod:`morphnet.training`, :mod:`morphnet.checkpoint`),
evaluation (:mod:`morphnet.metrics`), and the command line front end
(:mod:`morphnet.cli`).
"""

from morphnet.tensor import (
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    backward,
    precision,
    set_default_dtype,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "backward",
    "precision",
    "set_default_dtype",
    "__version__",
]
