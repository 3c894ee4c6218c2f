"""Certified local tensor-train surrogates for smooth black-box functions."""

from ._backend import BACKEND
from .certificate import Certificate, build_certificate, sample_complexity, uniform_deviation
from .derivatives import BlackBox, CoefficientTensor, SmoothnessBudget, embed, fd_derivatives, taylor_eval
from .erm import Dataset, ERMConfig, als_fit, sample_patch
from .features import PatchSpec, bessel_constant, normalize
from .families import FamilyInstance, make_instance
from .quantum import QcnnModel
from .tt import TTTensor, tt_eval, tt_eval_batch, tt_svd

__version__ = "0.1.0"
