"""Detect genuine n-local spin couplings from spectroscopy fits and driven-coupler dynamics."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.0.0"

from .kernels import BACKEND

__all__ = ["BACKEND", "__version__"]
