"""Evaluation toolkit for generative models of 3D brain MRI."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("mrigen-eval")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.0.0"
