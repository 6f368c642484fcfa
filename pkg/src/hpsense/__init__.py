"""Simulation and inference for an ancilla-enhanced qubit dark-photon search."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("hpsense")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
