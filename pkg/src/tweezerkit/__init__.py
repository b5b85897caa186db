"""Simulation and control toolkit for large optical tweezer arrays.

Submodules are imported on demand; ``core`` holds shared types and constants.
"""

from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

__all__ = ["__version__"]
