"""Single-qubit pulse simulator and benchmarking fits."""

from .fits import *  # noqa: F401,F403
from .gates import *  # noqa: F401,F403
from .simulate import *  # noqa: F401,F403
from . import fits, gates, simulate

__all__ = gates.__all__ + simulate.__all__ + fits.__all__
