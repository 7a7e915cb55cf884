"""Progressive homography alignment between image pairs.

Thin wrapper over the compiled core: geometry and warping primitives, the
correlation-regression pipeline, staged training, and PCK evaluation.
"""

from homalign._core import *  # noqa: F401,F403
from homalign._core import __doc__  # noqa: F401
