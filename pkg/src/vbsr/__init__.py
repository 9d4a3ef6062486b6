"""VBSR-BENCH: posterior-mean multi-frame super-resolution and its benchmark harness."""

__version__ = "1.0.0"
__author__ = "VBSR Bench Developers"
__license__ = "Apache-2.0"

from typing import Final

# Package metadata
PACKAGE_NAME: Final[str] = "vbsr-bench"
PACKAGE_VERSION: Final[str] = __version__

__all__ = [
    "PACKAGE_NAME",
    "PACKAGE_VERSION",
    "__author__",
    "__license__",
    "__version__",
]
