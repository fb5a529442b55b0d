"""Learn the part structure of minimal image patches and interpret novel ones."""
from ._backend import BACKEND

__version__ = "0.1.0"
