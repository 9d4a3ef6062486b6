"""Data models for VBSR-BENCH"""

from .image import GrayImage, load_pgm, save_pgm
from .registration import GridSpec, RegistrationParams

__all__ = ["GrayImage", "GridSpec", "RegistrationParams", "load_pgm", "save_pgm"]
