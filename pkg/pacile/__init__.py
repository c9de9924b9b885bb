"""
pacile: PAC-Bayes learning and certification for structured prediction with
implicit loss embeddings
"""
from pacile.config import settings

__version__ = settings.VERSION

__all__ = ["__version__", "settings"]
