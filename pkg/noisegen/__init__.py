"""Modèle de bruit génératif sensible à la caméra pour images RAW Bayer."""

__version__ = "0.1.0"
