"""Handwriting screening toolkit: frozen image backbone, trainable dense
classifier head, training/evaluation, and an HTTP screening service."""

__version__ = "0.1.0"
