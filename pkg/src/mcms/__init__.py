"""Psychometric validation pipeline for multi-factor rating scales."""

__version__ = "0.1.0"
