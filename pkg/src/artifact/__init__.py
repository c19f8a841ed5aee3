"""Exact modular data, fusion rules and characters for sl(3) at admissible level
k = -3 + u/2 and the Bershadsky-Polyakov minimal models."""

from __future__ import annotations

__version__ = "0.1.0"
