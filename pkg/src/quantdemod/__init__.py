"""Capacity-optimal channel-output quantization and 8PSK BICM demodulation."""

from __future__ import annotations

__version__ = "0.1.0"
