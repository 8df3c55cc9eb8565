"""Optimal 5G core slice embedding onto a datacenter substrate."""

__version__ = "0.1.0"
