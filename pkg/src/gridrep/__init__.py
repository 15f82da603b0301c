"""Reduced-network DC power flow and DC-OPF studies driven by public hourly data."""

__version__ = "0.1.0"
