"""Dual-arm manipulation control stack: command retargeting under physical
limits, admittance and impedance control, and a quasi-static simulator."""

__version__ = "0.1.0"
