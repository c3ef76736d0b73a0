"""Unit conversions. Energies are angular frequencies in rad/ns, times in ns.

With these units 2*pi x 1 GHz is the number 2*pi.
"""

import math

TWO_PI = 2.0 * math.pi


def ghz(value):
    """Frequency in GHz -> rad/ns."""
    return TWO_PI * value


def mhz(value):
    """Frequency in MHz -> rad/ns."""
    return TWO_PI * value * 1e-3


def to_ghz(value):
    return value / TWO_PI


def to_mhz(value):
    return value / TWO_PI * 1e3
