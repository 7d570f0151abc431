"""Boundary unit conversions.

Everything inside the package is SI (m, s, Hz, W, Np). The helpers here are the
only place engineering units appear.
"""

from __future__ import annotations

import math

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s

_DB_PER_NP = 10.0 / math.log(10.0)


def db_per_km_to_np_per_m(x):
    """Power attenuation in dB/km to Np/m (``exp(-alpha*z)`` convention)."""
    return x / _DB_PER_NP / 1e3


def np_per_m_to_db_per_km(x):
    return x * _DB_PER_NP * 1e3


def dbm_to_watt(p_dbm):
    return 1e-3 * 10.0 ** (np.asarray(p_dbm, dtype=float)[()] / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)[()] / 1e-3)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, dtype=float)[()] / 10.0)


# ps/(nm km) -> s/m^2
def ps_nm_km_to_s_m2(d):
    return d * 1e-12 / 1e-9 / 1e3


def s_m2_to_ps_nm_km(d):
    return d / (1e-12 / 1e-9 / 1e3)


# ps/(nm^2 km) -> s/m^3
def ps_nm2_km_to_s_m3(s):
    return s * 1e-12 / 1e-18 / 1e3


def s_m3_to_ps_nm2_km(s):
    return s / (1e-12 / 1e-18 / 1e3)


# 1/(W km) -> 1/(W m)
def per_w_km_to_per_w_m(g):
    return g / 1e3


def per_w_m_to_per_w_km(g):
    return g * 1e3


# 1/(W km THz) -> 1/(W m Hz)
def cr_per_w_km_thz_to_si(cr):
    return cr / 1e3 / 1e12


def cr_si_to_per_w_km_thz(cr):
    return cr * 1e3 * 1e12
