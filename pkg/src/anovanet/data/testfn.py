"""Closed-form benchmark functions on their raw input boxes."""

import numpy as np

from anovanet.data import constants as C


def ishigami(x, a=C.ISHIGAMI_A, b=C.ISHIGAMI_B):
    x = np.asarray(x, dtype=np.float64)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.sin(x1) + a * np.sin(x2) ** 2 + b * x3 ** 4 * np.sin(x1)


def ishigami_variances(a=C.ISHIGAMI_A, b=C.ISHIGAMI_B):
    """Exact partial variances on ``[-pi, pi]^3`` keyed by subset mask."""
    pi4 = np.pi ** 4
    v1 = 0.5 * (1.0 + b * pi4 / 5.0) ** 2
    v2 = a * a / 8.0
    v13 = b * b * np.pi ** 8 * (1.0 / 18.0 - 1.0 / 50.0)
    return {0b001: v1, 0b010: v2, 0b100: 0.0, 0b011: 0.0, 0b101: v13, 0b110: 0.0, 0b111: 0.0}


def otl_circuit(x):
    x = np.asarray(x, dtype=np.float64)
    rb1, rb2, rf, rc1, rc2, beta = (x[..., i] for i in range(6))
    vb1 = 12.0 * rb2 / (rb1 + rb2)
    bc = beta * (rc2 + 9.0)
    denom = bc + rf
    return ((vb1 + 0.74) * bc / denom
            + 11.35 * rf / denom
            + 0.74 * rf * bc / (denom * rc1))


def piston(x):
    """Cycle time of a piston in seconds."""
    x = np.asarray(x, dtype=np.float64)
    M, S, V0, k, P0, Ta, T0 = (x[..., i] for i in range(7))
    A = P0 * S + 19.62 * M - k * V0 / S
    V = S / (2.0 * k) * (np.sqrt(A * A + 4.0 * k * P0 * V0 * Ta / T0) - A)
    return 2.0 * np.pi * np.sqrt(M / (k + S * S * P0 * V0 * Ta / (T0 * V * V)))


FUNCTIONS = {
    "ishigami": (ishigami, C.ISHIGAMI_BOX),
    "otl_circuit": (otl_circuit, C.OTL_CIRCUIT_BOX),
    "piston": (piston, C.PISTON_BOX),
}
ALIASES = {"ish": "ishigami", "cir": "otl_circuit", "otl": "otl_circuit", "pst": "piston"}


def resolve(name):
    key = name.lower()
    key = ALIASES.get(key, key)
    if key not in FUNCTIONS:
        raise ValueError(f"unknown test function {name!r}; expected one of {sorted(FUNCTIONS)}")
    return key
