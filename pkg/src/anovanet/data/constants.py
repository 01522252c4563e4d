"""Raw input boxes and constants of the bundled test functions.

Boxes follow the usual benchmark definitions (uniform marginals):

* Ishigami: ``x_i ~ U(-pi, pi)``, ``a = 7``, ``b = 0.1``.
* OTL circuit: Rb1, Rb2, Rf, Rc1, Rc2, beta.
* Piston: M, S, V0, k, P0, Ta, T0.
"""

from math import pi

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1
ISHIGAMI_BOX = ((-pi, pi), (-pi, pi), (-pi, pi))

OTL_CIRCUIT_NAMES = ("Rb1", "Rb2", "Rf", "Rc1", "Rc2", "beta")
OTL_CIRCUIT_BOX = (
    (50.0, 150.0),
    (25.0, 70.0),
    (0.5, 3.0),
    (1.2, 2.5),
    (0.25, 1.2),
    (50.0, 300.0),
)

PISTON_NAMES = ("M", "S", "V0", "k", "P0", "Ta", "T0")
PISTON_BOX = (
    (30.0, 60.0),
    (0.005, 0.020),
    (0.002, 0.010),
    (1000.0, 5000.0),
    (90000.0, 110000.0),
    (290.0, 296.0),
    (340.0, 360.0),
)

# feature counts of the supported CSV layouts (target is the last column)
CSV_SCHEMAS = {"asn": 5, "ccp": 4, "ccs": 8}

DEFAULT_SAMPLES = 10000
SPLIT_FRACTIONS = (0.6, 0.2, 0.2)
