"""Numerical tolerances shared across the package.

Roughly 100x double-precision epsilon, scaled by problem size where the
contract says so.
"""
import numpy as np

EPS = float(np.finfo(np.float64).eps)

#: ||U^T U - I||_F <= ORTHO_TOL * sqrt(r) for SVD factors
ORTHO_TOL = 1e-10
#: ||A - U S V^T||_F <= RECON_TOL * max(1, ||A||_F)
RECON_TOL = 1e-9
#: ||W^T W - I||_F <= UNITARY_TOL * n for generated / learned transforms
UNITARY_TOL = 1e-10
#: slack allowed on the objective sequence of the alternating scheme
MONOTONE_SLACK = 1e-12
#: errors at or below this are treated as round-off when estimating rates
RATE_FLOOR = 1e2 * EPS
#: default objective tolerance of the learner
OBJ_TOL = 1e-24
#: slack on error sequences that should not grow, covering round-off jitter at the floor
FLOOR_SLACK = 1e3 * EPS
