"""Symmetric Gauss quadrature rules on the reference triangle.

All rules have strictly positive weights (required so that Nystrom-type
discretizations of positive kernels stay positive semidefinite).  Weights
sum to 1; multiply by the triangle area to integrate.
"""

from __future__ import annotations

import numpy as np

__all__ = ["triangle_rule"]


def _orbit1() -> tuple[np.ndarray, np.ndarray]:
    return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])


def _orbit3(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


_RULES: dict[int, tuple[np.ndarray, np.ndarray]] = {}

# degree 1: centroid
_RULES[1] = _orbit1()

# degree 2: classic symmetric 3-point rule
_RULES[3] = (_orbit3(1 / 6), np.full(3, 1 / 3))

# degree 4 (Dunavant): two 3-point orbits, positive weights
_RULES[6] = (
    np.vstack([_orbit3(0.445948490915965), _orbit3(0.091576213509771)]),
    np.concatenate(
        [np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)]
    ),
)

# degree 5 (Dunavant): centroid plus two 3-point orbits
_RULES[7] = (
    np.vstack(
        [
            np.array([[1 / 3, 1 / 3, 1 / 3]]),
            _orbit3(0.470142064105115),
            _orbit3(0.101286507323456),
        ]
    ),
    np.concatenate(
        [
            np.array([0.225]),
            np.full(3, 0.132394152788506),
            np.full(3, 0.125939180544827),
        ]
    ),
)


def triangle_rule(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Return (barycentric coordinates, weights) for an n-point rule.

    Supported sizes: 1, 3, 6, 7 (polynomial degrees 1, 2, 4, 5).
    """
    try:
        bary, wts = _RULES[n_points]
    except KeyError:
        raise ValueError(
            f"no {n_points}-point triangle rule; choose from {sorted(_RULES)}"
        ) from None
    return bary.copy(), wts.copy()
