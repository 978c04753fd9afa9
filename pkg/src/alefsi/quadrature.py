"""Numerical quadrature on the reference triangle and on segments.

Triangle rules are conical-product Gauss rules: Gauss-Jacobi (weight 1-x) in
one direction times Gauss-Legendre in the other, collapsed onto the triangle
{x >= 0, y >= 0, x + y <= 1}.  An n x n product is exact for total degree
2n - 1, and the n = 1 rule is the single centroid point with weight 1/2.
"""

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigurationError


class QuadratureRule:
    """Points and weights of one rule.

    Triangle rules store barycentric coordinates, shape (npts, 3), with
    weights summing to the reference-triangle area 1/2.  Segment rules store
    points on [0, 1] with weights summing to 1.
    """

    def __init__(self, points, weights, degree):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)

    @property
    def npts(self):
        return len(self.weights)

    def __len__(self):
        return len(self.weights)


def conical_product_rule(degree):
    """Triangle rule of arbitrary degree (no cap); used by quad_rule_triangle
    and directly by high-degree validation code."""
    n = (int(degree) + 2) // 2  # 2n - 1 >= degree
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    # map [-1, 1] -> [0, 1]; Jacobi weight (1 - x) picks up a factor 1/4
    u = 0.5 * (xj + 1.0)
    wu = wj / 4.0
    t = 0.5 * (xl + 1.0)
    wt = wl / 2.0
    x = np.repeat(u, n)
    y = np.tile(t, n) * (1.0 - x)
    w = np.outer(wu, wt).ravel()
    lam = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(lam, w, degree)


def quad_rule_triangle(degree):
    """Quadrature rule on the reference triangle, exact for polynomials of
    the given total degree.

    Parameters
    ----------
    degree : int
        Requested polynomial exactness, 1 <= degree <= 8.
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= 8:
        raise ConfigurationError(f"unsupported triangle quadrature degree: {degree!r}")
    return conical_product_rule(degree)


def quad_rule_segment(degree):
    """Gauss-Legendre rule on [0, 1], exact for the given degree."""
    if not isinstance(degree, (int, np.integer)) or degree < 1:
        raise ConfigurationError(f"unsupported segment quadrature degree: {degree!r}")
    n = (int(degree) + 2) // 2
    x, w = roots_legendre(n)
    return QuadratureRule(0.5 * (x + 1.0), w / 2.0, degree)
