"""Loss families for local constant regression.

Three families are supported: quantile (check loss), expectile (asymmetric
squared loss), and mean (squared loss).  ``psi`` is the moment function
whose weighted sample average the estimator drives to zero; for quantile it
is the subgradient of the check loss, for the other two the negative
derivative of the loss in its argument.
"""

from dataclasses import dataclass

import numpy as np

FAMILIES = ("quantile", "expectile", "mean")


@dataclass(frozen=True)
class TaskSpec:
    """What is being estimated: the loss family and its level.

    The mean family has no level; tau is pinned to 0.5 so downstream
    formulas that read it stay well defined.
    """

    family: str
    tau: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError("family must be one of %s, got %r" % (FAMILIES, self.family))
        if self.family == "mean":
            object.__setattr__(self, "tau", 0.5)
        tau = float(self.tau)
        if not 0.0 < tau < 1.0:
            raise ValueError("tau must lie strictly between 0 and 1, got %r" % tau)
        object.__setattr__(self, "tau", tau)


def rho(spec: TaskSpec, u) -> np.ndarray:
    """Loss evaluated at residual u."""
    u = np.asarray(u, dtype=float)
    if spec.family == "mean":
        return u * u
    weight = np.abs((u < 0.0) - spec.tau)
    if spec.family == "quantile":
        return weight * np.abs(u)
    return weight * u * u


def psi(spec: TaskSpec, u) -> np.ndarray:
    """Moment function evaluated at residual u.

    quantile:  1{u < 0} - tau
    expectile: 2 (1{u <= 0} - tau) |u|
    mean:      2 u
    """
    u = np.asarray(u, dtype=float)
    if spec.family == "quantile":
        return (u < 0.0) - spec.tau
    if spec.family == "expectile":
        return 2.0 * ((u <= 0.0) - spec.tau) * np.abs(u)
    return 2.0 * u


def sigma_sq_theoretical(spec: TaskSpec):
    """Model-free second moment of psi under a correctly centered fit.

    Only the quantile family admits one: E[psi^2] = tau (1 - tau) whenever
    the residual distribution places mass tau below zero.  Returns None for
    the other families, whose second moment depends on the error scale.
    """
    if spec.family == "quantile":
        return spec.tau * (1.0 - spec.tau)
    return None
