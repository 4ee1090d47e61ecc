"""Named one-body external potentials on a grid."""

from __future__ import annotations

import numpy as np

from .grid import Field, Grid, self_interaction_value

FORMS = ("soft_coulomb", "coulomb", "harmonic", "zero")


def external_potential(grid: Grid, form: str, charge: float = 1.0, softening: float = 1.0,
                       omega: float = 1.0, center=None) -> Field:
    """Build ``v_ext^(1)``.

    Args:
        form: ``soft_coulomb`` (``-Z/sqrt(|r-c|^2 + a^2)``), ``coulomb``
            (``-Z/|r-c|``, cell-averaged on the nucleus node), ``harmonic``
            (``omega^2 |r-c|^2 / 2``) or ``zero``.
        center: position ``c``; defaults to the origin.
    """
    c = np.zeros(grid.dim) if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    if c.size != grid.dim:
        raise ValueError(f"center needs {grid.dim} components")
    r2 = sum((x - cx) ** 2 for x, cx in zip(grid.coords, c))
    if form == "soft_coulomb":
        vals = -charge / np.sqrt(r2 + softening**2)
    elif form == "coulomb":
        with np.errstate(divide="ignore"):
            vals = -charge / np.sqrt(r2)
        vals[~np.isfinite(vals)] = -charge * self_interaction_value(grid)
    elif form == "harmonic":
        vals = 0.5 * omega**2 * r2
    elif form == "zero":
        vals = np.zeros(grid.shape)
    else:
        raise ValueError(f"unknown potential form {form!r}; expected one of {FORMS}")
    return Field(grid, vals, "potential")
