"""Optical strain: the symmetric gradient tensor of a flow field.

With u horizontal (x = columns) and v vertical (y = rows),

    e_xx = du/dx        e_yy = dv/dy        e_xy = (du/dy + dv/dx) / 2

and the scalar magnitude channel is sqrt(e_xx^2 + e_yy^2 + 2 e_xy^2).
Derivatives use central differences in the interior and one-sided
differences at borders, so linear fields are reproduced exactly away
from the border.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .hornschunck import FlowField


@dataclass(frozen=True)
class StrainMap:
    """Per-pixel strain tensor components and scalar magnitude."""

    exx: np.ndarray
    eyy: np.ndarray
    exy: np.ndarray
    magnitude: np.ndarray

    def __post_init__(self):
        arrays = {}
        shape = None
        for name in ("exx", "eyy", "exy", "magnitude"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if shape is None:
                shape = a.shape
            elif a.shape != shape:
                raise DataError(f"strain component {name} has shape {a.shape}, expected {shape}")
            a.flags.writeable = False
            arrays[name] = a
        for name, a in arrays.items():
            object.__setattr__(self, name, a)

    @property
    def shape(self) -> tuple[int, int]:
        return self.exx.shape


def compute_strain(flow: FlowField) -> StrainMap:
    """Symmetric flow gradient; non-finite input propagates into the output."""
    # np.gradient: axis 0 is y (rows), axis 1 is x (columns)
    dudy, dudx = np.gradient(flow.u)
    dvdy, dvdx = np.gradient(flow.v)
    exx = dudx
    eyy = dvdy
    exy = 0.5 * (dudy + dvdx)
    magnitude = np.sqrt(exx * exx + eyy * eyy + 2.0 * exy * exy)
    return StrainMap(exx=exx, eyy=eyy, exy=exy, magnitude=magnitude)
