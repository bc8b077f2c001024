"""Centering transform between the original box and a symmetric lattice.

Each variable is shifted so its box midpoint moves to the origin. When the
midpoint is itself an integer the variable keeps unit scale and ranges over
all integers in [-m, m]; otherwise the variable is doubled so it ranges over
the odd integers in [-m, m] (m odd). Either way the centered domain is sign
symmetric, which is what the binary reformulation downstream exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance


class RoundingError(ValueError):
    """A point claimed to be on the centered lattice is too far from it."""


@dataclass(eq=False)
class CenteredProblem:
    """Centered data: x = scale * xt + center maps lattice points back to the box."""

    n: int
    unit_mask: np.ndarray  # True -> xt integer in [-m, m]; False -> xt odd in [-m, m]
    radius: np.ndarray  # m, per variable (int64)
    scale: np.ndarray  # 1 for unit-step variables, 1/2 for doubled ones
    center: np.ndarray  # box midpoint (u + l) / 2
    Qc: np.ndarray  # quadratic term in centered coordinates
    cc: np.ndarray  # linear term in centered coordinates
    offset: float  # constant term picked up by the shift

    def lattice_objective(self, xt: np.ndarray) -> float:
        """Objective value at a centered point (matches the original objective)."""
        xt = np.asarray(xt, dtype=float)
        return float(xt @ self.Qc @ xt + self.cc @ xt + self.offset)


def center(inst: Instance) -> CenteredProblem:
    """Build the centered problem for an instance.

    The returned quadratic data satisfies, for every x in the box and its
    centered image xt,  xt'Qc xt + cc'xt + offset == x'Qx + c'x.
    """
    span = inst.u - inst.l
    unit_mask = span % 2 == 0  # midpoint integral exactly when the span is even
    radius = np.where(unit_mask, span // 2, span).astype(np.int64)
    scale = np.where(unit_mask, 1.0, 0.5)
    mid = (inst.u + inst.l) / 2.0
    Qc = inst.Q * np.outer(scale, scale)
    cc = scale * (2.0 * inst.Q @ mid + inst.c)
    offset = float(mid @ inst.Q @ mid + inst.c @ mid)
    return CenteredProblem(n=inst.n, unit_mask=unit_mask, radius=radius,
                           scale=scale, center=mid, Qc=Qc, cc=cc, offset=offset)


def to_centered(cp: CenteredProblem, x: np.ndarray) -> np.ndarray:
    """Map original coordinates onto the centered lattice."""
    return (np.asarray(x, dtype=float) - cp.center) / cp.scale


def restore(cp: CenteredProblem, xt: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Map a centered lattice point back to an integer point of the box.

    Raises RoundingError if any coordinate is off its lattice by more than
    tol, which signals an unconverged solve upstream.
    """
    xt = np.asarray(xt, dtype=float)
    snapped = snap_to_lattice(cp, xt)
    dev = np.abs(xt - snapped)
    if np.any(dev > tol):
        i = int(np.argmax(dev))
        raise RoundingError(
            f"coordinate {i} is {dev[i]:.3e} from the centered lattice (tol {tol:.1e})")
    x = cp.scale * snapped + cp.center
    return np.rint(x).astype(np.int64)


def snap_to_lattice(cp: CenteredProblem, xt: np.ndarray) -> np.ndarray:
    """Nearest centered-lattice point (integers or odd integers in [-m, m])."""
    xt = np.asarray(xt, dtype=float)
    m = cp.radius.astype(float)
    unit = np.clip(np.rint(xt), -m, m)
    # odd lattice: snap (xt-1)/2 to an integer k, point is 2k+1; m is odd so
    # clipping to [-m, m] lands on the lattice
    odd = np.clip(2.0 * np.rint((xt - 1.0) / 2.0) + 1.0, -m, m)
    return np.where(cp.unit_mask, unit, odd)
