"""Conserved quantities of the gauged and chiral equations, and drift helpers."""

from dataclasses import dataclass, field

import numpy as np

from .spectral_grid import _as_complex, derivative, inner_r, norm_l2, pi_plus
from .operators import L_MAX, d_tilde_v, d_v

DRIFT_FLOOR = 1e-14


def mass(grid, v):
    return norm_l2(grid, v) ** 2


def momentum(grid, v):
    """Integral of Im(conj(v) v')."""
    v = _as_complex(grid, v)
    return float(np.sum(np.imag(np.conj(v) * derivative(grid, v))) * grid.dx)


def energy_gauge(grid, v):
    """(1/2)||v' + (1/2) H(|v|^2) v||^2."""
    return 0.5 * norm_l2(grid, d_v(grid, v, v)) ** 2


def energy_chiral(grid, u):
    """(1/2)||u' - i Pi_+(|u|^2) u||^2."""
    u = _as_complex(grid, u)
    return 0.5 * norm_l2(grid, derivative(grid, u) - 1j * pi_plus(grid, np.abs(u) ** 2) * u) ** 2


def momentum_chiral(grid, u):
    """Re of the integral of conj(u) D u - |u|^4/2 with D = -i d/dx."""
    u = _as_complex(grid, u)
    dens = np.conj(u) * (-1j * derivative(grid, u)) - 0.5 * np.abs(u) ** 4
    return float(np.real(np.sum(dens)) * grid.dx)


def hierarchy(grid, v, j_max, l_max=L_MAX):
    """I_j = (D~_v^j v, v) for j = 0..j_max.

    Even entries satisfy (-1)^k I_2k = ||D~_v^k v||^2 >= 0.
    """
    if int(j_max) != j_max or not 0 <= j_max <= 2 * l_max:
        raise ValueError(f"j_max must be in 0..{2 * l_max}, got {j_max}")
    v = _as_complex(grid, v)
    out = []
    w = v
    for j in range(int(j_max) + 1):
        if j:
            w = d_tilde_v(grid, v, w)
        out.append(inner_r(grid, w, v))
    return out


def chirality_deficit(grid, u):
    u = _as_complex(grid, u)
    return norm_l2(grid, u - pi_plus(grid, u))


@dataclass
class ConservedReport:
    t: float
    mass: float
    energy_gauge: float
    momentum: float
    hierarchy: list = field(default_factory=list)
    chirality_deficit: float = 0.0

    def row(self):
        out = {"t": self.t, "mass": self.mass, "energy": self.energy_gauge,
               "momentum": self.momentum, "chirality_deficit": self.chirality_deficit}
        for j, val in enumerate(self.hierarchy):
            out[f"I{j}"] = val
        return out


def conserved_report(grid, v, t=0.0, j_max=4, chiral=None):
    """Snapshot of the invariants; ``chiral`` optionally gives the ungauged field."""
    hier = hierarchy(grid, v, j_max)
    deficit = chirality_deficit(grid, chiral) if chiral is not None else 0.0
    return ConservedReport(float(t), mass(grid, v), energy_gauge(grid, v),
                           momentum(grid, v), hier, deficit)


def relative_drift(value, ref, scale=None, floor=DRIFT_FLOOR):
    """|value - ref| / max(scale, floor), with scale defaulting to |ref|."""
    scale = abs(ref) if scale is None else scale
    return abs(value - ref) / max(scale, floor)


def momentum_scale(grid, v):
    """Natural size of the momentum, used when P itself vanishes."""
    v = _as_complex(grid, v)
    return norm_l2(grid, v) * norm_l2(grid, derivative(grid, v))


def drift_table(reports, grid=None, v0=None):
    """Maximum relative drift of each invariant along a list of reports.

    Hierarchy entries use max(|I_j(0)|, 1) as the scale; momentum uses
    max(|P(0)|, ||v0|| ||v0'||) when the initial field is supplied.
    """
    first = reports[0]
    pscale = abs(first.momentum)
    if grid is not None and v0 is not None:
        pscale = max(pscale, momentum_scale(grid, v0))
    out = {"mass": 0.0, "energy": 0.0, "momentum": 0.0}
    for j in range(len(first.hierarchy)):
        out[f"I{j}"] = 0.0
    for rep in reports[1:]:
        out["mass"] = max(out["mass"], relative_drift(rep.mass, first.mass))
        out["energy"] = max(out["energy"], relative_drift(rep.energy_gauge, first.energy_gauge))
        out["momentum"] = max(out["momentum"], relative_drift(rep.momentum, first.momentum, pscale))
        for j, (a, b) in enumerate(zip(rep.hierarchy, first.hierarchy)):
            out[f"I{j}"] = max(out[f"I{j}"], relative_drift(a, b, max(abs(b), 1.0)))
    return out


__all__ = [
    "mass", "momentum", "energy_gauge", "energy_chiral", "momentum_chiral", "hierarchy",
    "chirality_deficit", "ConservedReport", "conserved_report", "relative_drift",
    "momentum_scale", "drift_table", "DRIFT_FLOOR",
]
