"""
Blow-up profiles, kernel elements, cutoffs, transversal functionals and
the initial-data builder.

Profiles are polynomials times Q. Besides sampled arrays every growing
profile is also available as a TailedField, which is what the ladder
operators need to act on it without truncation error.
"""

from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as npoly

from .spectral_grid import GridError, TailedField, _as_complex, inner_r, modulate, norm_hs, norm_l2
from .operators import SQRT2, soliton_q, scaling_gen

# Z_k live on |y| <= ZK_SUPPORT, built on the cutoff of radius ZK_SUPPORT/2
ZK_SUPPORT = 10.0
ZK_ATOMS = 12


def _jbr(y):
    return np.sqrt(1.0 + y * y)


@dataclass
class ModParams:
    """Scale, phase and the profile coefficients b_1..b_L, eta_1..eta_L."""

    L: int
    lam: float = 1.0
    gamma: float = 0.0
    b: np.ndarray = None
    eta: np.ndarray = None

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L}")
        self.L = int(self.L)
        self.b = np.zeros(self.L) if self.b is None else np.asarray(self.b, dtype=float)
        self.eta = np.zeros(self.L) if self.eta is None else np.asarray(self.eta, dtype=float)
        if self.b.shape != (self.L,) or self.eta.shape != (self.L,):
            raise ValueError("b and eta must have length L")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        vals = np.concatenate([self.b, self.eta, [self.gamma]])
        if not np.all(np.isfinite(vals)):
            raise ValueError("modulation parameters must be finite")

    def as_dict(self):
        return {"L": self.L, "lambda": float(self.lam), "gamma": float(self.gamma),
                "b": [float(c) for c in self.b], "eta": [float(c) for c in self.eta]}


@dataclass
class InitConfig:
    params: ModParams
    delta_ring: float = 0.1
    eps0: np.ndarray = None
    s0: float = 1.0
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.delta_ring > 0:
            raise ValueError("delta_ring must be positive")
        if self.delta_ring / self.params.lam < 4.0:
            raise ValueError("delta_ring/lambda0 must be at least 4 so the cutoff sits in the box")


def init_from_mapping(data, base_dir="."):
    """InitConfig from config keys L, lambda0, gamma0, b, eta, delta_ring, s0, eps0_path."""
    data = dict(data)
    known = {"L", "lambda0", "gamma0", "b", "eta", "delta_ring", "s0", "eps0_path"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown init keys: {sorted(unknown)}")
    L = int(data.get("L", 1))
    b = data.get("b", [0.0] * L)
    eta = data.get("eta", [0.0] * L)
    params = ModParams(L, float(data.get("lambda0", 1.0)), float(data.get("gamma0", 0.0)), b, eta)
    eps0 = None
    if data.get("eps0_path"):
        path = Path(base_dir) / data["eps0_path"]
        eps0 = np.load(path) if path.suffix == ".npy" else np.fromfile(path, dtype=np.complex128)
        if not np.all(np.isfinite(eps0)):
            raise ValueError("eps0 contains non-finite values")
    return InitConfig(params, float(data.get("delta_ring", 0.1)), eps0, float(data.get("s0", 1.0)))


# ---- polynomial profiles ---------------------------------------------------


def p_poly_coeffs(k):
    """Coefficients of p_k(y) = (1 + (-1)^k)/2 + y^2."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return np.array([1.0 if k % 2 == 0 else 0.0, 0.0, 1.0])


def p_poly(k, grid):
    return npoly.polyval(grid.x, p_poly_coeffs(k))


def t_coeffs(k, b_k, eta_k):
    """Polynomial c(y) with T_{2k-1} = c(y) Q(y).

    The phase in front is (-i)^(k-1), which makes the ladder operator of
    order 2k-1 map T_{2k-1} onto B_Q P_{2k-1} for every k.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    lead = -((-1j) ** (k - 1)) / (4 * k * factorial(2 * k - 2))
    shift = np.zeros(2 * k - 1)
    shift[-1] = 1.0
    poly = npoly.polyadd(1j * b_k * npoly.polymul(shift, p_poly_coeffs(k)),
                         eta_k * npoly.polymul(shift, p_poly_coeffs(k - 1)))
    return lead * poly


def t_profile_at(k, b_k, eta_k, y):
    y = np.asarray(y, dtype=float)
    return npoly.polyval(y, t_coeffs(k, b_k, eta_k)) * SQRT2 / _jbr(y)


def t_profile(k, b_k, eta_k, grid):
    """T_{2k-1}(b_k, eta_k) sampled on the grid."""
    return t_profile_at(k, b_k, eta_k, grid.x)


def t_profile_tailed(k, b_k, eta_k, grid):
    return TailedField(grid, q=SQRT2 * t_coeffs(k, b_k, eta_k))


def p_profile(k, b_k, eta_k, grid):
    """P_{2k-1} = -(i b + eta)(-i)^(k-1) (y/2) Q, an odd field."""
    if k < 1:
        raise ValueError("k must be at least 1")
    y = grid.x
    return -(1j * b_k + eta_k) * (-1j) ** (k - 1) * 0.5 * y * soliton_q(grid)


def kernel_elements_tailed(grid):
    """K1..K4 and the two odd elements as TailedFields."""
    q = soliton_q(grid)
    return {
        "K1": TailedField(grid, scaling_gen(grid, q)),
        "K2": TailedField(grid, 1j * q),
        "K3": TailedField(grid, q=[0.0, 0.0, 1j * SQRT2]),
        "K4": TailedField(grid, q=[SQRT2, 0.0, SQRT2]),
        "K1o": TailedField(grid, q=[0.0, 1j * SQRT2]),
        "K2o": TailedField(grid, q=[0.0, SQRT2]),
    }


def kernel_elements(grid):
    """Lambda Q, iQ, iy^2 Q, (1+y^2) Q, iyQ and yQ as arrays."""
    y = grid.x
    q = soliton_q(grid)
    return {"K1": scaling_gen(grid, q), "K2": 1j * q, "K3": 1j * y**2 * q,
            "K4": (1 + y**2) * q, "K1o": 1j * y * q, "K2o": y * q + 0j}


# ---- cutoffs ---------------------------------------------------------------


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff_at(R, y):
    """Smooth even cutoff equal to 1 on |y| <= R and 0 on |y| >= 2R."""
    if not R > 0:
        raise ValueError("cutoff radius must be positive")
    a = np.abs(np.asarray(y, dtype=float)) / R
    up, down = _psi(2.0 - a), _psi(a - 1.0)
    return up / (up + down)


def cutoff_chi(R, grid):
    if not R > 0:
        raise GridError("cutoff radius must be positive")
    if 2 * R >= 0.5 * grid.box_len:
        raise GridError(f"cutoff support 2R = {2 * R} exceeds the half box")
    return cutoff_at(R, grid.x)


# ---- transversal functionals -------------------------------------------------


def _zk_atoms(y):
    y = np.asarray(y, dtype=float)
    chi = cutoff_at(0.5 * ZK_SUPPORT, y)
    # Chebyshev polynomials on the support span the same space as the
    # even monomials y^(2a) but keep the coefficients of order one
    t = np.clip(y / ZK_SUPPORT, -1.0, 1.0)
    return np.array([chi * np.cos(2 * a * np.arccos(t)) for a in range(ZK_ATOMS)])


@dataclass
class ZBasis:
    """Z_1..Z_4 stored as complex even polynomials times chi_5.

    Row k-1 of ``coef`` holds the coefficients of chi_5 T_2a(y/10),
    a = 0..11, with T_n the Chebyshev polynomials. The fields can then be
    evaluated at any points, which the decomposition needs when it
    rescales the frame.
    """

    L: int
    coef: np.ndarray

    def at(self, y, k):
        return self.coef[k - 1] @ _zk_atoms(y)

    def on(self, grid):
        atoms = _zk_atoms(grid.x)
        return {f"Z{k + 1}": self.coef[k] @ atoms for k in range(4)}


def zk_conditions(grid, L):
    """K_1..K_4, then i y^(2m+2) Q and y^(2m)(1+y^2) Q for m = 1..L-1."""
    y = grid.x
    q = soliton_q(grid)
    cond = list(kernel_elements(grid)[key] for key in ("K1", "K2", "K3", "K4"))
    for m in range(1, L):
        cond.append(1j * y ** (2 * m + 2) * q)
        cond.append(y ** (2 * m) * (1 + y**2) * q)
    return cond


def zk_solve(grid, L=3):
    """ZBasis dual to K_1..K_4 and transversal to the higher moments.

    Each Z_k is a combination of the atoms chi_5 T_2a(y/10) and
    i chi_5 T_2a(y/10), a = 0..11 (the span of chi_5 y^(2a)), chosen as
    the least-norm solution of
    (K_j, Z_k) = delta_jk together with
    (i y^(2m+2) Q, Z_k) = (y^(2m)(1+y^2) Q, Z_k) = 0 for m = 1..L-1.
    """
    cutoff_chi(0.5 * ZK_SUPPORT, grid)
    atoms = _zk_atoms(grid.x)
    # the conditions only see the profiles on |y| <= ZK_SUPPORT
    cond = zk_conditions(grid, L)
    # orthonormal combinations of the real atoms keep the solve well
    # conditioned; the dictionary is those and their i-multiples
    basis, tri = np.linalg.qr(atoms.T * np.sqrt(grid.dx))
    basis = basis.T / np.sqrt(grid.dx)
    basis = np.concatenate([basis, 1j * basis])
    A = np.array([[inner_r(grid, c, a) for a in basis] for c in cond])
    rhs = np.zeros((len(cond), 4))
    rhs[:4, :4] = np.eye(4)
    rows = np.linalg.norm(A, axis=1)
    As = A / rows[:, None]
    if np.linalg.matrix_rank(As) < len(cond):
        raise np.linalg.LinAlgError("dictionary too small for the Z conditions")
    # basis = inv(tri)^T atoms, so the atom coefficients are inv(tri) c;
    # refine against the atoms themselves, which is what gets evaluated
    Aat = np.array([[inner_r(grid, c, a) for a in atoms] for c in cond])
    Aat = np.concatenate([Aat, [[inner_r(grid, c, 1j * a) for a in atoms] for c in cond]], axis=1)
    cplx = np.zeros((ZK_ATOMS, 4), complex)
    for _ in range(3):
        res = rhs - Aat @ np.concatenate([cplx.real, cplx.imag])
        d = np.linalg.lstsq(As, res / rows[:, None], rcond=None)[0]
        cplx = cplx + np.linalg.solve(tri, d[:ZK_ATOMS] + 1j * d[ZK_ATOMS:])
    return ZBasis(int(L), np.ascontiguousarray(cplx.T))


def zk_basis(grid, L=3):
    """Fields Z_1..Z_4 sampled on the grid; see zk_solve."""
    return zk_solve(grid, L).on(grid)


# ---- initial data ----------------------------------------------------------


def renormalized_initial(cfg, y):
    """Q + sum_j T_{2j-1} chi evaluated at renormalized points ``y``."""
    p = cfg.params
    R = cfg.delta_ring / p.lam
    y = np.asarray(y, dtype=float)
    out = SQRT2 / _jbr(y) + 0j
    chi = cutoff_at(R, y)
    for j in range(1, p.L + 1):
        if p.b[j - 1] != 0 or p.eta[j - 1] != 0:
            out = out + t_profile_at(j, p.b[j - 1], p.eta[j - 1], y) * chi
    return out


def initial_data(cfg, grid):
    """[Q + sum_j T_{2j-1} chi_R + eps0]_{lambda0, gamma0} with R = delta/lambda0.

    Closed-form parts are evaluated directly at x/lambda0; eps0 is given on
    the renormalized grid and resampled by trigonometric interpolation.
    """
    p = cfg.params
    if 2 * cfg.delta_ring >= 0.5 * grid.box_len:
        raise GridError("cutoff support exceeds the half box")
    inner = renormalized_initial(cfg, grid.x / p.lam)
    v0 = np.exp(1j * p.gamma) * p.lam ** -0.5 * inner
    if cfg.eps0 is not None:
        eps0 = _as_complex(grid, cfg.eps0)
        v0 = v0 + modulate(grid, eps0, p.lam, p.gamma)
    return v0


def init_diagnostics(cfg, grid, v0=None):
    """Report the smallness relations of the blow-up regime for the initial data."""
    p = cfg.params
    v0 = initial_data(cfg, grid) if v0 is None else v0
    L = p.L
    ratio = abs(p.b[0]) ** L / p.lam ** (2 * L - 0.5) if p.b[0] != 0 else 0.0
    out = {
        "mass_minus_2pi": norm_l2(grid, v0) ** 2 - 2 * np.pi,
        "b1L_over_lambda_ratio": float(ratio),
        "ratio_in_regime": bool(1 / 1.1 <= ratio <= 1.1),
    }
    if cfg.eps0 is not None:
        size = norm_hs(grid, cfg.eps0, min(2 * L, 8))
        out["eps0_norm"] = size
        out["eps0_small"] = bool(size <= p.lam ** (10 * L))
    return out


__all__ = [
    "ModParams", "InitConfig", "init_from_mapping", "p_poly", "p_poly_coeffs", "t_coeffs",
    "t_profile", "t_profile_at", "t_profile_tailed", "p_profile", "kernel_elements",
    "kernel_elements_tailed", "cutoff_at", "cutoff_chi", "ZBasis", "zk_conditions", "zk_solve",
    "zk_basis", "renormalized_initial",
    "initial_data", "init_diagnostics",
]
