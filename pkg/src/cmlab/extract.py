"""
Decomposition of snapshots into soliton, profiles and radiation.

A snapshot v on the physical grid is read in the renormalized frame
w(y) = lam^(1/2) e^(-i gamma) v(lam y). The frame grid is the physical
grid with its box divided by lam, so w is known exactly at the frame
nodes and no interpolation enters. Scale and phase come from a Newton
solve on the two L2 orthogonality conditions against Z_1, Z_2; the
profile coefficients b_k, eta_k are then linear projections of the
nonlinear variables w_(2k-1).
"""

from dataclasses import dataclass, field
from functools import lru_cache
import warnings

import numpy as np

from .spectral_grid import (
    GridError, GridSpec, TailedField, _as_complex, derivative, inner_r, norm_adapted, norm_l2,
)
from .operators import SQRT2, a_q, b_q, d_tilde_v, soliton_q
from .profiles import ModParams, cutoff_at, cutoff_chi, p_profile, t_profile_tailed, zk_solve

DELTA_DEC = 0.3
NEWTON_TOL = 1e-12


class ExtractionError(RuntimeError):
    """Newton failure, a singular Jacobian or a field outside the soliton tube."""


# ---- the renormalized frame -------------------------------------------------


def frame_grid(grid, lam, domain="line"):
    """Grid whose nodes are the physical nodes divided by ``lam``."""
    if not (np.isfinite(lam) and lam > 0):
        raise GridError(f"lambda must be positive, got {lam}")
    return GridSpec(grid.n, grid.box_len / lam, domain)


def renormalize(grid, v, lam, gamma, domain="line"):
    """(frame grid, w) with w(y_j) = lam^(1/2) e^(-i gamma) v(x_j)."""
    v = _as_complex(grid, v)
    return frame_grid(grid, lam, domain), np.sqrt(lam) * np.exp(-1j * gamma) * v


def odd_variables(ygrid, w, L):
    """[w_1, w_3, ..., w_(2L-1)] with w_k = (D~_w)^k w."""
    out, cur = [], w
    for j in range(1, 2 * L):
        cur = d_tilde_v(ygrid, w, cur)
        if j % 2 == 1:
            out.append(cur)
    return out


# ---- L2 decomposition -------------------------------------------------------


@lru_cache(maxsize=8)
def default_zbasis(L=1):
    """Z_1..Z_4 for transversality order L, solved once on a fine grid."""
    return zk_solve(GridSpec(4096, 256.0, "torus"), max(int(L), 1))


def _conditions(ygrid, w, zb):
    q = soliton_q(ygrid)
    F = np.empty(2)
    J = np.empty((2, 2))
    for i, k in enumerate((1, 2)):
        z = zb.at(ygrid.x, k)
        lz = 0.5 * z + ygrid.x * derivative(ygrid, z)
        F[i] = inner_r(ygrid, w - q, z)
        # d/dlog(lam) w = Lambda w and Lambda is antisymmetric
        J[i, 0] = -inner_r(ygrid, w, lz)
        J[i, 1] = inner_r(ygrid, w, 1j * z)
    return F, J


def decompose_l2(grid, v, guess, zb=None, tol=NEWTON_TOL, max_iter=40,
                 delta_dec=DELTA_DEC, domain="line"):
    """Solve v = [Q + eps_hat]_(lam, gamma) with (eps_hat, Z_k)_r = 0, k = 1, 2.

    Newton runs on (log lam, gamma) from ``guess``. Returns
    (lam, gamma, eps_hat, frame grid).
    """
    v = _as_complex(grid, v)
    lam, gamma = float(guess[0]), float(guess[1])
    if not lam > 0:
        raise ExtractionError("guess lambda must be positive")
    zb = default_zbasis(1) if zb is None else zb
    lam0 = lam
    for _ in range(max_iter):
        ygrid, w = renormalize(grid, v, lam, gamma, domain)
        F, J = _conditions(ygrid, w, zb)
        if np.max(np.abs(F)) <= tol:
            break
        if abs(np.linalg.det(J)) < 1e-14 * max(np.abs(J).max(), 1.0) ** 2:
            raise ExtractionError("singular Jacobian in the decomposition")
        step = np.linalg.solve(J, -F)
        # damp steps that leave the guess neighbourhood
        step *= min(1.0, 0.5 / max(np.abs(step).max(), 1e-300))
        lam *= np.exp(step[0])
        gamma += step[1]
        if not (lam0 / 4 < lam < 4 * lam0) or not np.isfinite(gamma):
            raise ExtractionError("Newton left the soliton tube")
    else:
        raise ExtractionError(f"Newton did not converge, residual {np.abs(F).max():.2e}")
    ygrid, w = renormalize(grid, v, lam, gamma, domain)
    eps_hat = w - soliton_q(ygrid)
    size = norm_l2(ygrid, eps_hat)
    if size > delta_dec:
        raise ExtractionError(f"||eps_hat|| = {size:.3g} exceeds the tube size {delta_dec}")
    return lam, gamma, eps_hat, ygrid


def weighted_split(ygrid, eps_hat, zb):
    """eps_hat = T_1(b, eta) + eps with eps orthogonal to Z_1..Z_4.

    Returns (b, eta, eps) with eps a TailedField, since T_1 grows.
    """
    c3 = inner_r(ygrid, eps_hat, zb.at(ygrid.x, 3))
    c4 = inner_r(ygrid, eps_hat, zb.at(ygrid.x, 4))
    # T_1(b, eta) = -b K_3/4 - eta K_4/4
    b, eta = -4.0 * c3, -4.0 * c4
    eps = TailedField(ygrid, eps_hat, canonical=False) - t_profile_tailed(1, b, eta, ygrid)
    return b, eta, eps


# ---- linear projections ------------------------------------------------------


def _proj_den(ygrid, chi):
    yq = 0.5 * ygrid.x * soliton_q(ygrid)
    return inner_r(ygrid, yq, yq * chi)


def bk_from_odd(ygrid, w_odd, k):
    """(b_k, eta_k) from w_(2k-1), projected against yQ chi_1."""
    chi = cutoff_chi(1.0, ygrid)
    yq = ygrid.x * soliton_q(ygrid)
    den = _proj_den(ygrid, chi)
    b = inner_r(ygrid, w_odd, 0.5 * (-1j) ** k * yq * chi) / den
    eta = inner_r(ygrid, w_odd, -0.5 * (-1j) ** (k - 1) * yq * chi) / den
    return float(b), float(eta)


def bk_from_w(ygrid, w, k):
    """(b_k, eta_k) of a renormalized field ``w``."""
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    return bk_from_odd(ygrid, odd_variables(ygrid, w, int(k))[-1], int(k))


@lru_cache(maxsize=1)
def refined_area():
    """A = (-sqrt(2)/2, chi)_r, computed from the exact cutoff on a fine grid."""
    g = GridSpec(8192, 8.0)
    return -0.5 * SQRT2 * float(np.sum(cutoff_at(1.0, g.x)) * g.dx)


def refined_from_odd(ygrid, w_top, lam, L):
    """Refined (b~_L, eta~_L) from w_(2L-1).

    The projections pair B_Q w_(2L-1) with chi_R, R = lam^-(1-1/(4L)),
    and divide by A R. The phases -(-i)^L and (-i)^(L-1) make a pure
    profile P_(2L-1)(b, eta) come back as (b, eta) for every L.
    """
    R = lam ** -(1.0 - 1.0 / (4 * L))
    if R > ygrid.box_len / 8:
        warnings.warn(f"cutoff radius {R:.3g} exceeds box_len/8; refined values are truncated")
    chi = cutoff_at(R, ygrid.x)
    bw = b_q(ygrid, w_top)
    AR = refined_area() * R
    bt = inner_r(ygrid, bw, -((-1j) ** L) * chi) / AR
    et = inner_r(ygrid, bw, (-1j) ** (L - 1) * chi) / AR
    return float(bt), float(et)


def refined_bL(ygrid, w, lam, L):
    return refined_from_odd(ygrid, odd_variables(ygrid, w, L)[-1], lam, L)


# ---- full decomposition ------------------------------------------------------


@dataclass
class Decomposition:
    params: ModParams
    grid: GridSpec
    w: np.ndarray
    eps_hat: np.ndarray
    eps: TailedField
    eps_odd: list
    w_odd: list
    weighted: tuple = (0.0, 0.0)
    refined: tuple = (0.0, 0.0)
    conditions: dict = field(default_factory=dict)
    residual_norms: dict = field(default_factory=dict)


def decompose(grid, v, L, guess, zb=None, domain="line", delta_dec=DELTA_DEC):
    """Scale, phase, b_k, eta_k, refined and weighted parameters of ``v``."""
    zb = default_zbasis(L) if zb is None else zb
    lam, gamma, eps_hat, ygrid = decompose_l2(grid, v, guess, zb, domain=domain,
                                              delta_dec=delta_dec)
    w = eps_hat + soliton_q(ygrid)
    w_odd = odd_variables(ygrid, w, L)
    bs, es = np.zeros(L), np.zeros(L)
    eps_odd = []
    for k in range(1, L + 1):
        bs[k - 1], es[k - 1] = bk_from_odd(ygrid, w_odd[k - 1], k)
        eps_odd.append(w_odd[k - 1] - p_profile(k, bs[k - 1], es[k - 1], ygrid))
    params = ModParams(L, lam, gamma, bs, es)
    wb, we, eps = weighted_split(ygrid, eps_hat, zb)
    refined = refined_from_odd(ygrid, w_odd[-1], lam, L)
    yq = ygrid.x * soliton_q(ygrid)
    conds = {f"eps_hat_Z{k}": inner_r(ygrid, eps_hat, zb.at(ygrid.x, k)) for k in (1, 2)}
    for k, e in enumerate(eps_odd, start=1):
        conds[f"eps{2 * k - 1}_yQ"] = inner_r(ygrid, e, yq)
        conds[f"eps{2 * k - 1}_iyQ"] = inner_r(ygrid, e, 1j * yq)
    dec = Decomposition(params, ygrid, w, eps_hat, eps, eps_odd, w_odd, (wb, we), refined, conds)
    dec.residual_norms = radiation_norms(dec)
    return dec


def _adapted_tailed(f, k):
    # adapted norm of a TailedField; only the values of derivatives are sampled
    jb = np.sqrt(1.0 + f.grid.x**2)
    total = 0.0
    for j in range(k + 1):
        g = f.derivative(k - j) if j < k else f
        total += norm_l2(f.grid, g.values() / jb**j) ** 2
    return float(np.sqrt(total))


def radiation_norms(dec):
    """The coercivity-scale norms and their ratios to powers of lambda."""
    g, lam = dec.grid, dec.params.lam
    out = {"eps_hat_H1": norm_adapted(g, dec.eps_hat, 1), "eps_H2": _adapted_tailed(dec.eps, 2),
           "w1_L2": norm_l2(g, dec.w_odd[0]) if dec.w_odd else 0.0}
    out["eps_hat_H1_over_lam"] = out["eps_hat_H1"] / lam
    out["eps_H2_over_lam2"] = out["eps_H2"] / lam**2
    for k, e in enumerate(dec.eps_odd, start=1):
        n = norm_adapted(g, e, 1)
        out[f"eps{2 * k - 1}_H1"] = n
        out[f"eps{2 * k - 1}_H1_over_lam{2 * k}"] = n / lam ** (2 * k)
    return out


def aq_energies(ygrid, w, j_max):
    """||A_Q w_j|| for j = 1..j_max."""
    out, cur = [], w
    for _ in range(j_max):
        cur = d_tilde_v(ygrid, w, cur)
        out.append(norm_l2(ygrid, a_q(ygrid, cur)))
    return out


class Tracker:
    """Callable for evolve.run that decomposes each sample.

    The previous (lam, gamma) is the Newton guess for the next sample.
    Decompositions are kept in ``history``.
    """

    def __init__(self, grid, L, guess, domain="line", keep=True, delta_dec=DELTA_DEC):
        self.grid, self.L, self.domain = grid, int(L), domain
        self.delta_dec = delta_dec
        self.guess = (float(guess[0]), float(guess[1]))
        self.zb = default_zbasis(self.L)
        self.history = [] if keep else None

    def __call__(self, v, t):
        dec = decompose(self.grid, v, self.L, self.guess, self.zb, self.domain, self.delta_dec)
        self.guess = (dec.params.lam, dec.params.gamma)
        if self.history is not None:
            self.history.append((t, dec))
        return dec.params


# ---- modulation-equation residuals ----------------------------------------------


def _d_index(f):
    # fourth-order central difference in the sample index
    f = np.asarray(f, dtype=float)
    return (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / 12.0


def modulation_residuals(s, lam, gamma, b, eta):
    """Residuals of the modulation laws along a sampled trajectory.

    ``b`` and ``eta`` are arrays of shape (n, L). The s-derivatives use
    fourth-order central differences in the sample index divided by
    ds/di, so the output refers to the interior samples s[2:-2].
    """
    s, lam, gamma = (np.asarray(a, dtype=float) for a in (s, lam, gamma))
    b = np.atleast_2d(np.asarray(b, dtype=float).T).T
    eta = np.atleast_2d(np.asarray(eta, dtype=float).T).T
    n, L = b.shape
    if n < 5:
        raise ValueError("need at least 5 samples")
    if np.any(np.diff(s) <= 0):
        raise ValueError("s must be strictly increasing")
    loglam = np.log(lam)
    if np.max(np.abs(np.diff(loglam))) > 1.0 / 8.0:
        raise ValueError("sampling too coarse: fewer than 8 samples per e-fold of lambda")
    ds = _d_index(s)
    mid = slice(2, n - 2)
    lam_s = _d_index(loglam) / ds
    gam_s = _d_index(gamma) / ds
    b1, e1, lm = b[mid, 0], eta[mid, 0], lam[mid]
    out = {"s": s[mid], "lam": lm, "b1": b1,
           "lam_res": np.abs(lam_s + b1), "gamma_res": np.abs(gam_s - 0.5 * e1),
           "lam_bound": lm**2}
    with np.errstate(divide="ignore", invalid="ignore"):
        out["lam_ratio"] = out["lam_res"] / np.abs(b1)
    for k in range(1, L + 1):
        bk, ek = b[mid, k - 1], eta[mid, k - 1]
        bn = b[mid, k] if k < L else 0.0
        en = eta[mid, k] if k < L else 0.0
        bks = _d_index(b[:, k - 1]) / ds
        eks = _d_index(eta[:, k - 1]) / ds
        out[f"b{k}_res"] = np.abs(bks - bn + (2 * k - 0.5) * b1 * bk + 0.5 * e1 * ek)
        out[f"eta{k}_res"] = np.abs(eks - en + (2 * k - 0.5) * b1 * ek - 0.5 * e1 * bk)
        out[f"b{k}_bound"] = np.abs(b1) ** (k + 1) * lm ** (1.0 / (2 * L))
    return out


__all__ = [
    "ExtractionError", "DELTA_DEC", "default_zbasis", "frame_grid", "renormalize",
    "odd_variables", "decompose_l2",
    "weighted_split", "bk_from_odd", "bk_from_w", "refined_area", "refined_from_odd", "refined_bL",
    "Decomposition", "decompose", "radiation_norms", "aq_energies", "Tracker",
    "modulation_residuals",
]
