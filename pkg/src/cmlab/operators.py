"""
Operator calculus around the soliton Q = sqrt(2)/<x>.

Every operator takes the grid first and acts on sampled fields. The
compositions are written out factor by factor, exactly as they are
defined, so the identity checks built on top of them test the algebra
and not a simplified shortcut. Use a ``line`` grid when the fields have
the slowly decaying tails of Q; ``torus`` grids are for periodic work.
"""

from dataclasses import dataclass, field

import numpy as np

from .spectral_grid import (
    GridError, TailedField, _as_complex, abs_d, derivative, hilbert, inner_r,
    norm_adapted, norm_l2,
)

L_MAX = 6
SQRT2 = np.sqrt(2.0)


def _jbr(x):
    return np.sqrt(1.0 + x * x)


def _pair(grid, v, f):
    return _as_complex(grid, v), _as_complex(grid, f)


# ---- solitons ------------------------------------------------------------


def soliton_q(grid):
    """Q(x) = sqrt(2)/sqrt(1 + x^2), real, even and positive."""
    return SQRT2 / _jbr(grid.x)


def soliton_chiral(grid):
    """R(x) = sqrt(2)/(x + i), the chiral soliton with |R| = Q."""
    return SQRT2 / (grid.x + 1j)


# ---- covariant derivatives -------------------------------------------------


def d_v(grid, v, f):
    """D_v f = f' + (1/2) H(|v|^2) f."""
    v, f = _pair(grid, v, f)
    return derivative(grid, f) + 0.5 * hilbert(grid, np.abs(v) ** 2) * f


def d_tilde_v(grid, v, f):
    """Lax derivative f' + (1/2) v H(conj(v) f)."""
    v, f = _pair(grid, v, f)
    return derivative(grid, f) + 0.5 * v * hilbert(grid, np.conj(v) * f)


def d_tilde_pow(grid, v, f, j, l_max=L_MAX):
    """Apply the Lax derivative ``j`` times, 0 <= j <= 2*l_max."""
    if int(j) != j or not 0 <= j <= 2 * l_max:
        raise GridError(f"power must be in 0..{2 * l_max}, got {j}")
    out = _as_complex(grid, f)
    for _ in range(int(j)):
        out = d_tilde_v(grid, v, out)
    return out


# ---- linearized operators ------------------------------------------------


def l_v(grid, v, f):
    """L_v f = f' + (1/2) H(|v|^2) f + v H(Re(conj(v) f))."""
    v, f = _pair(grid, v, f)
    return (derivative(grid, f) + 0.5 * hilbert(grid, np.abs(v) ** 2) * f
            + v * hilbert(grid, np.real(np.conj(v) * f)))


def l_v_star(grid, v, f):
    """Adjoint of L_v for the real inner product."""
    v, f = _pair(grid, v, f)
    return (-derivative(grid, f) + 0.5 * hilbert(grid, np.abs(v) ** 2) * f
            - v * hilbert(grid, np.real(np.conj(v) * f)))


def l_q(grid, f):
    return l_v(grid, soliton_q(grid), f)


def l_q_star(grid, f):
    return l_v_star(grid, soliton_q(grid), f)


def n_v(grid, v, eps):
    """Nonlinear part eps H(Re(conj(v) eps)) + (1/2)(v + eps) H(|eps|^2)."""
    v, eps = _pair(grid, v, eps)
    return (eps * hilbert(grid, np.real(np.conj(v) * eps))
            + 0.5 * (v + eps) * hilbert(grid, np.abs(eps) ** 2))


def h_v(grid, v, f):
    """H_v f = -f'' + (1/4)|v|^4 f - v |D|(conj(v) f)."""
    v, f = _pair(grid, v, f)
    return (-derivative(grid, f, 2) + 0.25 * np.abs(v) ** 4 * f
            - v * abs_d(grid, np.conj(v) * f))


# ---- conjugated operators --------------------------------------------------


def b_q(grid, f):
    """B_Q f = (x - H)(f/<x>)."""
    g = _as_complex(grid, f) / _jbr(grid.x)
    return grid.x * g - hilbert(grid, g)


def b_q_star(grid, f):
    """B_Q* f = (x f + H f)/<x>."""
    f = _as_complex(grid, f)
    return (grid.x * f + hilbert(grid, f)) / _jbr(grid.x)


def a_q(grid, f):
    """A_Q = d/dx B_Q."""
    return derivative(grid, b_q(grid, f))


def a_q_star(grid, f):
    """A_Q* = -B_Q* d/dx."""
    return -b_q_star(grid, derivative(grid, f))


def scaling_gen(grid, f, s=0.0):
    """Lambda_s f = (1/2 - s) f + x f'."""
    f = _as_complex(grid, f)
    return (0.5 - s) * f + grid.x * derivative(grid, f)


# ---- the operators behind the profile ladder -------------------------------


def _dn(f, order):
    return f.derivative(order) if order > 0 else f


def cal_l_tailed(grid, j, f, l_max=L_MAX):
    """The j-th ladder operator on a TailedField, returned as a TailedField.

    The real part a = Re f goes through d^(j-1)[g + (y g)'] - H d^j g with
    g = a/<y>. The imaginary part b goes through
    d^(j-1)[y r] - H d^(j-1) r with r = <y>^-2 (<y> b)'.
    """
    if int(j) != j or not 1 <= j <= 2 * l_max:
        raise GridError(f"ladder index must be in 1..{2 * l_max}, got {j}")
    f = TailedField.wrap(grid, f)
    g = f.real().mul_jbr(-1)
    loc1 = _dn(g + g.mul_x().derivative(), j - 1)
    non1 = _dn(g, j).hilbert()
    r = f.imag().mul_jbr(1).derivative().mul_jbr(-2)
    loc2 = _dn(r.mul_x(), j - 1)
    non2 = _dn(r, j - 1).hilbert()
    return (loc1 - non1) + (loc2 - non2).scale(1j)


def cal_l(grid, j, f, l_max=L_MAX):
    """Sampled values of the j-th ladder operator applied to ``f``.

    ``f`` may be an array or a TailedField; growing profiles must be
    passed as TailedField so that their tails are handled exactly.
    """
    return cal_l_tailed(grid, j, f, l_max).values()


# ---- reporting -------------------------------------------------------------


@dataclass
class OperatorReport:
    name: str
    residual_l2: float
    window: tuple
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.residual_l2 >= 0:
            raise ValueError("residual must be non-negative")


def window_mask(grid, half_width=64.0):
    return np.abs(grid.x) <= half_width


def window_norm(grid, f, half_width=64.0):
    """L2 norm restricted to |x| <= half_width."""
    f = _as_complex(grid, f)
    m = window_mask(grid, half_width)
    return float(np.sqrt(np.sum(np.abs(f[m]) ** 2) * grid.dx))


def residual_report(grid, name, lhs, rhs, half_width=64.0, scale=None):
    """Windowed L2 residual of lhs - rhs, relative to ``scale``.

    The default scale is the larger windowed norm of the two sides, with
    a floor of one so that vanishing identities are measured absolutely.
    """
    diff = window_norm(grid, np.asarray(lhs) - np.asarray(rhs), half_width)
    if scale is None:
        scale = max(window_norm(grid, lhs, half_width), window_norm(grid, rhs, half_width), 1.0)
    return OperatorReport(name, diff / scale, (-half_width, half_width), grid.summary())


def coercivity_probe(grid, n_dirs=16, seed=0, width=4.0):
    """Smallest ratio ||L_Q v|| / ||v||_adapted-1 over random directions.

    The directions are smooth bumps made orthogonal to the kernel
    elements iQ and Lambda Q. No threshold is implied; the true constant
    is not known.
    """
    rng = np.random.default_rng(seed)
    x = grid.x
    q = soliton_q(grid)
    kern = [1j * q, scaling_gen(grid, q)]
    gram = np.array([[inner_r(grid, a, b) for b in kern] for a in kern])
    best = np.inf
    for _ in range(n_dirs):
        c = rng.normal(size=(2, 6))
        centers = rng.uniform(-2 * width, 2 * width, 6)
        v = sum((c[0, i] + 1j * c[1, i]) * np.exp(-((x - centers[i]) / width) ** 2)
                for i in range(6))
        rhs = np.array([inner_r(grid, v, kk) for kk in kern])
        coef = np.linalg.solve(gram, rhs)
        v = v - coef[0] * kern[0] - coef[1] * kern[1]
        best = min(best, norm_l2(grid, l_q(grid, v)) / norm_adapted(grid, v, 1))
    return float(best)


__all__ = [
    "L_MAX", "soliton_q", "soliton_chiral", "d_v", "d_tilde_v", "d_tilde_pow", "l_v",
    "l_v_star", "l_q", "l_q_star", "n_v", "h_v", "b_q", "b_q_star", "a_q", "a_q_star",
    "scaling_gen", "cal_l", "cal_l_tailed", "OperatorReport", "window_mask",
    "window_norm", "residual_report", "coercivity_probe",
]
