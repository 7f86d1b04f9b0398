"""
Identity suites: the operator identities, the Hilbert calculus and the
kernel memberships, each as a list of windowed residual rows.

Test fields are Gaussian packets with seeded random centres, widths and
complex weights. They vanish to rounding well inside the window, which
makes them compactly supported for the grid, and unlike exp(-1/(1-r^2))
bumps their spectra are resolved at the default spacing. A suite run is
a pure function of (grid, seed).
"""

from dataclasses import dataclass

import numpy as np

from .spectral_grid import GridSpec, derivative, hilbert, norm_l2
from . import operators as op
from . import profiles as pr

WINDOW = 64.0
# relative residual limits per suite
LIMITS = {
    "operators": 1e-4,
    "kernels": 1e-4,
    "hilbert_algebraic": 2e-3,
    "hilbert_commutator": 1e-6,
    "hilbert_product": 1e-10,
}
# residuals below this are at the rounding floor and need not decay further
FLOOR = 1e-9


@dataclass
class Row:
    suite: str
    name: str
    n: int
    box_len: float
    residual: float
    limit: float

    @property
    def passed(self):
        return bool(self.residual <= self.limit)

    def as_dict(self):
        return {"suite": self.suite, "name": self.name, "n": self.n, "box_len": self.box_len,
                "residual": self.residual, "limit": self.limit, "pass": self.passed}


def bump_field(grid, rng, count=3, spread=6.0, complex_=True):
    """Sum of Gaussian packets exp(-((x - c)/w)^2) with random weights."""
    x = grid.x
    out = np.zeros(grid.n, dtype=complex)
    for _ in range(count):
        c = rng.uniform(-spread, spread)
        w = rng.uniform(1.5, 3.0)
        a = rng.normal() + (1j * rng.normal() if complex_ else 0.0)
        out += a * np.exp(-(((x - c) / w) ** 2))
    return out


def _row(grid, suite, name, lhs, rhs, scale=None, limit=None):
    rep = op.residual_report(grid, name, lhs, rhs, WINDOW, scale)
    return Row(suite, name, grid.n, grid.box_len, rep.residual_l2,
               LIMITS[suite] if limit is None else limit)


def operator_suite(grid, seed=0):
    """Conjugation chain, repulsivity, B_Q isometry, D~_Q factorization, D~_v^2."""
    rng = np.random.default_rng(seed)
    f = bump_field(grid, rng)
    h = bump_field(grid, rng)
    v = 2.0 * bump_field(grid, rng, count=2, spread=3.0)
    q = op.soliton_q(grid)
    s = "operators"
    LiL = op.l_q(grid, 1j * op.l_q_star(grid, f))
    iH = 1j * op.h_v(grid, q, f)
    iAA = 1j * op.a_q_star(grid, op.a_q(grid, f))
    iDD = -1j * op.d_tilde_pow(grid, q, f, 2)
    Dv = op.d_tilde_v(grid, v, v)
    d2 = (op.d_tilde_pow(grid, v, h, 2) + op.h_v(grid, v, h)
          - 0.5 * Dv * hilbert(grid, np.conj(v) * h) + 0.5 * v * hilbert(grid, np.conj(Dv) * h))
    return [
        _row(grid, s, "L_Q i L_Q* = i H_Q", LiL, iH),
        _row(grid, s, "i H_Q = i A_Q* A_Q", iH, iAA),
        _row(grid, s, "i A_Q* A_Q = i D~_Q* D~_Q", iAA, iDD),
        _row(grid, s, "A_Q A_Q* = -d_xx", op.a_q(grid, op.a_q_star(grid, f)), -derivative(grid, f, 2)),
        _row(grid, s, "B_Q B_Q* = I", op.b_q(grid, op.b_q_star(grid, f)), f),
        # B_Q is complex linear and kills iQ too, so the pairing is complex
        _row(grid, s, "B_Q* B_Q = I - Q(Q,.)/2pi", op.b_q_star(grid, op.b_q(grid, f)),
             f - q * np.sum(f * q) * grid.dx / (2 * np.pi)),
        _row(grid, s, "D~_Q = B_Q* d_x B_Q", op.d_tilde_v(grid, q, f),
             op.b_q_star(grid, derivative(grid, op.b_q(grid, f)))),
        _row(grid, s, "D~_v^2 h + H_v h = (1/2)(D~_v v H(v* h) - v H((D~_v v)* h))", d2,
             np.zeros(grid.n), scale=max(op.window_norm(grid, op.d_tilde_pow(grid, v, h, 2)), 1.0)),
    ]


def hilbert_suite(grid, seed=0, torus_n=1024):
    """H(Q^2) = xQ^2, the two rational identities, the commutator and the product rule.

    The product rule is a torus identity and is checked on a separate
    torus grid of ``torus_n`` points with random mean-zero trigonometric
    polynomials.
    """
    rng = np.random.default_rng(seed)
    x = grid.x
    q = op.soliton_q(grid)
    j2 = 1.0 + x**2
    rows = [
        _row(grid, "hilbert_algebraic", "H(Q^2) = x Q^2", hilbert(grid, q**2), x * q**2),
        _row(grid, "hilbert_algebraic", "H(2x^2/(1+x^2)^2) = (x^3-x)/(1+x^2)^2",
             hilbert(grid, 2 * x**2 / j2**2), (x**3 - x) / j2**2),
        _row(grid, "hilbert_algebraic", "H(2x^3/(1+x^2)^2) = -(3x^2+1)/(1+x^2)^2",
             hilbert(grid, 2 * x**3 / j2**2), -(3 * x**2 + 1) / j2**2),
    ]
    f = bump_field(grid, rng, complex_=False)
    mean = np.sum(f) * grid.dx / np.pi
    rows.append(_row(grid, "hilbert_commutator", "[x, H] f = (1/pi) int f",
                     x * hilbert(grid, f) - hilbert(grid, x * f), mean + 0 * x))
    tg = GridSpec(torus_n, 2 * np.pi, "torus")
    modes = np.arange(1, 21)

    def trig():
        a, b = rng.normal(size=(2, modes.size)) / modes**2
        phase = np.outer(modes, tg.x)
        return (a[:, None] * np.cos(phase) + b[:, None] * np.sin(phase)).sum(0)

    f, g = trig(), trig()
    Hf, Hg = hilbert(tg, f), hilbert(tg, g)
    lhs, rhs = f * g, Hf * Hg - hilbert(tg, f * Hg + Hf * g)
    res = norm_l2(tg, lhs - rhs) / max(norm_l2(tg, lhs), 1.0)
    rows.append(Row("hilbert_product", "fg = Hf Hg - H(f Hg + Hf g)", tg.n, tg.box_len, res,
                    LIMITS["hilbert_product"]))
    return rows


def kernel_suite(grid, seed=0):
    """Kernel elements of L_Q, the order-two operator and A_Q, plus the profile ladder."""
    del seed  # deterministic fields only
    s = "kernels"
    x = grid.x
    q = op.soliton_q(grid)
    zero = np.zeros(grid.n)
    kt = pr.kernel_elements_tailed(grid)
    rows = [
        _row(grid, s, "L_Q(iQ) = 0", op.l_q(grid, 1j * q), zero),
        _row(grid, s, "L_Q(Lambda Q) = 0", op.l_q(grid, op.scaling_gen(grid, q)), zero),
    ]
    labels = {"K1": "Lambda Q", "K2": "iQ", "K3": "i y^2 Q", "K4": "(1+y^2) Q"}
    for key, label in labels.items():
        rows.append(_row(grid, s, f"cal_L2({label}) = 0", op.cal_l(grid, 2, kt[key]), zero))
    rows.append(_row(grid, s, "A_Q(Q) = 0", op.a_q(grid, q), zero))
    rows.append(_row(grid, s, "A_Q(yQ) = 0", op.a_q(grid, x * q), zero))
    b, eta = 0.7, 0.3
    for k in (1, 2, 3):
        for j in range(1, k + 1):
            lhs = op.cal_l(grid, 2 * k - 1, pr.t_profile_tailed(j, b, eta, grid))
            if j < k:
                rows.append(_row(grid, s, f"cal_L{2 * k - 1}(T{2 * j - 1}) = 0", lhs, zero))
            else:
                rows.append(_row(grid, s, f"cal_L{2 * k - 1}(T{2 * k - 1}) = B_Q P{2 * k - 1}",
                                 lhs, op.b_q(grid, pr.p_profile(k, b, eta, grid))))
    return rows


SUITES = {"operators": operator_suite, "hilbert": hilbert_suite, "kernels": kernel_suite}


def run_suite(name, grid, seed=0):
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](grid, seed)


def box_decay(small, large):
    """Pair rows of two box sizes by name; each must halve or sit at the floor."""
    out = []
    big = {(r.suite, r.name): r for r in large}
    for r in small:
        other = big.get((r.suite, r.name))
        if other is None:
            continue
        halved = other.residual <= 0.5 * r.residual
        floored = max(r.residual, other.residual) <= FLOOR
        out.append({"suite": r.suite, "name": r.name, "small": r.residual,
                    "large": other.residual, "halved": bool(halved), "at_floor": bool(floored),
                    "pass": bool(halved or floored)})
    return out


__all__ = ["WINDOW", "LIMITS", "FLOOR", "Row", "bump_field", "operator_suite", "hilbert_suite",
           "kernel_suite", "SUITES", "run_suite", "box_decay"]
