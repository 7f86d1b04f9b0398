"""
Uniform Fourier grid and the transforms built on it.

Two domains share one grid layout, x_i = -box_len/2 + i*dx:

``torus``
    Pure Fourier multipliers. Derivative is (ik)^o, Hilbert is -i sgn(k)
    with sgn(0) = 0, |D| is |k| and the Hardy projection keeps half of
    the k = 0 mode. Used for time stepping and conservation laws, where
    the discrete problem is genuinely periodic.

``line``
    The box stands in for the real line. Slowly decaying fields such as
    Q = sqrt(2)/<x> have tails that a periodic transform sees as kinks at
    the box edge. Before transforming we fit an algebraic far-field model
    (constants, <x>^-1, x<x>^-1, <x>^-3, x<x>^-3 and poles (x +- i)^-m)
    on the outer band of the box. The model is differentiated and
    Hilbert-transformed in closed form and only the remainder goes through
    the FFT (derivative) or the discrete Hilbert sum (Hilbert).

``TailedField`` carries an exactly known polynomial far field on top of
sampled values. It lets linear operators act on growing profiles such as
y^4 Q without ever sampling huge numbers.
"""

from dataclasses import dataclass, replace
from functools import cached_property
from math import factorial
import warnings

import numpy as np
from numpy.polynomial import polynomial as npoly

DOMAINS = ("torus", "line")
MAX_ORDER = 8
MAX_SOBOLEV = 8

# outer fraction of the half box used to fit the far-field model
_BAND = 3.0 / 8.0
# samples this close to the box edge are left out of the fit, since
# high derivatives of the periodic remainder are noisy there
_EDGE = 1.0 / 32.0
_POLE_ORDERS = (1, 2, 3)


class GridError(ValueError):
    """Invalid grid, mismatched fields or out-of-range parameters."""


def _jbr(x):
    return np.sqrt(1.0 + x * x)


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid of ``n`` points on a box of length ``box_len``.

    Parameters
    ----------
    n : int
        Number of points, a power of two no smaller than 16.
    box_len : float
        Period of the box.
    domain : {"torus", "line"}
        How transforms treat the box edges (see module docstring).
    """

    n: int = 4096
    box_len: float = 256.0
    domain: str = "torus"

    def __post_init__(self):
        n = int(self.n)
        if n != self.n or n < 16 or n & (n - 1):
            raise GridError(f"n must be a power of two >= 16, got {self.n}")
        if not np.isfinite(self.box_len) or self.box_len <= 0:
            raise GridError(f"box_len must be positive, got {self.box_len}")
        if self.domain not in DOMAINS:
            raise GridError(f"domain must be one of {DOMAINS}, got {self.domain!r}")

    @property
    def dx(self):
        return self.box_len / self.n

    @cached_property
    def x(self):
        return -0.5 * self.box_len + np.arange(self.n) * self.dx

    @cached_property
    def k(self):
        """Wavenumbers in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    @property
    def k_max(self):
        return np.pi / self.dx

    def with_domain(self, domain):
        return replace(self, domain=domain)

    def summary(self):
        return {"n": self.n, "box_len": self.box_len, "domain": self.domain}

    # ---- line-domain machinery, built lazily -------------------------

    @cached_property
    def _band(self):
        a = np.abs(self.x)
        return (a >= _BAND * self.box_len) & (a <= (0.5 - _EDGE) * self.box_len)

    @cached_property
    def _far_basis(self):
        """Far-field basis columns as (kind, data, has_hilbert)."""
        cols = [
            ("alg", ((1.0,), 0.0), True),
            ("alg", ((1.0,), 0.5), True),
            ("alg", ((0.0, 1.0), 1.5), True),
            ("alg", ((1.0,), 1.5), True),
            ("alg", ((0.0, 1.0), 0.5), False),
        ]
        for m in _POLE_ORDERS:
            for sg in (1, -1):
                cols.append(("pole", (m, sg), True))
        return cols

    def _basis_derivative(self, col, order):
        kind, data, _ = col
        x = self.x
        if kind == "pole":
            m, sg = data
            c = (-1) ** order * factorial(m + order - 1) / factorial(m - 1)
            return c * (x + 1j * sg) ** (-(m + order))
        coeffs, a = data
        p = np.asarray(coeffs, dtype=float)
        for _ in range(order):
            # d/dx [p (1+x^2)^-a] = [p'(1+x^2) - 2a x p] (1+x^2)^-(a+1)
            p = npoly.polysub(npoly.polymul(npoly.polyder(p), [1.0, 0.0, 1.0]),
                              npoly.polymul([0.0, 2.0 * a], p))
            a += 1.0
        return npoly.polyval(x, p) * (1.0 + x * x) ** (-a)

    def _basis_hilbert(self, col):
        kind, data, _ = col
        x = self.x
        if kind == "pole":
            m, sg = data
            return -1j * sg * (x + 1j * sg) ** (-m)
        coeffs, a = data
        jb = _jbr(x)
        h1 = (2.0 / np.pi) * np.arcsinh(x) / jb
        dh1 = (2.0 / np.pi) * (1.0 / jb**2 - x * np.arcsinh(x) / jb**3)
        table = {
            ((1.0,), 0.0): np.zeros_like(x),
            ((1.0,), 0.5): h1,
            ((0.0, 1.0), 1.5): -dh1,
            ((1.0,), 1.5): h1 + x * dh1,
        }
        return table[(tuple(coeffs), a)]

    def _fit_operator(self, which):
        cols = [c for c in self._far_basis if which == "d" or c[2]]
        B = np.stack([self._basis_derivative(c, 0) for c in cols], axis=1)
        Bb = B[self._band]
        scale = np.abs(Bb).max(axis=0)
        pinv = np.linalg.pinv(Bb / scale, rcond=1e-11) / scale[:, None]
        return cols, B, pinv

    @cached_property
    def _dfit(self):
        return self._fit_operator("d")

    @cached_property
    def _hfit(self):
        cols, B, pinv = self._fit_operator("h")
        H = np.stack([self._basis_hilbert(c) for c in cols], axis=1)
        return cols, B, pinv, H

    @cached_property
    def _dbasis_cache(self):
        return {}

    def _dbasis(self, order):
        cache = self._dbasis_cache
        if order not in cache:
            cols = self._dfit[0]
            cache[order] = np.stack([self._basis_derivative(c, order) for c in cols], axis=1)
        return cache[order]

    @cached_property
    def _kak_kernel_hat(self):
        n = self.n
        size = 1 << int(np.ceil(np.log2(3 * n)))
        d = np.arange(1, n)
        ker = np.where(d % 2 == 1, 2.0 / (np.pi * d), 0.0)
        full = np.zeros(size)
        full[1:n] = ker
        full[size - n + 1:] = -ker[::-1]
        return size, np.fft.fft(full)


def _as_complex(grid, f):
    f = np.asarray(f)
    if f.shape != (grid.n,):
        raise GridError(f"field has shape {f.shape}, grid expects ({grid.n},)")
    if not np.all(np.isfinite(f)):
        raise GridError("field contains non-finite values")
    return f


# ---- spectral pair ---------------------------------------------------


def to_spectrum(grid, f):
    """Unnormalized DFT, so a constant c maps to c*n at k = 0."""
    return np.fft.fft(_as_complex(grid, f))


def to_field(grid, F):
    F = np.asarray(F)
    if F.shape != (grid.n,) or not np.all(np.isfinite(F)):
        raise GridError("spectrum must be finite with length grid.n")
    return np.fft.ifft(F)


# ---- far-field fits (line domain) -------------------------------------


def far_field_fit(grid, f, which="d"):
    """Least-squares coefficients of the far-field model on the outer band."""
    cols, B, pinv = grid._dfit if which == "d" else grid._hfit[:3]
    return pinv @ np.asarray(f)[grid._band]


def _kak(grid, f):
    size, kh = grid._kak_kernel_hat
    return np.fft.ifft(np.fft.fft(f, size) * kh)[: grid.n]


# ---- derivative and Hilbert ---------------------------------------------


def derivative(grid, f, order=1):
    """Derivative of ``f``; the multiplier (ik)^order on the torus."""
    if not 1 <= int(order) <= MAX_ORDER or int(order) != order:
        raise GridError(f"derivative order must be in 1..{MAX_ORDER}, got {order}")
    order = int(order)
    f = _as_complex(grid, f)
    mult = (1j * grid.k) ** order
    if grid.domain == "torus":
        out = np.fft.ifft(mult * np.fft.fft(f))
        return out.real if np.isrealobj(f) else out
    coef = far_field_fit(grid, f, "d")
    model = grid._dfit[1] @ coef
    out = np.fft.ifft(mult * np.fft.fft(f - model)) + grid._dbasis(order) @ coef
    return out.real if np.isrealobj(f) else out


def hilbert(grid, f):
    """Hilbert transform with the convention H(1) = 0."""
    f = _as_complex(grid, f)
    if grid.domain == "torus":
        out = np.fft.ifft(-1j * np.sign(grid.k) * np.fft.fft(f))
    else:
        cols, B, pinv, H = grid._hfit
        coef = pinv @ f[grid._band]
        out = _kak(grid, f - B @ coef) + H @ coef
    return out.real if np.isrealobj(f) else out


def abs_d(grid, f):
    """|D| = H d/dx."""
    if grid.domain == "torus":
        f = _as_complex(grid, f)
        out = np.fft.ifft(np.abs(grid.k) * np.fft.fft(f))
        return out.real if np.isrealobj(f) else out
    return hilbert(grid, derivative(grid, f))


def pi_plus(grid, f):
    """Projection onto positive frequencies, keeping half of k = 0."""
    f = _as_complex(grid, f)
    if grid.domain == "torus":
        k = grid.k
        mult = np.where(k > 0, 1.0, np.where(k == 0, 0.5, 0.0))
        return np.fft.ifft(mult * np.fft.fft(f))
    return 0.5 * (f + 1j * hilbert(grid, f))


# ---- quadrature and norms ------------------------------------------------


def _check_pair(grid, f, g):
    _as_complex(grid, f)
    _as_complex(grid, g)


def inner_r(grid, f, g):
    """Real inner product Re sum f conj(g) dx."""
    _check_pair(grid, f, g)
    return float(np.real(np.vdot(g, f)) * grid.dx)


def norm_l2(grid, f):
    f = _as_complex(grid, f)
    return float(np.sqrt(np.sum(np.abs(f) ** 2) * grid.dx))


def norm_hs(grid, f, s):
    """H^s norm through the multiplier (1 + k^2)^(s/2)."""
    if not -MAX_SOBOLEV <= s <= MAX_SOBOLEV:
        raise GridError(f"Sobolev index out of range: {s}")
    F = np.fft.fft(_as_complex(grid, f))
    w = (1.0 + grid.k**2) ** (0.5 * s)
    return float(np.sqrt(np.sum(np.abs(w * F) ** 2) * grid.dx / grid.n))


def norm_adapted(grid, f, k):
    """Adapted norm with ||f||^2 = sum_j ||<x>^-j d^(k-j) f||^2, j = 0..k."""
    if int(k) != k or not 0 <= k <= MAX_SOBOLEV:
        raise GridError(f"adapted index must be in 0..{MAX_SOBOLEV}, got {k}")
    jb = _jbr(grid.x)
    total = 0.0
    for j in range(int(k) + 1):
        g = f if j == k else derivative(grid, f, int(k) - j)
        total += norm_l2(grid, g / jb**j) ** 2
    return float(np.sqrt(total))


# ---- modulation ---------------------------------------------------------


def trig_interpolate(grid, f, points, chunk=512):
    """Evaluate the trigonometric interpolant of ``f`` at arbitrary points."""
    f = _as_complex(grid, f)
    F = np.fft.fft(f) / grid.n
    k = grid.k.copy()
    half = grid.n // 2
    # split the Nyquist mode symmetrically so real data stays real
    F_nyq = F[half]
    F = F.copy()
    F[half] = 0.0
    pts = np.asarray(points, dtype=float) - grid.x[0]
    out = np.empty(pts.shape, dtype=complex)
    for i in range(0, pts.size, chunk):
        p = pts[i:i + chunk]
        out[i:i + chunk] = np.exp(1j * np.outer(p, k)) @ F + F_nyq * np.cos(np.pi * p / grid.dx)
    return out.real if np.isrealobj(f) else out


def modulate(grid, f, lam, gamma=0.0, x0=0.0):
    """Return e^(i gamma) lam^(-1/2) f((x - x0)/lam) on the same grid."""
    if not 1e-6 <= lam <= 1e6:
        raise GridError(f"lambda out of range: {lam}")
    f = _as_complex(grid, f)
    pts = (grid.x - x0) / lam
    half = 0.5 * grid.box_len
    if np.any(np.abs(pts) > half) and lam < 1.0:
        warnings.warn("rescaled field samples outside the box", RuntimeWarning, stacklevel=2)
    if grid.domain == "line":
        coef = far_field_fit(grid, f, "d")
        cols = grid._dfit[0]
        resid = f - grid._dfit[1] @ coef
        g = trig_interpolate(grid, resid, pts)
        model = np.zeros(pts.shape, dtype=complex)
        for c, col in zip(coef, cols):
            model += c * _eval_basis_at(col, pts)
        # the fit may be complex for real data; the sum is still real
        g = g + model
        g = g.real if np.isrealobj(f) else g
    else:
        g = trig_interpolate(grid, f, pts)
    return np.exp(1j * gamma) * lam ** -0.5 * g


def _eval_basis_at(col, pts):
    kind, data, _ = col
    if kind == "pole":
        m, sg = data
        return (pts + 1j * sg) ** (-m)
    coeffs, a = data
    return npoly.polyval(pts, np.asarray(coeffs)) * (1.0 + pts**2) ** (-a)


# ---- fields with an exact polynomial far field ---------------------------


class TailedField:
    """Field ``num + p(x) + q(x)/<x>`` with p, q exact polynomials.

    ``num`` holds samples whose far field decays; growth is carried by the
    coefficient arrays ``p`` and ``q`` (lowest degree first). Only the
    operations needed by the linearized operators are provided: sums,
    real/imaginary parts, multiplication by x and powers of <x>,
    differentiation and the Hilbert transform of decaying fields.
    On the torus the polynomial parts must stay zero.
    """

    def __init__(self, grid, num=None, p=(0.0,), q=(0.0,), canonical=True):
        self.grid = grid
        self.num = np.zeros(grid.n, complex) if num is None else np.asarray(num, dtype=complex)
        self.p = np.atleast_1d(np.asarray(p, dtype=complex))
        self.q = np.atleast_1d(np.asarray(q, dtype=complex))
        if grid.domain == "torus" and (np.any(self.p != 0) or np.any(self.q != 0)):
            raise GridError("polynomial far fields need the line domain")
        if canonical and grid.domain == "line":
            self._absorb_bounded_tail()

    @classmethod
    def wrap(cls, grid, f):
        return f if isinstance(f, cls) else cls(grid, _as_complex(grid, f))

    def _absorb_bounded_tail(self):
        # move the constant and sign-like x/<x> tails of num into p and q
        coef = far_field_fit(self.grid, self.num, "d")
        c0, c4 = coef[0], coef[4]
        x = self.grid.x
        self.num = self.num - c0 - c4 * x / _jbr(x)
        self.p = npoly.polyadd(self.p, [c0])
        self.q = npoly.polyadd(self.q, [0.0, c4])

    def values(self):
        x = self.grid.x
        return self.num + npoly.polyval(x, self.p) + npoly.polyval(x, self.q) / _jbr(x)

    def _new(self, num, p, q, canonical=True):
        return TailedField(self.grid, num, p, q, canonical)

    def __add__(self, other):
        other = TailedField.wrap(self.grid, other)
        return self._new(self.num + other.num, npoly.polyadd(self.p, other.p),
                         npoly.polyadd(self.q, other.q), False)

    def __sub__(self, other):
        return self + TailedField.wrap(self.grid, other).scale(-1.0)

    def scale(self, c):
        return self._new(c * self.num, c * self.p, c * self.q, False)

    def real(self):
        return self._new(self.num.real, self.p.real, self.q.real, False)

    def imag(self):
        return self._new(self.num.imag, self.p.imag, self.q.imag, False)

    def _split_over_jbr2(self, poly):
        # poly/(1+x^2) = quotient + remainder/(1+x^2)
        poly = np.atleast_1d(poly)
        if poly.size > 2:
            quot, rem = npoly.polydiv(poly, [1.0, 0.0, 1.0])
        else:
            quot, rem = np.zeros(1, complex), poly
        x = self.grid.x
        return quot, npoly.polyval(x, rem) / (1.0 + x * x)

    def mul_x(self):
        return self._new(self.grid.x * self.num, npoly.polymulx(self.p), npoly.polymulx(self.q))

    def mul_jbr(self, power):
        """Multiply by <x>^power for power in {-2, -1, 1}."""
        x = self.grid.x
        jb = _jbr(x)
        if power == 1:
            return self._new(self.num * jb, self.q, npoly.polymul(self.p, [1.0, 0.0, 1.0]))
        if power == -1:
            quot, rem = self._split_over_jbr2(self.q)
            return self._new(self.num / jb + rem, quot, self.p)
        if power == -2:
            return self.mul_jbr(-1).mul_jbr(-1)
        raise GridError(f"unsupported power of <x>: {power}")

    def derivative(self, order=1):
        out = self
        for _ in range(order):
            out = out._derivative1()
        return out

    def _derivative1(self):
        g = self.grid
        x = g.x
        dq = npoly.polyder(self.q) if self.q.size > 1 else np.zeros(1)
        top = npoly.polysub(npoly.polymul(dq, [1.0, 0.0, 1.0]), npoly.polymulx(self.q))
        quot, rem = self._split_over_jbr2(top)
        num = derivative(g, self.num) + rem / _jbr(x)
        dp = npoly.polyder(self.p) if self.p.size > 1 else np.zeros(1)
        # the derivative of a decaying remainder decays, so no refit
        return self._new(num, dp, quot, False)

    def hilbert(self, rtol=1e-8):
        g = self.grid
        x = g.x
        grow = (npoly.polyval(x, self.p) - self.p[0]) + (npoly.polyval(x, self.q) - self.q[0]) / _jbr(x)
        scale = max(float(np.abs(self.values()).max()), 1.0)
        if np.abs(grow).max() > rtol * scale:
            raise GridError("Hilbert transform of a growing field is undefined")
        h1 = (2.0 / np.pi) * np.arcsinh(x) / _jbr(x)
        return self._new(hilbert(g, self.num + grow) + self.q[0] * h1, (0.0,), (0.0,))


def grid_from_mapping(data, default=None):
    """Build a GridSpec from a config mapping with optional keys."""
    base = default or GridSpec()
    data = dict(data or {})
    unknown = set(data) - {"n", "box_len", "domain"}
    if unknown:
        raise GridError(f"unknown grid keys: {sorted(unknown)}")
    return GridSpec(int(data.get("n", base.n)), float(data.get("box_len", base.box_len)),
                    str(data.get("domain", base.domain)))


__all__ = [
    "GridSpec", "GridError", "TailedField", "to_spectrum", "to_field", "derivative",
    "hilbert", "abs_d", "pi_plus", "inner_r", "norm_l2", "norm_hs", "norm_adapted",
    "modulate", "trig_interpolate", "far_field_fit", "grid_from_mapping",
]
