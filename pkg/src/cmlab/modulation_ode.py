"""
The finite-dimensional modulation system in renormalized time s:

    lam_s / lam = -b_1,                 gamma_s = eta_1 / 2,
    (b_k)_s   = b_{k+1} - (2k - 1/2) b_1 b_k - eta_1 eta_k / 2,
    (eta_k)_s = eta_{k+1} - (2k - 1/2) b_1 eta_k + eta_1 b_k / 2,

with b_{L+1} = eta_{L+1} = 0, and physical time from dt = lam^2 ds.

Besides integration this module holds the special solution, the
linearization around it, the explicit (lam, gamma) family and the
shooting procedure for the one unstable direction at L = 1.
"""

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.integrate import solve_ivp

from .fitting import fit_power_law

L_CAP = 8
RTOL, ATOL = 1e-10, 1e-13


def kappa_default(L):
    """Trapping exponent: 0.02, lowered to half the admissible bound when needed."""
    return min(0.02, 1.0 / (16.0 * (4 * L - 1)))


def check_kappa(kappa, L):
    if not 0 < kappa < 1.0 / (8.0 * (4 * L - 1)):
        raise ValueError(f"kappa = {kappa} is not admissible for L = {L}")


def _check_L(L):
    if int(L) != L or not 1 <= L <= L_CAP:
        raise ValueError(f"L must be in 1..{L_CAP}, got {L}")
    return int(L)


@dataclass
class OdeState:
    s: float
    b: np.ndarray
    eta: np.ndarray
    lam: float
    gamma: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        if self.b.shape != self.eta.shape or self.b.ndim != 1:
            raise ValueError("b and eta must be vectors of equal length")
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    @property
    def L(self):
        return self.b.size


def _vector_field(b, eta):
    L = b.size
    bn = np.append(b[1:], 0.0)
    en = np.append(eta[1:], 0.0)
    k = np.arange(1, L + 1)
    db = bn - (2 * k - 0.5) * b[0] * b - 0.5 * eta[0] * eta
    de = en - (2 * k - 0.5) * b[0] * eta + 0.5 * eta[0] * b
    return db, de


def rhs(state):
    """d/ds of (b, eta, lam, gamma) and dt/ds = lam^2."""
    db, de = _vector_field(state.b, state.eta)
    return {"b": db, "eta": de, "lam": -state.b[0] * state.lam,
            "gamma": 0.5 * state.eta[0], "t": state.lam**2}


def special_c(L):
    """c_1 = 2L/(4L-1), c_{k+1} = -((L-k)/(4L-1)) c_k."""
    L = _check_L(L)
    c = np.empty(L)
    c[0] = 2 * L / (4 * L - 1)
    for k in range(1, L):
        c[k] = -((L - k) / (4 * L - 1)) * c[k - 1]
    return c


def lambda_exponent(L):
    return 2 * L / (4 * L - 1)


def special_solution(L, s, lam_scale=1.0, T=0.0):
    """b_k = c_k/s^k, eta = 0, lam = lam_scale s^(-2L/(4L-1)).

    Physical time is normalized so that the blow-up time is ``T``.
    """
    L = _check_L(L)
    if not s > 0:
        raise ValueError("s must be positive")
    p = lambda_exponent(L)
    b = special_c(L) / s ** np.arange(1, L + 1)
    t = T - lam_scale**2 * (4 * L - 1) * s ** (-1.0 / (4 * L - 1))
    return OdeState(float(s), b, np.zeros(L), lam_scale * s**-p, 0.0, float(t))


# ---- linearization -----------------------------------------------------------


@dataclass
class SystemMatrices:
    L: int
    M_U: np.ndarray
    M_V: np.ndarray
    P: np.ndarray
    Q_mat: np.ndarray
    D_U: np.ndarray
    D_V: np.ndarray

    def diag_errors(self):
        eu = np.abs(self.P @ self.M_U @ np.linalg.inv(self.P) - self.D_U).max()
        ev = np.abs(self.Q_mat @ self.M_V @ np.linalg.inv(self.Q_mat) - self.D_V).max()
        return float(eu), float(ev)


def expected_spectra(L):
    d = 4 * L - 1
    du = np.array([-1.0] + [k / d for k in range(2, L + 1)])
    dv = np.array([k / d for k in range(1, L + 1)])
    return du, dv


def _diagonalizer(M, target):
    vals, vecs = np.linalg.eig(M)
    if np.any(np.abs(vals.imag) > 1e-8):
        raise np.linalg.LinAlgError("complex eigenvalues in a modulation matrix")
    order = [int(np.argmin(np.abs(vals.real - t))) for t in target]
    if len(set(order)) != len(order) or np.abs(vals.real[order] - target).max() > 1e-8:
        raise np.linalg.LinAlgError("spectrum does not match the expected values")
    R = vecs.real[:, order]
    # first component positive and unit columns for a reproducible choice
    R = R / np.linalg.norm(R, axis=0)
    R = R * np.where(R[np.argmax(np.abs(R), axis=0), range(R.shape[1])] < 0, -1.0, 1.0)
    return np.linalg.inv(R), vals.real[order]


def matrices(L):
    """Linearization s U_s = M_U U, s V_s = M_V V and its diagonalization."""
    L = _check_L(L)
    d = 4 * L - 1
    c = special_c(L)
    k = np.arange(1, L + 1)
    MU = np.diag((L - k) / d) + np.diag(np.ones(L - 1), 1)
    MV = MU.copy()
    MU[:, 0] -= (2 * k - 0.5) * c
    MU[0, 0] = -(2 * L + 1) / d
    MV[1:, 0] += 0.5 * c[1:]
    MV[0, 0] = (2 * L - 1) / d
    du, dv = expected_spectra(L)
    P, _ = _diagonalizer(MU, du)
    Qm, _ = _diagonalizer(MV, dv)
    return SystemMatrices(L, MU, MV, P, Qm, np.diag(du), np.diag(dv))


def eigenvalue_errors(L):
    """Largest gap between computed and expected eigenvalues of M_U and M_V."""
    m = matrices(L)
    du, dv = expected_spectra(L)
    eu = np.sort(np.linalg.eigvals(m.M_U).real)
    ev = np.sort(np.linalg.eigvals(m.M_V).real)
    return float(np.abs(eu - np.sort(du)).max()), float(np.abs(ev - np.sort(dv)).max())


def positive_count(L):
    m = matrices(L)
    vals = np.concatenate([np.linalg.eigvals(m.M_U).real, np.linalg.eigvals(m.M_V).real])
    return int(np.sum(vals > 0))


@dataclass
class FluctState:
    U: np.ndarray
    V: np.ndarray
    cU: np.ndarray
    cV: np.ndarray


def fluctuation(state, mats=None):
    """U_k = s^k (b_k - c_k/s^k), V_k = s^k eta_k and their diagonal coordinates."""
    L = state.L
    mats = matrices(L) if mats is None else mats
    sk = state.s ** np.arange(1, L + 1)
    U = sk * state.b - special_c(L)
    V = sk * state.eta
    return FluctState(U, V, mats.P @ U, mats.Q_mat @ V)


def fluctuation_derivative(state):
    """s U_s and s V_s computed from the vector field, no differencing."""
    L = state.L
    k = np.arange(1, L + 1)
    sk = state.s**k
    db, de = _vector_field(state.b, state.eta)
    sU = k * sk * state.b + state.s * sk * db
    sV = k * sk * state.eta + state.s * sk * de
    return sU, sV


def linearization_residual(state, mats=None):
    """|s U_s - M_U U| + |s V_s - M_V V| at one state."""
    mats = matrices(state.L) if mats is None else mats
    fl = fluctuation(state, mats)
    sU, sV = fluctuation_derivative(state)
    return float(np.linalg.norm(sU - mats.M_U @ fl.U) + np.linalg.norm(sV - mats.M_V @ fl.V))


def fluctuation_rhs_check(L, s0=10.0, s_end=100.0, scales=(1e-2, 5e-3, 2.5e-3, 1.25e-3), seed=0):
    """Slope of the linearization residual against the perturbation size.

    Integrates from special data perturbed by ``scale * direction`` in
    (U, V) and records the largest residual along each trajectory.
    """
    rng = np.random.default_rng(seed)
    L = _check_L(L)
    direction = rng.normal(size=2 * L)
    direction /= np.linalg.norm(direction)
    mats = matrices(L)
    res = []
    for eps in scales:
        st = perturbed_special(L, s0, eps * direction[:L], eps * direction[L:])
        tr = integrate(st, s_end, n_out=64)
        res.append(max(linearization_residual(x, mats) for x in tr.states()))
    slope = np.polyfit(np.log(scales), np.log(res), 1)[0]
    return float(slope), res


def perturbed_special(L, s0, dU, dV, lam_scale=1.0):
    """Special data at s0 with U and V shifted by dU and dV."""
    st = special_solution(L, s0, lam_scale)
    sk = s0 ** np.arange(1, L + 1)
    return OdeState(s0, st.b + np.asarray(dU) / sk, np.asarray(dV) / sk, st.lam, st.gamma, st.t)


# ---- integration -------------------------------------------------------------


@dataclass
class OdeTrajectory:
    s: np.ndarray
    b: np.ndarray
    eta: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    t: np.ndarray
    status: str = "ok"

    def states(self):
        return [OdeState(self.s[i], self.b[i], self.eta[i], self.lam[i], self.gamma[i], self.t[i])
                for i in range(self.s.size)]


def _pack(state):
    return np.concatenate([state.b, state.eta, [np.log(state.lam), state.gamma, state.t]])


def _ode(s, y, L):
    b, eta = y[:L], y[L:2 * L]
    db, de = _vector_field(b, eta)
    return np.concatenate([db, de, [-b[0], 0.5 * eta[0], np.exp(2 * y[2 * L])]])


def integrate(state0, s_end, n_out=256, rtol=RTOL, atol=ATOL, s_eval=None, events=None):
    """Adaptive 4(5) integration from state0.s to s_end.

    Output points are log-spaced unless ``s_eval`` is given. log(lam) is
    integrated so that lam stays positive and keeps relative accuracy.
    """
    if not state0.s > 0 or not s_end > state0.s:
        raise ValueError("need 0 < s0 < s_end")
    L = state0.L
    if s_eval is None:
        s_eval = np.geomspace(state0.s, s_end, n_out)
    sol = solve_ivp(_ode, (state0.s, s_end), _pack(state0), method="RK45", t_eval=s_eval,
                    rtol=rtol, atol=atol, args=(L,), events=events)
    if sol.status == -1:
        raise RuntimeError(f"integration failed: {sol.message}")
    y = sol.y
    status = "event" if sol.status == 1 else "ok"
    return OdeTrajectory(sol.t, y[:L].T, y[L:2 * L].T, np.exp(y[2 * L]), y[2 * L + 1],
                         y[2 * L + 2], status)


def estimate_T(traj, tail_fraction=0.25):
    """Blow-up time from t(s_max) plus the tail integral of lam^2 ds.

    lam ~ A s^-p is fitted on the last ``tail_fraction`` of the samples
    (in log s) and the remaining integral A^2 s^(1-2p)/(2p-1) added.
    """
    ls = np.log(traj.s)
    keep = ls >= ls[-1] - tail_fraction * (ls[-1] - ls[0])
    p, logA = np.polyfit(ls[keep], np.log(traj.lam[keep]), 1)
    p = -p
    if not p > 0.5:
        raise ValueError("lambda decays too slowly for a finite blow-up time")
    A = np.exp(logA)
    tail = A**2 * traj.s[-1] ** (1 - 2 * p) / (2 * p - 1)
    return float(traj.t[-1] + tail), float(tail)


def rate_fits(traj, L, window=None):
    """Fitted exponents of lam against s and against T - t.

    Returns both fits and the shift of the time exponent when T moves
    by +- the tail correction, as a sensitivity measure.
    """
    fs = fit_power_law(traj.s, traj.lam, window)
    T, tail = estimate_T(traj)
    sel = slice(None)
    if window is not None:
        sel = (traj.s >= window[0]) & (traj.s <= window[1])
    tt = T - traj.t[sel]
    ft = fit_power_law(tt, traj.lam[sel])
    ft.T_estimate = T
    sens = []
    for dT in (-0.1 * tail, 0.1 * tail):
        tt2 = T + dT - traj.t[sel]
        if np.all(tt2 > 0):
            sens.append(abs(fit_power_law(tt2, traj.lam[sel]).exponent - ft.exponent))
    return {"s_fit": fs, "t_fit": ft, "T": T, "T_tail": tail,
            "t_exponent_sensitivity": max(sens) if sens else float("nan"),
            "expected_s": -lambda_exponent(L), "expected_t": 2.0 * L}


# ---- explicit family -------------------------------------------------------------


def _closed_coeffs(L, c, d, lead=1.0):
    c = np.zeros(max(L - 1, 0)) if c is None else np.asarray(c, dtype=float)
    d = np.zeros(L) if d is None else np.asarray(d, dtype=float)
    if c.shape != (L - 1,) or d.shape != (L,):
        raise ValueError("need c_1..c_{L-1} and d_0..d_{L-1}")
    a = np.zeros(L + 1, dtype=complex)
    a[0] = 1j * d[0]
    a[1:L] = c + 1j * d[1:]
    a[L] = lead
    return a


def closed_form_z(T, L, c, d, t, lead=1.0):
    """z = (T-t)^L + i d_0 + sum_k (c_k + i d_k)(T-t)^k."""
    a = _closed_coeffs(_check_L(L), c, d, lead)
    return np.polynomial.polynomial.polyval(T - np.asarray(t, dtype=float), a)


def closed_form_lambda_gamma(T, L, c, d, t, lead=1.0):
    """lam = |z|^2 and gamma = -arg z (unwrapped along t)."""
    t = np.asarray(t, dtype=float)
    if np.any(t >= T):
        raise ValueError("closed form needs t < T")
    z = closed_form_z(T, L, c, d, t, lead)
    if np.any(np.abs(z) == 0):
        raise ZeroDivisionError("z vanishes; the parameters are degenerate")
    gam = -np.angle(z)
    if gam.ndim:
        gam = np.unwrap(gam)
    return np.abs(z) ** 2, gam


def first_zero(T, L, c, d, lead=1.0):
    """Smallest tau = T - t > 0 at which z vanishes, or None."""
    a = _closed_coeffs(_check_L(L), c, d, lead)
    roots = np.polynomial.polynomial.polyroots(a)
    real = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0]
    return min(real) if real else None


# ---- Taylor jets and the recursion read backwards ---------------------------------


def _jmul(a, b):
    m = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for i in range(m):
        out[..., i:] += a[..., i:i + 1] * b[..., : m - i]
    return out


def _jdiv(a, b):
    m = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b, float))
    for i in range(m):
        acc = a[..., i] - np.sum(out[..., :i] * b[..., i:0:-1], axis=-1) if i else a[..., 0]
        out[..., i] = acc / b[..., 0]
    return out


def _jder(a):
    m = a.shape[-1]
    return a[..., 1:] * np.arange(1, m)


def closed_form_jets(T, L, c, d, t, order, lead=1.0):
    """Taylor coefficients in t of lam and gamma at each sample time.

    Row i holds f(t_i + h) = sum_j a_j h^j for j = 0..order.
    """
    L = _check_L(L)
    a = _closed_coeffs(L, c, d, lead)
    tau = T - np.atleast_1d(np.asarray(t, dtype=float))
    m = order + 1
    # z(tau0 - h) expanded in h
    zj = np.zeros((tau.size, m), dtype=complex)
    for k, ak in enumerate(a):
        for j in range(min(k, order) + 1):
            zj[:, j] += ak * comb(k, j) * tau ** (k - j) * (-1.0) ** j
    lam = _jmul(zj, np.conj(zj)).real
    # gamma' = -Im(z'/z)
    ratio = _jdiv(np.concatenate([_jder(zj), np.zeros((tau.size, 1))], axis=1), zj)
    gd = -ratio.imag[:, : m - 1]
    gam = np.zeros((tau.size, m))
    gam[:, 0] = -np.angle(zj[:, 0])
    gam[:, 1:] = gd / np.arange(1, m)
    return lam, gam


def jets_from_samples(t, y, order, half_width=4):
    """Local polynomial Taylor coefficients from uniformly sampled data."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = t.size
    deg = min(order + 2, 2 * half_width)
    out = np.full((n, order + 1), np.nan)
    for i in range(half_width, n - half_width):
        sl = slice(i - half_width, i + half_width + 1)
        coef = np.polynomial.polynomial.polyfit(t[sl] - t[i], y[sl], deg)
        out[i] = coef[: order + 1]
    return out


def hierarchy_from_lambda_gamma(lam_jet, gam_jet, L):
    """Read (b_k, eta_k), k = 1..L+1, back from Taylor jets of lam and gamma.

    Uses d/ds = lam^2 d/dt with b_1 = -lam_s/lam, eta_1 = 2 gamma_s and the
    modulation laws solved for b_{k+1}, eta_{k+1}. Jets must hold at least
    L+2 coefficients. Returns b, eta of shape (n, L+1) and the closure
    residual |b_{L+1}| + |eta_{L+1}|.
    """
    L = _check_L(L)
    lam = np.atleast_2d(lam_jet)
    gam = np.atleast_2d(gam_jet)
    if lam.shape[1] < L + 2:
        raise ValueError("jets are too short for the requested depth")
    m = L + 2
    lam, gam = lam[:, :m], gam[:, :m]

    def d_s(f):
        df = _jder(f)
        lw = lam[:, : df.shape[1]]
        return _jmul(_jmul(lw, lw), df)

    b = [-_jdiv(d_s(lam), lam[:, : m - 1])]
    e = [2.0 * d_s(gam)]
    for k in range(1, L + 1):
        bk, ek = b[-1], e[-1]
        w = bk.shape[1] - 1
        b1, e1 = b[0][:, :w], e[0][:, :w]
        nb = d_s(bk) + (2 * k - 0.5) * _jmul(b1, bk[:, :w]) + 0.5 * _jmul(e1, ek[:, :w])
        ne = d_s(ek) + (2 * k - 0.5) * _jmul(b1, ek[:, :w]) - 0.5 * _jmul(e1, bk[:, :w])
        b.append(nb)
        e.append(ne)
    B = np.stack([x[:, 0] for x in b], axis=1)
    E = np.stack([x[:, 0] for x in e], axis=1)
    closure = np.abs(B[:, L]) + np.abs(E[:, L])
    return B, E, closure


def initial_from_closed_form(T, L, c, d, t0=0.0, lead=1.0):
    """(lam, gamma, b_k, eta_k) at t0 for the explicit family."""
    lam, gam = closed_form_jets(T, L, c, d, t0, L + 1, lead)
    B, E, _ = hierarchy_from_lambda_gamma(lam, gam, L)
    return OdeState(1.0, B[0, :L], E[0, :L], float(lam[0, 0]), float(gam[0, 0]), float(t0))


# ---- shooting ----------------------------------------------------------------


def trap_margins(state, mats, kappa):
    """Signed distances to the trapping bounds; all positive when trapped."""
    L = state.L
    fl = fluctuation(state, mats)
    ratio = state.b[0] ** L / state.lam ** (2 * L - 0.5) if state.b[0] > 0 else 0.0
    unst = np.concatenate([fl.cU[1:], fl.cV])
    return {
        "ratio_low": ratio - 0.5,
        "ratio_high": 2.0 - ratio,
        "stable": 10.0 * state.s**-kappa - abs(fl.cU[0]),
        "unstable": 1.01 - state.s**kappa * np.linalg.norm(unst),
    }


def trap_violation(state, mats, kappa):
    """Name of the first violated trapping bound, or '' when trapped."""
    for name, m in trap_margins(state, mats, kappa).items():
        if m < 0:
            return name
    return ""


def _unstable_to_UV(mats, xi):
    L = mats.L
    cU = np.concatenate([[0.0], xi[: L - 1]])
    cV = xi[L - 1:]
    return cU, cV


def trapped_start(L, s0, xi, u1=0.0, mats=None):
    """State at s0 with diagonal unstable coordinates ``xi`` (length 2L-1).

    The stable coordinate is set to ``u1`` and lam is chosen so that
    b_1^L / lam^(2L-1/2) = 1.
    """
    mats = matrices(L) if mats is None else mats
    cU, cV = _unstable_to_UV(mats, np.asarray(xi, dtype=float))
    cU[0] = u1
    U = np.linalg.solve(mats.P, cU)
    V = np.linalg.solve(mats.Q_mat, cV)
    sk = s0 ** np.arange(1, L + 1)
    b = (special_c(L) + U) / sk
    eta = V / sk
    lam = b[0] ** (L / (2 * L - 0.5))
    return OdeState(s0, b, eta, lam)


def trapping_horizon(state0, s_end, kappa, mats=None, n_out=400):
    """First s at which the trapping bounds fail (s_end if never) and the reason.

    Integration stops at the exit through a terminal event, since outside
    the trapped region the system may run into a finite-s singularity.
    """
    L = state0.L
    mats = matrices(L) if mats is None else mats

    def margin(s, y, L):
        st = OdeState(s, y[:L], y[L:2 * L], float(np.exp(y[2 * L])), y[2 * L + 1], y[2 * L + 2])
        return min(trap_margins(st, mats, kappa).values())

    margin.terminal = True
    margin.direction = -1
    s_eval = np.geomspace(state0.s, s_end, n_out)
    sol = solve_ivp(_ode, (state0.s, s_end), _pack(state0), method="RK45", t_eval=s_eval,
                    rtol=RTOL, atol=ATOL, args=(L,), events=margin)
    if sol.status == -1:
        raise RuntimeError(f"integration failed: {sol.message}")
    ys, ss = sol.y, sol.t
    if sol.status == 1 and sol.t_events[0].size:
        # append the exit point itself
        ss = np.append(ss, sol.t_events[0][0])
        ys = np.concatenate([ys, sol.y_events[0][0][:, None]], axis=1)
    tr = OdeTrajectory(ss, ys[:L].T, ys[L:2 * L].T, np.exp(ys[2 * L]), ys[2 * L + 1],
                       ys[2 * L + 2], "event" if sol.status == 1 else "ok")
    if sol.status == 1:
        last = tr.states()[-1]
        why = trap_violation(last, mats, kappa)
        if not why:
            why = min(trap_margins(last, mats, kappa).items(), key=lambda kv: kv[1])[0]
        return float(ss[-1]), why, tr
    return float(s_end), "", tr


def exit_sign(state0, s_end, kappa, mats, coord):
    s_exit, why, tr = trapping_horizon(state0, s_end, kappa, mats)
    if not why:
        return 0, s_exit
    fl = fluctuation(tr.states()[-1], mats)
    unst = np.concatenate([fl.cU[1:], fl.cV])
    return int(np.sign(unst[coord])) or 1, s_exit


def shoot_trapped(L, s0=10.0, horizon=100.0, kappa=None, u1=None, tol=1e-14, budget=200):
    """Find unstable initial coordinates whose trajectory stays trapped.

    For L = 1 this is a bisection over the single unstable coordinate
    V_1(s0) inside the admissible ball. For larger L the coordinates are
    bisected one at a time, innermost first, within the same budget.
    Returns a dict with the coordinates and the achieved horizon s/s0.
    """
    L = _check_L(L)
    kappa = kappa_default(L) if kappa is None else kappa
    check_kappa(kappa, L)
    mats = matrices(L)
    s_end = horizon * s0
    radius = 1.01 * s0**-kappa / np.sqrt(2 * L - 1)
    u1 = 0.5 * s0**-kappa if u1 is None else u1
    xi = np.zeros(2 * L - 1)
    calls = [0]

    def run(xv):
        calls[0] += 1
        return trapping_horizon(trapped_start(L, s0, xv, u1, mats), s_end, kappa, mats)

    for coord in reversed(range(2 * L - 1)):
        lo, hi = -radius, radius
        xl, xh = xi.copy(), xi.copy()
        xl[coord], xh[coord] = lo, hi
        sl, _ = exit_sign(trapped_start(L, s0, xl, u1, mats), s_end, kappa, mats, coord)
        sh, _ = exit_sign(trapped_start(L, s0, xh, u1, mats), s_end, kappa, mats, coord)
        calls[0] += 2
        if sl == 0 or sh == 0 or sl == sh:
            xi[coord] = lo if sl == 0 else (hi if sh == 0 else 0.0)
            continue
        while hi - lo > tol * radius and calls[0] < budget:
            mid = 0.5 * (lo + hi)
            xm = xi.copy()
            xm[coord] = mid
            sm, _ = exit_sign(trapped_start(L, s0, xm, u1, mats), s_end, kappa, mats, coord)
            calls[0] += 1
            if sm == 0:
                lo = hi = mid
                break
            if sm == sl:
                lo = mid
            else:
                hi = mid
        xi[coord] = 0.5 * (lo + hi)
    s_exit, why, _ = run(xi)
    return {"xi": xi, "horizon": s_exit / s0, "exit_reason": why, "calls": calls[0],
            "kappa": kappa, "u1": u1, "s0": s0, "exhausted": calls[0] >= budget}


def exit_growth_exponent(L, s0, xi, offset, coord=None, kappa=None, u1=None, s_max_factor=1e12):
    """Offset one unstable coordinate and fit |coordinate| against s until exit."""
    L = _check_L(L)
    kappa = kappa_default(L) if kappa is None else kappa
    u1 = 0.5 * s0**-kappa if u1 is None else u1
    mats = matrices(L)
    coord = 2 * L - 2 if coord is None else coord
    x = np.array(xi, dtype=float)
    x[coord] += offset
    st = trapped_start(L, s0, x, u1, mats)
    s_exit, why, tr = trapping_horizon(st, s0 * s_max_factor, kappa, mats, n_out=2000)
    keep = tr.s <= s_exit
    vals = []
    for state in np.array(tr.states())[keep]:
        fl = fluctuation(state, mats)
        vals.append(np.concatenate([fl.cU[1:], fl.cV])[coord])
    vals = np.abs(np.array(vals))
    ss = tr.s[keep]
    # skip the first decade where the stable mode still relaxes
    sel = ss >= 10 * s0 if np.sum(ss >= 10 * s0) >= 16 else slice(None)
    fit = fit_power_law(ss[sel], vals[sel], min_decades=0.5)
    return {"exponent": fit.exponent, "s_exit": float(s_exit), "reason": why,
            "r_squared": fit.r_squared, "sign": float(np.sign(offset))}


__all__ = [
    "OdeState", "rhs", "special_c", "special_solution", "lambda_exponent", "SystemMatrices",
    "matrices", "expected_spectra", "eigenvalue_errors", "positive_count", "FluctState",
    "fluctuation", "fluctuation_derivative", "linearization_residual", "fluctuation_rhs_check",
    "perturbed_special", "OdeTrajectory", "integrate", "estimate_T", "rate_fits",
    "closed_form_z", "closed_form_lambda_gamma", "first_zero", "closed_form_jets",
    "jets_from_samples", "hierarchy_from_lambda_gamma", "initial_from_closed_form",
    "kappa_default", "check_kappa", "trap_violation", "trapped_start", "trapping_horizon",
    "shoot_trapped", "exit_growth_exponent",
]
