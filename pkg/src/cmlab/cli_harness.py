"""
Batch front door: ``cmlab <mode> --config <path> [--out <dir>] [--seed N]``.

A TOML file drives one experiment. Every mode writes ``summary.json``
with one pass/fail entry per criterion it checks, plus CSV tables and,
where useful, an SVG plot. Artifacts carry no timestamps or timings, so
identical config and seed give identical bytes.

Exit status: 0 when every check passes, 1 when a check fails, 2 when the
configuration cannot be read or is invalid.
"""

import argparse
import csv
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .spectral_grid import GridError, GridSpec, grid_from_mapping, norm_l2, pi_plus
from . import conserved as cs
from . import evolve as ev
from . import extract as ex
from . import modulation_ode as mo
from . import profiles as pr
from . import suites as su
from .fitting import fit_power_law, loglog_slope

MODES = ("verify-identities", "evolve", "extract-run", "ode", "fit-rate", "convergence")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SECTIONS = {"mode", "seed", "output_dir", "grid", "init", "evolve", "ode", "run"}
# sections a mode cannot run without
REQUIRED = {"evolve": ("grid", "init", "evolve"), "extract-run": ("grid", "evolve")}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str
    grid: GridSpec
    init: object = None
    evolve: object = None
    ode: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    output_dir: Path = Path("cmlab_out")
    seed: int = 0
    raw: dict = field(default_factory=dict)

    def digest(self):
        """Hash of the parsed config and seed, independent of key order."""
        text = json.dumps({"raw": self.raw, "seed": self.seed}, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path, mode=None, out=None, seed=None):
    """Read and validate a config file; raises ConfigError on any problem."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed config {path}: {err}") from err
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg_mode = raw.get("mode", mode)
    if mode is not None and cfg_mode != mode:
        raise ConfigError(f"config is for mode {cfg_mode!r}, not {mode!r}")
    if cfg_mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg_mode!r}")
    for sec in REQUIRED.get(cfg_mode, ()):
        if sec not in raw:
            raise ConfigError(f"mode {cfg_mode} needs a [{sec}] section")
    try:
        grid = grid_from_mapping(raw.get("grid"))
        init = pr.init_from_mapping(raw["init"], path.parent) if "init" in raw else None
        evolve = ev.evolve_from_mapping(raw["evolve"]) if "evolve" in raw else None
        seed_val = int(raw.get("seed", 0) if seed is None else seed)
    except (ValueError, TypeError, GridError) as err:
        raise ConfigError(f"invalid config {path}: {err}") from err
    out_dir = Path(out if out is not None else raw.get("output_dir", "cmlab_out"))
    return ExperimentConfig(cfg_mode, grid, init, evolve, dict(raw.get("ode", {})),
                            dict(raw.get("run", {})), out_dir, seed_val, raw)


def _opt(table, key, default, kind=None):
    val = table.get(key, default)
    try:
        return kind(val) if kind is not None else val
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad value for {key!r}: {val!r}") from err


def workers():
    """Pool size from CMLAB_THREADS (default 1)."""
    return ev.fft_workers()


def fan_out(fn, keys):
    """Evaluate fn(key) for each key on a bounded pool; results keyed and sorted."""
    keys = sorted(keys)
    with ThreadPoolExecutor(max_workers=workers()) as pool:
        results = list(pool.map(fn, keys))
    return dict(zip(keys, results))


# ---- artifacts -------------------------------------------------------------------


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path, rows):
    """Rows are dicts sharing the keys of the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if not rows:
            return path
        keys = list(rows[0])
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([_cell(r.get(k, "")) for k in keys])
    return path


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n")
    return path


def write_svg(path, curves, xlabel, ylabel, title="", logx=False, logy=False):
    """Line plot through matplotlib's SVG backend with fixed ids and no date.

    ``curves`` maps a label to (xs, ys). matplotlib is imported here so the
    numeric modes do not pay for it.
    """
    import matplotlib
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    with matplotlib.rc_context({"svg.hashsalt": "cmlab", "svg.fonttype": "path"}):
        fig = Figure(figsize=(6.0, 4.0))
        FigureCanvasSVG(fig)
        ax = fig.add_subplot()
        for label, (xs, ys) in curves.items():
            ax.plot(np.asarray(xs, float), np.asarray(ys, float), label=label)
        ax.set_xscale("log" if logx else "linear")
        ax.set_yscale("log" if logy else "linear")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend(fontsize="small")
        fig.tight_layout()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    return Path(path)


def write_snapshots(out_dir, samples, grid):
    """Raw little-endian complex128 fields plus an index table."""
    snap = Path(out_dir) / "snapshots"
    snap.mkdir(parents=True, exist_ok=True)
    index = []
    for i, smp in enumerate(samples):
        if smp.snapshot is None:
            continue
        name = f"sample_{i:05d}.bin"
        np.asarray(smp.snapshot, dtype="<c16").tofile(snap / name)
        index.append({"file": name, "t": smp.t, "n": grid.n, "box_len": grid.box_len,
                      "dtype": "complex128-le"})
    write_csv(snap / "index.csv", index)
    return index


# ---- checks ------------------------------------------------------------------------


def check(name, value, limit, kind="max"):
    """One machine-checkable line: value <= limit ('max'), >= limit ('min') or in a range."""
    if kind == "max":
        ok = value <= limit
    elif kind == "min":
        ok = value >= limit
    elif kind == "range":
        ok = limit[0] <= value <= limit[1]
    elif kind == "equal":
        ok = value == limit
    else:
        raise ValueError(kind)
    ok = bool(ok) and (not isinstance(value, float) or np.isfinite(value))
    return {"name": name, "value": value, "limit": limit, "kind": kind, "pass": ok}


def criterion(checks, **info):
    return {"pass": bool(checks) and all(c["pass"] for c in checks), "checks": checks, **info}


# ---- verify-identities -------------------------------------------------------------


SUITE_CRITERIA = {"operators": "operator_identities", "hilbert": "hilbert_calculus",
                  "kernels": "kernel_memberships"}


def _suite_rows(names, grid, seed):
    return [r for nm in names for r in su.run_suite(nm, grid, seed)]


def mode_verify_identities(cfg):
    run = cfg.run
    names = list(_opt(run, "suites", list(su.SUITES)))
    for nm in names:
        if nm not in su.SUITES:
            raise ConfigError(f"unknown suite {nm!r}")
    base = GridSpec(cfg.grid.n, cfg.grid.box_len, "line")
    rows = _suite_rows(names, base, cfg.seed)
    write_csv(cfg.output_dir / "identities.csv", [r.as_dict() for r in rows])
    decay = []
    if _opt(run, "box_doubling", True, bool):
        big = GridSpec(2 * base.n, 2 * base.box_len, "line")
        decay = su.box_decay(rows, _suite_rows(names, big, cfg.seed))
        write_csv(cfg.output_dir / "box_decay.csv", decay)
    criteria = {}
    for nm in names:
        checks = [check(f"{r.suite}: {r.name}", r.residual, r.limit) for r in rows
                  if r.suite.startswith(nm)]
        if nm == "operators" and decay:
            checks += [check(f"box doubling: {d['name']}", bool(d["pass"]), True, "equal")
                       for d in decay if d["suite"] == "operators"]
        criteria[SUITE_CRITERIA[nm]] = criterion(checks)
    return criteria


# ---- convergence -------------------------------------------------------------------


def _self_convergence(grid, v0, t_end, dts, scheme):
    """Differences between successive dt halvings and the observed order."""
    finals = [ev.GcmStepper(grid, dt, scheme).advance(v0, int(round(t_end / dt))) for dt in dts]
    diffs = [norm_l2(grid, np.asarray(finals[i] - finals[i + 1], complex)) for i in range(len(dts) - 1)]
    orders = [float(np.log2(diffs[i] / diffs[i + 1])) for i in range(len(diffs) - 1)]
    return diffs, orders


def mode_convergence(cfg):
    run = cfg.run
    out = cfg.output_dir
    dx = cfg.grid.box_len / cfg.grid.n
    boxes = [float(b) for b in _opt(run, "box_lens", [128.0, 256.0, 512.0])]
    ns = [int(n) for n in _opt(run, "n_values", [2048, 4096, 8192])]
    names = list(_opt(run, "suites", ["operators", "hilbert"]))
    box_rows, by_box = [], {}
    for L in boxes:
        g = GridSpec(int(round(L / dx)), L, "line")
        by_box[L] = _suite_rows(names, g, cfg.seed)
        box_rows += [r.as_dict() for r in by_box[L]]
    write_csv(out / "convergence_box.csv", box_rows)
    n_rows = []
    for n in ns:
        g = GridSpec(n, cfg.grid.box_len, "line")
        n_rows += [r.as_dict() for r in _suite_rows(names, g, cfg.seed)]
    write_csv(out / "convergence_n.csv", n_rows)

    checks = []
    for a, b in zip(boxes[:-1], boxes[1:]):
        for d in su.box_decay(by_box[a], by_box[b]):
            checks.append(check(f"box {a:g}->{b:g}: {d['name']}", bool(d["pass"]), True, "equal"))

    tg = GridSpec(int(_opt(run, "dt_n", 1024, int)), float(_opt(run, "dt_box", 64.0, float)), "torus")
    x = tg.x
    v0 = (1.0 + 0.5j * x) * np.exp(-x**2 / 8.0)
    dt0 = float(_opt(run, "dt0", 0.01, float))
    dts = [dt0 / 2**i for i in range(int(_opt(run, "dt_levels", 4, int)))]
    scheme = str(_opt(run, "scheme", "strang"))
    diffs, orders = _self_convergence(tg, v0, float(_opt(run, "t_end", 1.0, float)), dts, scheme)
    write_csv(out / "convergence_dt.csv",
              [{"dt": dts[i], "diff_to_half": diffs[i], "order": orders[i - 1] if i else float("nan")}
               for i in range(len(diffs))])
    expected = 2.0 if scheme == "strang" else 4.0
    checks.append(check(f"{scheme} self-convergence order", orders[-1],
                        (expected - 0.1, expected + 0.1), "range"))
    write_svg(out / "convergence_dt.svg", {scheme: (dts[:-1], diffs)}, "dt",
              "||u_dt - u_dt/2||", "time-step self-convergence", True, True)
    return {"convergence": criterion(checks)}


# ---- ode ---------------------------------------------------------------------------------


def _special_residual(L, s_values):
    """Largest relative gap between the vector field and d/ds of the special solution."""
    c = mo.special_c(L)
    k = np.arange(1, L + 1)
    p = mo.lambda_exponent(L)
    worst = 0.0
    for s in s_values:
        st = mo.special_solution(L, s)
        d = mo.rhs(st)
        scale = c[0] / s**2
        worst = max(worst,
                    float(np.abs(d["b"] + k * c / s ** (k + 1)).max() / scale),
                    float(np.abs(d["eta"]).max() / scale),
                    abs(d["lam"] + p * st.lam / s) / (p * st.lam / s))
    return worst


def mode_ode(cfg):
    o, out = cfg.ode, cfg.output_dir
    criteria = {}
    tasks = list(_opt(o, "tasks", ["exactness", "shooting"]))
    if "exactness" in tasks:
        s_values = [float(s) for s in _opt(o, "s_values", [10.0, 100.0, 1000.0])]
        rows, checks = [], []
        for L in range(1, int(_opt(o, "rhs_L_max", 6, int)) + 1):
            r = _special_residual(L, s_values)
            rows.append({"L": L, "kind": "rhs_residual", "value": r})
            checks.append(check(f"rhs residual at the special solution, L={L}", r, 1e-14))
        for L, ref in ((1, [2 / 3]), (2, [4 / 7, -4 / 49])):
            gap = float(np.abs(mo.special_c(L) - np.array(ref)).max())
            rows.append({"L": L, "kind": "c_recursion", "value": gap})
            checks.append(check(f"c_k recursion, L={L}", gap, 1e-14))
        for L in range(1, int(_opt(o, "eig_L_max", 8, int)) + 1):
            eu, evv = mo.eigenvalue_errors(L)
            npos = mo.positive_count(L)
            rows.append({"L": L, "kind": "eig_M_U", "value": eu})
            rows.append({"L": L, "kind": "eig_M_V", "value": evv})
            rows.append({"L": L, "kind": "positive_count", "value": npos})
            checks.append(check(f"M_U eigenvalues, L={L}", eu, 1e-10))
            checks.append(check(f"M_V eigenvalues, L={L}", evv, 1e-10))
            checks.append(check(f"positive eigenvalue count, L={L}", npos, 2 * L - 1, "equal"))
        write_csv(out / "ode_exactness.csv", rows)
        criteria["ode_exactness"] = criterion(checks)
    if "shooting" in tasks:
        s0 = float(_opt(o, "s0", 10.0, float))
        horizon = float(_opt(o, "horizon", 100.0, float))
        offset = float(_opt(o, "offset", 1e-3, float))
        res = mo.shoot_trapped(1, s0, horizon)
        target = mo.expected_spectra(1)[1][0]
        rows = [{"kind": "shooting", "xi": float(res["xi"][0]), "horizon": res["horizon"],
                 "exit_reason": res["exit_reason"] or "none", "exponent": float("nan"),
                 "r_squared": float("nan")}]
        checks = [check("trapping horizon / s0", res["horizon"], horizon, "min")]
        for sign in (1.0, -1.0):
            g = mo.exit_growth_exponent(1, s0, res["xi"], sign * offset)
            rows.append({"kind": f"offset {sign * offset:+g}", "xi": float(res["xi"][0] + sign * offset),
                         "horizon": g["s_exit"] / s0, "exit_reason": g["reason"],
                         "exponent": g["exponent"], "r_squared": g["r_squared"]})
            checks.append(check(f"exit growth exponent, offset {sign * offset:+g}", g["exponent"],
                                (0.9 * target, 1.1 * target), "range"))
        write_csv(out / "shooting.csv", rows)
        criteria["trapped_shooting"] = criterion(checks, target_exponent=target)
    if "trajectory" in tasks:
        L = int(_opt(o, "L", 2, int))
        s0 = float(_opt(o, "s0", 10.0, float))
        st = mo.special_solution(L, s0)
        tr = mo.integrate(st, s0 * float(_opt(o, "s_span", 1e6, float)),
                          n_out=int(_opt(o, "n_out", 200, int)))
        write_csv(out / f"trajectory_L{L}.csv",
                  [{"s": tr.s[i], "t": tr.t[i], "lambda": tr.lam[i], "gamma": tr.gamma[i],
                    **{f"b{k + 1}": tr.b[i, k] for k in range(L)},
                    **{f"eta{k + 1}": tr.eta[i, k] for k in range(L)}} for i in range(tr.s.size)])
        fit = fit_power_law(tr.s, tr.lam)
        expected = -mo.lambda_exponent(L)
        write_csv(out / f"rate_L{L}.csv", [{**fit.as_dict(), "expected": expected}])
        write_svg(out / f"trajectory_L{L}.svg", {"lambda(s)": (tr.s, tr.lam)}, "s", "lambda",
                  f"special solution, L={L}", True, True)
        criteria["special_rate"] = criterion(
            [check(f"lambda(s) exponent, L={L}", abs(fit.exponent / expected - 1), 0.01)])
    return criteria


# ---- fit-rate -------------------------------------------------------------------------------


def _rate_run(L, s0, pert, decades, n_out):
    st = mo.perturbed_special(L, s0, pert * np.ones(L), pert * np.ones(L))
    tr = mo.integrate(st, s0 * 10.0 ** (decades(L)), n_out=n_out)
    return tr, mo.rate_fits(tr, L)


def _closure(L, T, cd, ts):
    c = cd[0] * np.ones(L - 1)
    d = cd[1] * np.ones(L)
    lam_jet, gam_jet = mo.closed_form_jets(T, L, c, d, ts, L + 1)
    B, _, closure = mo.hierarchy_from_lambda_gamma(lam_jet, gam_jet, L)
    return float(np.max(closure / np.abs(B[:, 0]) ** (L + 1)))


def mode_fit_rate(cfg):
    o, out = cfg.ode, cfg.output_dir
    Ls = [int(L) for L in _opt(o, "L_values", [1, 2, 3])]
    s0 = float(_opt(o, "s0", 10.0, float))
    pert = float(_opt(o, "perturbation", 1e-10, float))
    extra = float(_opt(o, "extra_decades", 1.0, float))
    n_out = int(_opt(o, "n_out", 400, int))

    def decades(L):
        # far enough for the slowest L=3 transient to die out
        return 4 * L + extra

    results = fan_out(lambda L: _rate_run(L, s0, pert, decades, n_out), Ls)
    rows, checks, curves = [], [], {}
    for L in Ls:
        tr, rf = results[L]
        es = abs(rf["s_fit"].exponent / rf["expected_s"] - 1)
        et = abs(rf["t_fit"].exponent / rf["expected_t"] - 1)
        rows.append({"L": L, "s_exponent": rf["s_fit"].exponent, "s_expected": rf["expected_s"],
                     "s_rel_err": es, "t_exponent": rf["t_fit"].exponent, "t_expected": rf["expected_t"],
                     "t_rel_err": et, "T_estimate": rf["T"], "T_tail": rf["T_tail"],
                     "t_exponent_sensitivity": rf["t_exponent_sensitivity"],
                     "r2_s": rf["s_fit"].r_squared, "r2_t": rf["t_fit"].r_squared})
        checks.append(check(f"lambda(s) exponent, L={L}", es, 0.01))
        checks.append(check(f"lambda(t) exponent, L={L}", et, 0.02))
        write_csv(out / f"lambda_L{L}.csv", [{"s": tr.s[i], "t": tr.t[i], "lambda": tr.lam[i]}
                                             for i in range(tr.s.size)])
        curves[f"L={L}"] = (tr.s, tr.lam)
        T = 1.0
        ts = np.linspace(0.0, 0.9, 50)
        for cd in ((0.0, 0.0), tuple(_opt(o, "closure_cd", [0.2, 0.1]))):
            val = _closure(L, T, cd, ts)
            rows[-1][f"closure_c{cd[0]:g}_d{cd[1]:g}"] = val
            checks.append(check(f"recursion closure, L={L}, c={cd[0]:g}, d={cd[1]:g}", val, 1e-8))
    write_csv(out / "rates.csv", rows)
    write_svg(out / "rates.svg", curves, "s", "lambda", "near-special trajectories", True, True)
    return {"rate_reproduction": criterion(checks)}


# ---- evolve --------------------------------------------------------------------------------


def _chiral_check(cfg, ec):
    run = cfg.run
    g = GridSpec(cfg.grid.n, cfg.grid.box_len, "torus")
    amp = float(_opt(run, "chiral_amplitude", 1.0, float))
    k0 = float(_opt(run, "chiral_wavenumber", 2.0, float))
    width = float(_opt(run, "chiral_width", 2.0, float))
    u0 = pi_plus(g, amp * np.exp(1j * k0 * g.x - (g.x / width) ** 2))
    floor = cs.chirality_deficit(g, u0) / norm_l2(g, u0)
    ratios = []

    def on(smp):
        u = ev.gauge_inverse(g, smp.snapshot)
        ratios.append(cs.chirality_deficit(g, u) / norm_l2(g, u))

    ec2 = ev.EvolveConfig(**{**ec.__dict__, "keep_snapshots": True})
    ev.run(g, ev.gauge(g, u0), ec2, on_sample=on)
    return floor, ratios


def mode_evolve(cfg):
    g = GridSpec(cfg.grid.n, cfg.grid.box_len, "torus")
    out, ec = cfg.output_dir, cfg.evolve
    v0 = pr.initial_data(cfg.init, g)
    save = bool(_opt(cfg.run, "snapshots", True, bool))
    run_cfg = ev.EvolveConfig(**{**ec.__dict__, "keep_snapshots": save})
    traj = ev.run(g, v0, run_cfg)
    reps = [s.report for s in traj.samples]
    write_csv(out / "conserved.csv", [{**s.report.row(), **s.norms} for s in traj.samples])
    drift = cs.drift_table(reps, g, v0)
    rt = norm_l2(g, ev.gauge(g, ev.gauge_inverse(g, v0)) - v0) / norm_l2(g, v0)
    checks = [
        check("stop reason", traj.stop_reason, "t_max", "equal"),
        check("mass drift", drift["mass"], 1e-12),
        check("energy drift", drift["energy"], 1e-8),
        check("momentum drift", drift["momentum"], 1e-8),
        check("I1 drift", drift["I1"], 1e-6),
        check("I2 drift", drift["I2"], 1e-6),
        check("gauge round trip", rt, 1e-10),
    ]
    rows = [{"quantity": k, "max_relative_drift": v} for k, v in drift.items()]
    rows.append({"quantity": "gauge_round_trip", "max_relative_drift": rt})
    if _opt(cfg.run, "chiral", True, bool):
        floor, ratios = _chiral_check(cfg, ec)
        worst = max(ratios)
        rows.append({"quantity": "chirality_floor", "max_relative_drift": floor})
        rows.append({"quantity": "chirality_max", "max_relative_drift": worst})
        checks.append(check("chirality deficit / initial floor", worst / floor, 2.0))
    write_csv(out / "drift.csv", rows)
    if save:
        write_snapshots(out, traj.samples, g)
    t = [s.t for s in traj.samples]
    m0 = reps[0].mass
    write_svg(out / "conserved.svg",
              {"mass": (t, [abs(r.mass - m0) / m0 + 1e-18 for r in reps]),
               "energy": (t, [abs(r.energy_gauge / reps[0].energy_gauge - 1) + 1e-18 for r in reps])},
              "t", "relative drift", "conservation", False, True)
    return {"pde_conservation": criterion(checks, stop_reason=traj.stop_reason, dt=traj.dt)}


# ---- extract-run ----------------------------------------------------------------------------


def _tracking(cfg):
    g = GridSpec(cfg.grid.n, cfg.grid.box_len, "torus")
    out, run = cfg.output_dir, cfg.run
    if cfg.init is None:
        raise ConfigError("tracking needs an [init] section")
    v0 = pr.initial_data(cfg.init, g)
    p = cfg.init.params
    tr = ex.Tracker(g, p.L, (p.lam, p.gamma), delta_dec=float(_opt(run, "delta_dec", ex.DELTA_DEC, float)))
    traj = ev.run(g, v0, cfg.evolve, tracker=tr)
    S = traj.samples
    s = np.array([x.s for x in S])
    lam = np.array([x.params.lam for x in S])
    gam = np.array([x.params.gamma for x in S])
    b = np.array([x.params.b for x in S])
    eta = np.array([x.params.eta for x in S])
    bt = np.array([d.refined[0] for _, d in tr.history])
    res = ex.modulation_residuals(s, lam, gam, b, eta)
    mid = slice(2, len(S) - 2)
    gap = np.abs(b[mid, -1] - bt[mid]) / np.abs(b[mid, -1])
    rows = [{"t": S[i + 2].t, "s": res["s"][i], "lambda": res["lam"][i], "gamma": gam[i + 2],
             "b1": res["b1"][i], "eta1": eta[i + 2, 0], "b_refined": bt[i + 2],
             "lam_ratio": res["lam_ratio"][i], "gap": gap[i]} for i in range(res["s"].size)]
    write_csv(out / "modulation.csv", rows)
    lm = res["lam"]
    halved = np.nonzero(lm <= 0.5 * lm[0])[0]
    ok = halved.size > 0
    end = int(halved[0]) + 1 if ok else lm.size
    checks = [check("lambda halves inside the run", bool(ok), True, "equal"),
              check("max |lam_s/lam + b_1| / b_1 over the window", float(res["lam_ratio"][:end].max()), 0.1),
              check("max |b_1 - b~_1| / b_1 over the window", float(gap[:end].max()), 0.2)]
    write_svg(out / "tracking.svg", {"|lam_s/lam + b1|/b1": (res["s"], res["lam_ratio"]),
                                     "|b1 - b~1|/b1": (res["s"], gap)},
              "s", "ratio", "modulation tracking", False, True)
    info = {"window_samples": end, "stop_reason": traj.stop_reason,
            "median_lam_ratio": float(np.median(res["lam_ratio"][:end])),
            "median_gap": float(np.median(gap[:end]))}
    return {"modulation_tracking": criterion(checks, **info)}


def _scaling_run(cfg, lam0):
    run = cfg.run
    L = 1
    b0 = lam0 ** float(_opt(run, "b_power", 1.5, float))
    g = GridSpec(int(_opt(run, "n", 8192, int)), float(_opt(run, "box_per_lambda", 256.0, float)) * lam0,
                 "torus")
    init = pr.InitConfig(pr.ModParams(L, lam0, 0.0, [b0], [0.0]),
                         delta_ring=float(_opt(run, "delta_ring", 2.0, float)))
    v0 = pr.initial_data(init, g)
    dd = float(_opt(run, "delta_dec", 2.0, float))
    dec = ex.decompose(g, v0, L, (lam0, 0.0), delta_dec=dd)
    norms = dict(dec.residual_norms)
    dt = float(_opt(run, "dt_factor", 4.0, float)) * g.dx**2 / np.pi**2
    t_max = float(_opt(run, "s_final", 2.0, float)) * lam0**2
    ec = ev.EvolveConfig(dt0=dt, t_max=t_max, sample_stride=max(1, int(t_max / dt / 20)),
                         scheme=str(_opt(run, "scheme", "yoshida4")),
                         extended=bool(_opt(run, "extended", True, bool)),
                         min_lambda=1e-3, tail_tol=1e-6, keep_snapshots=True, min_dt=dt / 10)
    tr = ex.Tracker(g, L, (lam0, 0.0), delta_dec=dd, keep=False)
    traj = ev.run(g, v0, ec, tracker=tr)
    k_max = int(_opt(run, "k_max", 2, int))
    samples = []
    for smp in traj.samples:
        lam, gam = smp.params.lam, smp.params.gamma
        # the torus frame makes ||w_k|| lam^-k equal to ||D~_v^k v|| exactly
        yg, w = ex.renormalize(g, smp.snapshot, lam, gam, "torus")
        wk = ev.nonlinear_variables(yg, w, k_max)
        samples.append({"lambda0": lam0, "t": smp.t, "s": smp.s, "lambda": lam,
                        **{f"w{k + 1}_scaled": norm_l2(yg, wk[k]) * lam ** -(k + 1) for k in range(k_max)}})
    return {"lam": dec.params.lam, "b": float(dec.params.b[0]), "norms": norms, "samples": samples,
            "stop_reason": traj.stop_reason}


def _scaling(cfg):
    run, out = cfg.run, cfg.output_dir
    lams = [float(x) for x in _opt(run, "lambda0", [0.5, 0.25, 0.125])]
    res = fan_out(lambda lam0: _scaling_run(cfg, lam0), lams)
    order = sorted(lams, reverse=True)
    rows, wrows, checks = [], [], []
    k_max = int(_opt(run, "k_max", 2, int))
    for lam0 in order:
        r = res[lam0]
        drift = {}
        for k in range(1, k_max + 1):
            vals = np.array([s[f"w{k}_scaled"] for s in r["samples"]])
            drift[k] = float(np.abs(vals / vals[0] - 1).max())
            checks.append(check(f"||w_{k}|| lam^-{k} constant, lambda0={lam0:g}", drift[k], 1e-5))
        rows.append({"lambda0": lam0, "lambda": r["lam"], "b1": r["b"],
                     "eps_hat_H1": r["norms"]["eps_hat_H1"], "eps1_H1": r["norms"]["eps1_H1"],
                     **{f"w{k}_drift": drift[k] for k in drift}, "stop_reason": r["stop_reason"]})
        wrows += r["samples"]
    lam = np.array([r["lambda"] for r in rows])
    s_hat = loglog_slope(lam, [r["eps_hat_H1"] for r in rows])
    s_one = loglog_slope(lam**2, [r["eps1_H1"] for r in rows])
    checks = [check("slope of ||eps_hat||_H1 against lambda", s_hat, (0.85, 1.15), "range"),
              check("slope of ||eps_1||_H1 against lambda^2", s_one, (0.85, 1.15), "range")] + checks
    write_csv(out / "scaling.csv", rows)
    write_csv(out / "wk_scaled.csv", wrows)
    write_svg(out / "scaling.svg", {"||eps_hat||_H1": (lam, [r["eps_hat_H1"] for r in rows]),
                                    "||eps_1||_H1": (lam, [r["eps1_H1"] for r in rows])},
              "lambda", "norm", "radiation norms against scale", True, True)
    return {"scaling_sweeps": criterion(checks, slopes=[s_hat, s_one])}


def mode_extract_run(cfg):
    task = str(_opt(cfg.run, "task", "tracking"))
    if task == "tracking":
        return _tracking(cfg)
    if task == "scaling":
        return _scaling(cfg)
    raise ConfigError(f"unknown extract-run task {task!r}")


HANDLERS = {
    "verify-identities": mode_verify_identities,
    "convergence": mode_convergence,
    "ode": mode_ode,
    "fit-rate": mode_fit_rate,
    "evolve": mode_evolve,
    "extract-run": mode_extract_run,
}


def run_mode(cfg):
    """Run one experiment, write its artifacts and return the exit status."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg.seed)
    try:
        criteria = HANDLERS[cfg.mode](cfg)
        error = None
    except ex.ExtractionError as err:
        criteria, error = {}, f"extraction failed: {err}"
    summary = {"mode": cfg.mode, "seed": cfg.seed, "config_hash": cfg.digest(),
               "criteria": criteria, "error": error,
               "pass": error is None and bool(criteria) and all(c["pass"] for c in criteria.values())}
    write_json(cfg.output_dir / "summary.json", summary)
    return EXIT_OK if summary["pass"] else EXIT_FAIL


def build_parser():
    ap = argparse.ArgumentParser(prog="cmlab", description=__doc__.strip().splitlines()[0])
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--out", default=None, help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, default=None, help="seed for randomized test fields")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.mode, args.out, args.seed)
        status = run_mode(cfg)
    except ConfigError as err:
        print(f"cmlab: {err}", file=sys.stderr)
        return EXIT_CONFIG
    summary = json.loads((cfg.output_dir / "summary.json").read_text())
    for name, crit in summary["criteria"].items():
        print(f"{name}: {'PASS' if crit['pass'] else 'FAIL'}")
    if summary["error"]:
        print(f"error: {summary['error']}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
