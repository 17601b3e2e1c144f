"""Configuration, experiment drivers and CSV output for the command line.

Configs are flat ``key = value`` text files. Complex numbers are written
``re,im``; blank lines and lines starting with ``#`` are ignored. Keys:

    model          dephasing | dissipative
    omega, Omega, g, gamma, tau, deltaE            (dephasing)
    Omega, g, gamma, tau, alpha, deltaE2, deltaEplus, measure_up
                                                   (dissipative)
    gamma_tau      alternative to gamma (gamma = gamma_tau / tau)
    tau            a number, or ``optimal`` for the dephasing model
    initial_state  up | down | mixed | plusx | explicit
    rho_uu, rho_ud, rho_dd                         (explicit state)
    n_steps, seed
    axis1..axis3   ``name min max count [lin|log]`` (sweep only)
    metric         comma-separated sweep metrics
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable

import numpy as np

from . import closedform as cf
from .core import RHO_DOWN, RHO_UP, UP, is_density
from .dephasing import (
    DephasingParams,
    iterate_dephasing,
    joint_oracle_dephasing,
    optimal_tau,
    rhoN_dephasing_closed,
)
from .dissipative import (
    DissipativeParams,
    build_projected_map,
    iterate,
    joint_oracle_dissipative,
    projected_map_from_joint,
    step_dissipative,
)

RUN_COLUMNS = (
    "n",
    "trace",
    "purity",
    "fid_target",
    "rho_uu_re",
    "rho_ud_re",
    "rho_ud_im",
    "rho_dd_re",
)
SWEEP_AXES = ("gamma_tau", "alpha_re", "alpha_im", "tau", "n")
SWEEP_METRICS = ("max_fid_u1", "argmax_n", "final_purity", "yield", "fid_u1")
MAX_GRID = 10**6
CLOSED_CHECK_MAX_N = 12
DEFAULT_TOL = 1e-8

_DEPHASING_KEYS = {"omega", "Omega", "g", "gamma", "tau", "deltaE"}
_DISSIPATIVE_KEYS = {
    "Omega",
    "g",
    "gamma",
    "tau",
    "alpha",
    "deltaE2",
    "deltaEplus",
    "measure_up",
}
_OTHER_KEYS = {
    "model",
    "gamma_tau",
    "initial_state",
    "rho_uu",
    "rho_ud",
    "rho_dd",
    "n_steps",
    "seed",
    "metric",
    "axis1",
    "axis2",
    "axis3",
}


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_complex(text: str) -> complex:
    """``re,im`` or a plain real; ``inf`` is accepted for alpha."""
    parts = [t.strip() for t in str(text).split(",")]
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise ConfigError(f"cannot parse complex value {text!r}")


def parse_kv_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def load_config_text(path: str | None) -> str:
    if path is None:
        return default_config_text()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def default_config_text() -> str:
    return resources.files("qpurify").joinpath("data/default.cfg").read_text(encoding="utf-8")


def merge_overrides(cfg: dict, overrides) -> dict:
    out = dict(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        out[k] = v
    return out


@dataclass(frozen=True)
class RunConfig:
    model: str
    params: DephasingParams | DissipativeParams
    rho0: np.ndarray
    n_steps: int
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False)


def _float(cfg: dict, key: str, default=None) -> float:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: not a number: {cfg[key]!r}") from None


def _int(cfg: dict, key: str, default=None) -> int:
    v = _float(cfg, key, default)
    if v != int(v):
        raise ConfigError(f"{key}: not an integer")
    return int(v)


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean {text!r}")


def initial_state(cfg: dict) -> np.ndarray:
    name = cfg.get("initial_state", "mixed").strip().lower()
    if name == "up":
        rho = RHO_UP.copy()
    elif name == "down":
        rho = RHO_DOWN.copy()
    elif name == "mixed":
        rho = np.eye(2, dtype=complex) / 2
    elif name == "plusx":
        rho = np.full((2, 2), 0.5, dtype=complex)
    elif name == "explicit":
        uu = parse_complex(cfg.get("rho_uu", "")).real
        dd = parse_complex(cfg.get("rho_dd", "")).real
        ud = parse_complex(cfg.get("rho_ud", "0"))
        rho = np.array([[uu, ud], [np.conj(ud), dd]], dtype=complex)
    else:
        raise ConfigError(f"unknown initial_state {name!r}")
    if not is_density(rho):
        raise ConfigError("initial state is not a density matrix")
    return rho


def _gamma(cfg: dict, tau: float) -> float:
    if "gamma_tau" in cfg and "gamma" in cfg:
        raise ConfigError("give gamma or gamma_tau, not both")
    if "gamma_tau" in cfg:
        return _float(cfg, "gamma_tau") / tau
    return _float(cfg, "gamma", 0.0)


def build_params(cfg: dict):
    model = cfg.get("model", "dissipative").strip().lower()
    try:
        if model == "dephasing":
            omega = _float(cfg, "omega")
            Omega = _float(cfg, "Omega")
            g = _float(cfg, "g")
            if cfg.get("tau", "").strip().lower() == "optimal":
                probe = DephasingParams(omega, Omega, g, 0.0, 1.0)
                tau = optimal_tau(probe)[0]
            else:
                tau = _float(cfg, "tau")
            return model, DephasingParams(
                omega, Omega, g, _gamma(cfg, tau), tau, _float(cfg, "deltaE", 0.0)
            )
        if model == "dissipative":
            tau = _float(cfg, "tau")
            alpha_txt = cfg.get("alpha", "1")
            measure_up = _bool(cfg.get("measure_up", "false"))
            if alpha_txt.strip().lower() == "inf":
                measure_up, alpha = True, 1.0
            else:
                alpha = parse_complex(alpha_txt)
            return model, DissipativeParams(
                Omega=_float(cfg, "Omega"),
                g=_float(cfg, "g"),
                gamma=_gamma(cfg, tau),
                tau=tau,
                alpha=alpha,
                deltaE2=_float(cfg, "deltaE2", 0.0),
                deltaEplus=_float(cfg, "deltaEplus", 0.0),
                measure_up=measure_up,
            )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    raise ConfigError(f"unknown model {model!r}")


def build_run_config(cfg: dict) -> RunConfig:
    model = cfg.get("model", "dissipative").strip().lower()
    allowed = _OTHER_KEYS | (_DEPHASING_KEYS if model == "dephasing" else _DISSIPATIVE_KEYS)
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) for model {model}: {', '.join(unknown)}")
    model, params = build_params(cfg)
    n = _int(cfg, "n_steps", 20)
    if n < 0:
        raise ConfigError("n_steps must be >= 0")
    return RunConfig(model, params, initial_state(cfg), n, _int(cfg, "seed", 0), dict(cfg))


def trajectory(rc: RunConfig, n: int | None = None):
    n = rc.n_steps if n is None else n
    if rc.model == "dephasing":
        return iterate_dephasing(rc.rho0, rc.params, n, target=UP)
    return iterate(rc.rho0, rc.params, n)


def run_rows(rc: RunConfig) -> list:
    rows = []
    for s in trajectory(rc).steps:
        r = s.rho
        rows.append(
            (s.n, s.trace, s.purity, s.fid_u1, r[0, 0].real, r[0, 1].real, r[0, 1].imag, r[1, 1].real)
        )
    return rows


def write_csv(header, rows, stream) -> None:
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(str(v) if isinstance(v, (int, np.integer)) else fmt(v) for v in row))
        stream.write("\n")


def run_csv(rc: RunConfig) -> str:
    buf = io.StringIO()
    write_csv(RUN_COLUMNS, run_rows(rc), buf)
    return buf.getvalue()


@dataclass(frozen=True)
class CheckResult:
    name: str
    deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.deviation < self.tol)


def _maxdev(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def check(rc: RunConfig, tol: float = DEFAULT_TOL) -> list:
    """Oracle-equivalence suites for the configured model.

    Unnormalized states are compared, so success probabilities are covered.
    The closed-form legs run up to ``min(n_steps, 12)``.
    """
    p, rho0, n = rc.params, rc.rho0, rc.n_steps
    traj = trajectory(rc)
    out = []
    if rc.model == "dephasing":
        dev_ci = dev_ji = 0.0
        for s in traj.steps:
            dev_ci = max(dev_ci, _maxdev(rhoN_dephasing_closed(rho0, p, s.n), s.rho_unnormalized))
        for k in range(min(n, CLOSED_CHECK_MAX_N * 4) + 1):
            dev_ji = max(dev_ji, _maxdev(joint_oracle_dephasing(rho0, p, k), traj[k].rho_unnormalized))
        out.append(CheckResult("dephasing closed form vs iteration", dev_ci, tol))
        out.append(CheckResult("dephasing joint 4x4 vs iteration", dev_ji, tol))
        return out

    pm, pj = build_projected_map(p), projected_map_from_joint(p)
    dev_ops = max(_maxdev(getattr(pm, k), getattr(pj, k)) for k in ("v", "c0", "c1", "c2"))
    out.append(CheckResult("projected operators vs joint sandwich", dev_ops, tol))
    dev_step = _maxdev(step_dissipative(rho0, pm), joint_oracle_dissipative(rho0, p, 1))
    out.append(CheckResult("one step vs joint 4x4", dev_step, tol))
    dev_ji = 0.0
    for k in range(n + 1):
        dev_ji = max(dev_ji, _maxdev(joint_oracle_dissipative(rho0, p, k), traj[k].rho_unnormalized))
    out.append(CheckResult("joint 4x4 vs iteration", dev_ji, tol))

    nc = min(n, CLOSED_CHECK_MAX_N)
    closed = cf.rhoN_closed_series(rho0, p, nc)
    dev_cl = max(_maxdev(closed[k], traj[k].rho_unnormalized) for k in range(nc + 1))
    out.append(CheckResult("closed-form rho_N vs iteration", dev_cl, tol))

    along = np.array([[s.F, s.G] for s in traj.steps[: nc + 1]])
    try:
        eig = cf.eig2(pm.v)
    except cf.NearDegenerate:
        rec = cf.fg_by_direct_recursion(p, rho0, nc)
        dev_fg = _maxdev(np.column_stack([rec.F, rec.G]), along)
        out.append(CheckResult("F,G recursion vs trajectory", dev_fg, tol))
        return out
    t = cf.tensors(eig, p, rho0)
    rec = cf.fg_by_recursion(t, nc)
    clo = cf.fg_closed_series(t, nc)
    rec_arr = np.column_stack([rec.F, rec.G])
    out.append(CheckResult("F,G recursion vs trajectory", _maxdev(rec_arr, along), tol))
    out.append(
        CheckResult("F,G closed sum vs recursion", _maxdev(np.column_stack([clo.F, clo.G]), rec_arr), tol)
    )
    return out


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int
    spacing: str = "lin"

    def values(self) -> np.ndarray:
        if self.name == "n":
            return np.round(self._raw()).astype(int)
        return self._raw()

    def _raw(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)


def parse_axis(text: str) -> Axis:
    parts = text.split()
    if len(parts) not in (4, 5):
        raise ConfigError(f"axis {text!r}: expected 'name min max count [lin|log]'")
    name = parts[0]
    if name not in SWEEP_AXES:
        raise ConfigError(f"unknown axis {name!r}; choose from {', '.join(SWEEP_AXES)}")
    try:
        lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise ConfigError(f"axis {text!r}: bad numbers") from None
    spacing = parts[4] if len(parts) == 5 else "lin"
    if spacing not in ("lin", "log"):
        raise ConfigError("spacing must be lin or log")
    if count < 2:
        raise ConfigError("each axis needs count >= 2")
    if spacing == "log" and (lo <= 0 or hi <= 0):
        raise ConfigError("log axis needs positive bounds")
    if name == "n" and (lo < 0 or hi < 0):
        raise ConfigError("n axis must be nonnegative")
    return Axis(name, lo, hi, count, spacing)


@dataclass(frozen=True)
class SweepConfig:
    base: dict
    axes: tuple
    metrics: tuple

    def grid_size(self) -> int:
        return math.prod(a.count for a in self.axes)


def build_sweep_config(cfg: dict) -> SweepConfig:
    axes = tuple(parse_axis(cfg[k]) for k in ("axis1", "axis2", "axis3") if k in cfg)
    if not axes:
        raise ConfigError("sweep needs at least axis1")
    names = [a.name for a in axes]
    if len(set(names)) != len(names):
        raise ConfigError("repeated sweep axis")
    metrics = tuple(m.strip() for m in cfg.get("metric", "max_fid_u1").split(",") if m.strip())
    bad = [m for m in metrics if m not in SWEEP_METRICS]
    if bad or not metrics:
        raise ConfigError(f"unknown metric(s) {bad}; choose from {', '.join(SWEEP_METRICS)}")
    sc = SweepConfig(dict(cfg), axes, metrics)
    if sc.grid_size() > MAX_GRID:
        raise ConfigError(f"grid of {sc.grid_size()} points exceeds {MAX_GRID}")
    base = {k: v for k, v in cfg.items() if k not in ("axis1", "axis2", "axis3", "metric")}
    build_run_config(base)
    return SweepConfig(base, axes, metrics)


def _apply_point(base: dict, names, values) -> dict:
    cfg = dict(base)
    for name, v in zip(names, values):
        if name == "n":
            cfg["n_steps"] = str(int(v))
        elif name == "tau":
            cfg["tau"] = fmt(v)
        elif name == "gamma_tau":
            cfg.pop("gamma", None)
            cfg["gamma_tau"] = fmt(v)
        elif name in ("alpha_re", "alpha_im"):
            a = parse_complex(cfg.get("alpha", "1"))
            a = complex(v, a.imag) if name == "alpha_re" else complex(a.real, v)
            cfg["alpha"] = f"{fmt(a.real)},{fmt(a.imag)}"
    return cfg


def _metrics_for(args) -> tuple:
    base, names, values, metrics = args
    rc = build_run_config(_apply_point(base, names, values))
    traj = trajectory(rc)
    fid = traj.column("fid_u1")
    out = []
    for m in metrics:
        if m == "max_fid_u1":
            out.append(float(np.nanmax(fid)) if np.any(np.isfinite(fid)) else math.nan)
        elif m == "argmax_n":
            out.append(int(np.nanargmax(fid)) if np.any(np.isfinite(fid)) else -1)
        elif m == "final_purity":
            out.append(traj.final.purity)
        elif m == "yield":
            out.append(traj.final.trace)
        elif m == "fid_u1":
            out.append(traj.final.fid_u1)
    return tuple(out)


def sweep_rows(sc: SweepConfig, jobs: int = 1, mapper: Callable | None = None) -> list:
    """One row per grid point, in lexicographic order of the axis indices."""
    names = [a.name for a in sc.axes]
    grids = [a.values() for a in sc.axes]
    points = list(np.array(np.meshgrid(*grids, indexing="ij")).reshape(len(grids), -1).T)
    points = [tuple(p) for p in points]
    tasks = [(sc.base, names, p, sc.metrics) for p in points]
    if mapper is not None:
        results = list(mapper(_metrics_for, tasks))
    elif jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_metrics_for, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_metrics_for(t) for t in tasks]
    rows = []
    for p, res in zip(points, results):
        vals = [int(v) if n == "n" else float(v) for n, v in zip(names, p)]
        rows.append(tuple(vals) + res)
    return rows


def sweep_csv(sc: SweepConfig, jobs: int = 1) -> str:
    buf = io.StringIO()
    header = [a.name for a in sc.axes] + list(sc.metrics)
    write_csv(header, sweep_rows(sc, jobs), buf)
    return buf.getvalue()


@dataclass(frozen=True)
class IdentityReport:
    trials: int
    max_rel_dev: float
    tol: float
    rows: tuple

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_dev < self.tol)


def _random_points(rng: np.random.Generator, m: int, min_sep: float = 1e-2) -> list:
    """``m`` distinct points in the unit disc, pairwise separated by ``min_sep``."""
    pts: list = []
    while len(pts) < m:
        r = math.sqrt(rng.random())
        z = r * complex(math.cos(2 * math.pi * rng.random()), math.sin(2 * math.pi * rng.random()))
        if all(abs(z - w) > min_sep for w in pts):
            pts.append(z)
    return pts


def identity_test(
    l_max: int = 4, k_max: int = 15, trials: int = 100, seed: int = 0, tol: float = DEFAULT_TOL, points=None
) -> IdentityReport:
    """Closed against brute nested sums on seeded random points.

    With explicit ``points`` a single case with l = len(points) - 1 and
    k = k_max is evaluated instead.
    """
    if not (0 <= l_max <= cf.NESTED_BRUTE_MAX_L) or not (0 <= k_max <= cf.NESTED_BRUTE_MAX_K):
        raise ConfigError(f"need l_max <= {cf.NESTED_BRUTE_MAX_L}, k_max <= {cf.NESTED_BRUTE_MAX_K}")
    if k_max < l_max:
        raise ConfigError("need k_max >= l_max")
    cases = []
    if points is not None:
        cases.append((list(points), k_max))
    else:
        if trials < 1:
            raise ConfigError("trials must be >= 1")
        rng = np.random.default_rng(seed)
        for _ in range(trials):
            ell = int(rng.integers(0, l_max + 1))
            k = int(rng.integers(ell, k_max + 1))
            cases.append((_random_points(rng, ell + 1), k))
    rows = []
    worst = 0.0
    for xs, k in cases:
        b = cf.nested_sum_brute(xs, k)
        c = cf.nested_sum_closed(xs, k)
        dev = abs(c - b) / max(abs(b), 1e-300) if b != 0 else abs(c)
        worst = max(worst, dev)
        rows.append((len(xs) - 1, k, b, c, dev))
    return IdentityReport(len(cases), worst, tol, tuple(rows))
