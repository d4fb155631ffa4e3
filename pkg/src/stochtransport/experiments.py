"""Experiment drivers: wire configurations to the library and emit artifacts.

Each runner simulates a Monte Carlo ensemble, evaluates the checks that make
sense for its experiment kind, and writes CSV artifacts plus a JSON manifest
into the output directory.  Runs are deterministic: the same (config, seed)
produces byte-identical CSV files regardless of thread count, because paths
are keyed by path_id and reductions happen in a fixed order.
"""

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, GridError
from .flow import backward_ensemble, forward_ensemble
from .grid import TimeGrid
from .kernels import HermiteSpec
from .malliavin import (
    density_bound_check,
    density_report,
    dy_norm_ensemble,
    dz_norm_ensemble,
    mt_diagnostic,
)
from .noise import lattice_covariance, lattice_variance, simulate_ensemble, simulate_hermite
from .presets import drift_preset, u0_preset
from .rv import EpsilonSchedule, _eps_steps, qv_certificate
from .transport import TestFunction, weak_form_residual
from .wiener import generate, generate_increments

KINDS = (
    "noise-stats",
    "qv",
    "flow",
    "transport-weakform",
    "malliavin",
    "density",
    "bound-check",
)

_MIN_PATHS = {"qv": 100, "density": 1000, "bound-check": 100}


@dataclass
class ExperimentConfig:
    """Everything a run needs; validated by validate() before execution."""

    kind: str
    q: int = 1
    H: float = 0.7
    T: float = 1.0
    n: int = 1024
    drift: str = "zero"
    drift_params: dict = field(default_factory=dict)
    u0: str = "identity"
    u0_params: dict = field(default_factory=dict)
    paths: int = 200
    seed: int = 20260818
    eps_schedule: list | None = None
    s: float = 0.0
    t: float | None = None
    x0: float = 0.0
    dx: float = 2.0**-8
    mollifier_eps: float = 2.0**-6
    threads: int = 0
    out_dir: str = "runs"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise DomainError(f"unknown config fields: {', '.join(unknown)}")
        if "kind" not in data:
            raise DomainError("config must set 'kind'")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def t_end(self) -> float:
        return self.T if self.t is None else self.t


def validate(config: ExperimentConfig) -> list[str]:
    """Return human-readable diagnostics; empty means the config is runnable."""
    diags = []
    if config.kind not in KINDS:
        diags.append(f"unknown experiment kind {config.kind!r}; "
                     f"choose from {', '.join(KINDS)}")
    if config.q not in (1, 2):
        diags.append(f"unsupported noise order q={config.q}: exact simulation "
                     "covers q in {1, 2}")
    if not 0.5 < config.H < 1.0:
        diags.append(f"H must lie in (1/2, 1), got {config.H}")
    if config.T <= 0:
        diags.append(f"T must be positive, got {config.T}")
    if config.n < 2:
        diags.append(f"n must be at least 2, got {config.n}")
    floor = _MIN_PATHS.get(config.kind, 1)
    if config.paths < floor:
        diags.append(f"kind {config.kind!r} needs at least {floor} paths, "
                     f"got {config.paths}")
    if not 0 <= config.seed < 2**64:
        diags.append("seed must fit in an unsigned 64-bit integer")
    if config.threads < 0:
        diags.append("threads must be >= 0 (0 selects hardware parallelism)")
    try:
        drift_preset(config.drift, **config.drift_params)
    except DomainError as exc:
        diags.append(str(exc))
    try:
        u0_preset(config.u0, **config.u0_params)
    except DomainError as exc:
        diags.append(str(exc))
    if not np.isfinite(config.x0):
        diags.append("x0 must be finite")
    if config.dx <= 0:
        diags.append("dx must be positive")

    if config.T <= 0 or config.n < 2:
        return diags  # grid-dependent checks below would be meaningless
    grid = TimeGrid(T=config.T, n=config.n)
    if config.eps_schedule is not None:
        try:
            sched = EpsilonSchedule(np.asarray(config.eps_schedule, dtype=float))
            for e in sched.values:
                _eps_steps(grid, float(e))
        except (DomainError, GridError) as exc:
            diags.append(f"bad eps schedule: {exc}")
        except Exception as exc:  # ResolutionError and friends
            diags.append(f"bad eps schedule: {exc}")
    if config.kind == "transport-weakform":
        try:
            _eps_steps(grid, config.mollifier_eps)
        except Exception as exc:
            diags.append(f"mollifier width: {exc}")
    t_end = config.t_end
    if not 0.0 <= config.s < t_end <= config.T:
        diags.append(f"need 0 <= s < t <= T, got s={config.s}, t={t_end}, "
                     f"T={config.T}")
    else:
        for label, value in (("s", config.s), ("t", t_end)):
            try:
                grid.index_of(value)
            except GridError:
                diags.append(f"{label}={value} does not lie on the time grid")
    return diags


@dataclass
class RunManifest:
    """Record of one run: config echo, checks performed, files written."""

    kind: str
    config: dict
    config_hash: str
    version: str
    started_utc: str
    wall_clock_s: float
    checks: list
    files: list
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def summary_lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c["passed"] else "FAIL"
            out.append(f"[{tag}] {c['name']}: value={c['value']:.6g} "
                       f"threshold={c['threshold']:.6g} ({c['detail']})")
        return out


def _config_hash(config: ExperimentConfig) -> str:
    """Hash of the experiment identity.

    threads and out_dir are execution plumbing with no effect on the numbers,
    so they stay out of the hash: the same experiment run on a different
    machine or thread count produces byte-identical CSV artifacts.
    """
    payload = {k: v for k, v in config.to_dict().items()
               if k not in ("threads", "out_dir")}
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _check(name: str, passed: bool, value: float, threshold: float,
           detail: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "value": float(value),
            "threshold": float(threshold), "detail": detail}


def _write_csv(path: Path, config: ExperimentConfig, columns: list[str],
               rows) -> None:
    lines = [
        f"# stochtransport {__version__}",
        f"# kind: {config.kind}",
        f"# config-hash: {_config_hash(config)}",
        f"# seed: {config.seed}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _thread_count(config: ExperimentConfig) -> int:
    return config.threads if config.threads > 0 else (os.cpu_count() or 1)


def _simulate_blocks(grid: TimeGrid, spec: HermiteSpec, seed: int, paths: int,
                     threads: int) -> np.ndarray:
    """Threaded ensemble simulation with a deterministic path order."""
    ids = np.arange(paths)
    if threads <= 1 or paths < 4 * threads:
        return simulate_ensemble(grid, spec, seed, ids)
    blocks = np.array_split(ids, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(
            lambda blk: simulate_ensemble(grid, spec, seed, blk), blocks))
    return np.vstack(parts)


# ---------------------------------------------------------------------------
# runners


def _run_noise_stats(config, grid, spec, out, checks, files):
    z = _simulate_blocks(grid, spec, config.seed, config.paths,
                         _thread_count(config))
    probe_idx = np.unique(np.round(np.linspace(0, grid.n, 9)).astype(int))[1:]
    times = grid.points[probe_idx]
    rows = []
    worst_mean = worst_var = 0.0
    for k, t in zip(probe_idx, times):
        x = z[:, k]
        mean, var = float(np.mean(x)), float(np.var(x, ddof=1))
        se_mean = float(np.std(x, ddof=1)) / np.sqrt(x.size)
        m4 = float(np.mean((x - mean) ** 4))
        se_var = np.sqrt(max(m4 - var**2, 1e-300) / x.size)
        lat = lattice_variance(grid, spec, float(t))
        z_mean = mean / se_mean
        z_var = (var - lat) / se_var
        worst_mean = max(worst_mean, abs(z_mean))
        worst_var = max(worst_var, abs(z_var))
        rows.append((t, mean, var, lat, float(t) ** (2 * spec.H), z_mean, z_var))
    _write_csv(out / "stats.csv", config,
               ["t", "sample_mean", "sample_var", "lattice_var",
                "continuum_var", "z_mean", "z_var"], rows)
    files.append("stats.csv")

    quarter_idx = probe_idx[1::2]  # T/4, T/2, 3T/4, T
    cov_rows = []
    worst_cov = 0.0
    for i, ki in enumerate(quarter_idx):
        for kj in quarter_idx[i:]:
            xi, xj = z[:, ki], z[:, kj]
            prod = (xi - xi.mean()) * (xj - xj.mean())
            sample = float(np.mean(prod))
            se = float(np.std(prod, ddof=1)) / np.sqrt(prod.size)
            lat = lattice_covariance(grid, spec, grid.points[ki],
                                     grid.points[kj])
            zc = (sample - lat) / se
            worst_cov = max(worst_cov, abs(zc))
            cov_rows.append((grid.points[ki], grid.points[kj], sample, lat, zc))
    _write_csv(out / "covariance.csv", config,
               ["s", "t", "sample_cov", "lattice_cov", "z"], cov_rows)
    files.append("covariance.csv")

    checks.append(_check("mean-zero", worst_mean <= 3.0, worst_mean, 3.0,
                         "max |z| of the sample mean over 8 probe times"))
    checks.append(_check("variance-lattice", worst_var <= 3.0, worst_var, 3.0,
                         "max |z| of sample vs lattice variance"))
    checks.append(_check("covariance-lattice", worst_cov <= 3.0, worst_cov, 3.0,
                         "max |z| over the probe-time covariance grid"))


def _run_qv(config, grid, spec, out, checks, files):
    z = _simulate_blocks(grid, spec, config.seed, config.paths,
                         _thread_count(config))
    if config.eps_schedule is not None:
        schedule = EpsilonSchedule(np.asarray(config.eps_schedule, dtype=float))
    else:
        schedule = EpsilonSchedule.dyadic(grid, 3, 7)
    rep = qv_certificate(z, grid, config.H, schedule, t=config.t_end)
    _write_csv(out / "qv.csv", config, ["eps", "mean_bracket", "stderr"],
               rep.rows())
    files.append("qv.csv")
    checks.append(_check("qv-slope", rep.passed, rep.slope, rep.target,
                         "fitted log-log decay slope; pass iff within 0.1 of "
                         "2H-1 and the bracket decreases"))


def _run_flow(config, grid, spec, out, checks, files):
    b = drift_preset(config.drift, **config.drift_params)
    z = _simulate_blocks(grid, spec, config.seed, config.paths,
                         _thread_count(config))
    nodes = np.linspace(-2.0, 2.0, 32)
    s, t = config.s, config.t_end
    rows = []
    worst = 0.0
    for x in nodes:
        y = backward_ensemble(b, grid, z, float(x), s, t)
        rt = forward_ensemble(b, grid, z, y, s, t)
        err = np.abs(rt - x)
        worst = max(worst, float(err.max()))
        rows.append((x, float(err.max()), float(err.mean())))
    _write_csv(out / "flow.csv", config, ["x", "max_err", "mean_err"], rows)
    files.append("flow.csv")
    if b.is_zero:
        checks.append(_check("round-trip-exact", worst <= 1e-12, worst, 1e-12,
                             "zero drift: inversion is exact to roundoff"))
    else:
        tol = 10.0 * grid.dt
        checks.append(_check("round-trip", worst <= tol, worst, tol,
                             "max |X(Y(x)) - x| over 32 nodes and all paths"))


def _run_weakform(config, grid, spec, out, checks, files):
    b = drift_preset(config.drift, **config.drift_params)
    u0 = u0_preset(config.u0, **config.u0_params)
    phi = TestFunction.bump(0.0, 1.5)
    dx = config.dx
    xq = np.arange(-1.5 - 2 * dx, 1.5 + 3 * dx, dx)
    rows = []
    rels = []
    for pid in range(config.paths):
        Z = simulate_hermite(generate(grid, config.seed, pid), spec)
        rep = weak_form_residual(u0, b, Z, phi, config.t_end,
                                 config.mollifier_eps, xq)
        rows.append((pid, rep.lhs, rep.residual, rep.relative_residual))
        rels.append(rep.relative_residual)
    _write_csv(out / "weakform.csv", config,
               ["path_id", "lhs", "residual", "relative_residual"], rows)
    files.append("weakform.csv")
    mean_rel = float(np.mean(rels))
    checks.append(_check("weak-form-residual", mean_rel <= 1e-2, mean_rel,
                         1e-2, "mean relative residual of the weak identity "
                         f"over {config.paths} paths"))


def _run_malliavin(config, grid, spec, out, checks, files):
    b = drift_preset(config.drift, **config.drift_params)
    s, t = config.s, config.t_end
    dW = generate_increments(grid, config.seed, range(config.paths))
    z = _simulate_blocks(grid, spec, config.seed, config.paths,
                         _thread_count(config))
    dz_nsq = dz_norm_ensemble(grid, spec, dW, t)
    dy_nsq = dy_norm_ensemble(b, grid, spec, z, s, t, config.x0,
                              dW=dW if spec.q == 2 else None)
    rows = [(pid, dz_nsq[pid], dy_nsq[pid]) for pid in range(config.paths)]
    _write_csv(out / "malliavin.csv", config,
               ["path_id", "dz_norm_sq", "dy_norm_sq"], rows)
    files.append("malliavin.csv")

    target = spec.q * lattice_variance(grid, spec, t)
    if spec.q == 1:
        gap = abs(float(dz_nsq[0]) - target)
        checks.append(_check("derivative-energy", gap <= 1e-10, gap, 1e-10,
                             "||DZ_t||^2 is deterministic for q=1 and must "
                             "equal the lattice variance"))
    else:
        se = float(np.std(dz_nsq, ddof=1)) / np.sqrt(config.paths)
        zscore = (float(np.mean(dz_nsq)) - target) / se
        checks.append(_check("derivative-energy", abs(zscore) <= 3.0,
                             zscore, 3.0,
                             "z-score of E||DZ_t||^2 against q x lattice "
                             "variance"))
    mn = float(dy_nsq.min())
    checks.append(_check("dy-norm-positive", mn > 0.0, mn, 0.0,
                         "min ||DY_{s,t}(x0)||^2 over the ensemble"))
    mt = mt_diagnostic(grid, spec)
    checks.append(_check("window-energy-finite", bool(np.isfinite(mt)), mt,
                         float("inf"), "max window derivative energy over "
                         "dyadic probe pairs"))


def _run_density(config, grid, spec, out, checks, files):
    b = drift_preset(config.drift, **config.drift_params)
    u0 = u0_preset(config.u0, **config.u0_params)
    t = config.t_end
    z = _simulate_blocks(grid, spec, config.seed, config.paths,
                         _thread_count(config))
    y = backward_ensemble(b, grid, z, config.x0, 0.0, t)
    samples = np.asarray(u0.u0(y), dtype=float)
    dW = generate_increments(grid, config.seed, range(config.paths)) \
        if spec.q == 2 else None
    dy_nsq = dy_norm_ensemble(b, grid, spec, z, 0.0, t, config.x0, dW=dW)
    du_nsq = np.asarray(u0.u0_prime(y), dtype=float) ** 2 * dy_nsq
    rep = density_report(samples, du_nsq)
    _write_csv(out / "samples.csv", config,
               ["path_id", "sample", "du_norm_sq"],
               [(pid, samples[pid], du_nsq[pid]) for pid in range(config.paths)])
    files.append("samples.csv")
    _write_csv(out / "density.csv", config, ["x", "kde"],
               list(zip(rep.x_grid, rep.density)))
    files.append("density.csv")
    checks.append(_check("kde-mass", 0.99 <= rep.mass <= 1.01, rep.mass, 1.01,
                         "KDE total mass must sit in [0.99, 1.01]"))
    checks.append(_check("no-atoms", rep.max_cdf_jump <= 3.0 / np.sqrt(rep.count),
                         rep.max_cdf_jump, 3.0 / np.sqrt(rep.count),
                         "largest empirical CDF jump"))
    checks.append(_check("du-norm-positive", rep.min_norm_sq > 0.0,
                         rep.min_norm_sq, 0.0,
                         "min ||Du(t, x0)||^2 over the ensemble"))


def _run_bound_check(config, grid, spec, out, checks, files):
    b = drift_preset(config.drift, **config.drift_params)
    z = _simulate_blocks(grid, spec, config.seed, config.paths,
                         _thread_count(config))
    rep = density_bound_check(b, grid, z, config.s, config.t_end, config.x0,
                              strict=False)
    _write_csv(out / "brackets.csv", config, ["path_id", "bracket"],
               [(pid, rep.brackets[pid]) for pid in range(config.paths)])
    files.append("brackets.csv")
    floor = max(rep.floor_condition, rep.floor_universal)
    checks.append(_check("bracket-floor", rep.passed, rep.min_bracket, floor,
                         f"min integrating-factor bracket over {config.paths} "
                         f"paths; floors: condition={rep.floor_condition:.6g}, "
                         f"universal={rep.floor_universal:.6g}"))


_RUNNERS = {
    "noise-stats": _run_noise_stats,
    "qv": _run_qv,
    "flow": _run_flow,
    "transport-weakform": _run_weakform,
    "malliavin": _run_malliavin,
    "density": _run_density,
    "bound-check": _run_bound_check,
}


def run(config: ExperimentConfig) -> RunManifest:
    """Execute one experiment end to end and write its artifacts."""
    diags = validate(config)
    if diags:
        raise DomainError("invalid config: " + "; ".join(diags))
    started = datetime.now(timezone.utc).isoformat(timespec="seconds")
    t0 = time.perf_counter()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = TimeGrid(T=config.T, n=config.n)
    spec = HermiteSpec.create(config.q, config.H)
    checks, files = [], []
    _RUNNERS[config.kind](config, grid, spec, out, checks, files)
    manifest = RunManifest(
        kind=config.kind,
        config=config.to_dict(),
        config_hash=_config_hash(config),
        version=__version__,
        started_utc=started,
        wall_clock_s=time.perf_counter() - t0,
        checks=checks,
        files=files + ["manifest.json"],
        passed=all(c["passed"] for c in checks),
    )
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2) + "\n")
    return manifest


__all__ = ["KINDS", "ExperimentConfig", "RunManifest", "run", "validate"]
