"""Flat key=value run configuration: parsing, validation, and presets.

The format is UTF-8 text, one ``dotted.key = value`` per line, ``#`` comments,
no nesting. Lists are comma separated; time grids may also be written as
``start:stop:count`` (an inclusive linspace). The manifest a run echoes back
is itself a valid config, and re-running it reproduces the run byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .grid import Field, Grid
from .model import InitialFamily, ModelParams, theta_threshold
from .solver import SolverConfig

DEFAULT_EPS_LADDER = tuple(2.0 ** -j for j in range(1, 8))

DEFAULT_TOL_C = {
    "mass": 1e-6,
    "weakform_w": 3e-4,
    "weakform_v": 3e-3,
    "entropy": 4e-3,
    "z_evolution": 7e-2,
}

INITIAL_KINDS = ("constant", "gaussian-bump", "two-bump", "random-seeded")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config field '{key}': {message}")


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_mapping(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _get_float(mapping, key, default=None) -> float:
    if key not in mapping:
        if default is None:
            raise ConfigError(key, "required")
        return default
    try:
        return float(mapping[key])
    except ValueError:
        raise ConfigError(key, f"not a real number: {mapping[key]!r}") from None


def _get_int(mapping, key, default=None) -> int:
    if key not in mapping:
        if default is None:
            raise ConfigError(key, "required")
        return default
    try:
        return int(mapping[key])
    except ValueError:
        raise ConfigError(key, f"not an integer: {mapping[key]!r}") from None


def _get_bool(mapping, key, default: bool) -> bool:
    if key not in mapping:
        return default
    val = mapping[key].lower()
    if val in ("on", "true", "1", "yes"):
        return True
    if val in ("off", "false", "0", "no"):
        return False
    raise ConfigError(key, f"not a boolean: {mapping[key]!r}")


def _get_floats(mapping, key, default=None) -> tuple[float, ...]:
    if key not in mapping:
        if default is None:
            raise ConfigError(key, "required")
        return tuple(default)
    return _parse_float_list(key, mapping[key])


def _parse_float_list(key: str, value: str) -> tuple[float, ...]:
    value = value.strip()
    if ":" in value:
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(key, f"time grid must be start:stop:count, got {value!r}")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(key, f"bad start:stop:count in {value!r}") from None
        if count < 2:
            raise ConfigError(key, "count must be >= 2")
        return tuple(float(t) for t in np.linspace(start, stop, count))
    try:
        return tuple(float(tok) for tok in value.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(key, f"not a comma list of reals: {value!r}") from None


@dataclass(frozen=True)
class InitialSpec:
    """Declarative per-field initial-data description."""

    kind: str
    options: dict[str, str]

    def build(self, grid: Grid, field_name: str) -> Field:
        key = f"init.{field_name}"
        opts = self.options
        if self.kind == "constant":
            return grid.constant_field(_get_float(opts, f"{key}.value"))
        if self.kind == "gaussian-bump":
            center = _get_floats(opts, f"{key}.center")
            sigma = _get_float(opts, f"{key}.sigma")
            return _gaussian(grid, key, [(center, sigma, 1.0)],
                             mass=opts.get(f"{key}.mass"),
                             amplitude=opts.get(f"{key}.amplitude"))
        if self.kind == "two-bump":
            c1 = _get_floats(opts, f"{key}.center1")
            c2 = _get_floats(opts, f"{key}.center2")
            s1 = _get_float(opts, f"{key}.sigma1")
            s2 = _get_float(opts, f"{key}.sigma2")
            w2 = _get_float(opts, f"{key}.weight2", 1.0)
            return _gaussian(grid, key, [(c1, s1, 1.0), (c2, s2, w2)],
                             mass=opts.get(f"{key}.mass"),
                             amplitude=opts.get(f"{key}.amplitude"))
        if self.kind == "random-seeded":
            amp = _get_float(opts, f"{key}.amplitude", 1.0)
            seed = _get_int(opts, f"{key}.seed", 0)
            rng = np.random.default_rng(seed)
            return grid.field(rng.uniform(0.0, amp, size=grid.shape))
        raise ConfigError(f"{key}.kind",
                          f"unknown kind {self.kind!r}; pick one of {INITIAL_KINDS}")


def _gaussian(grid: Grid, key: str, bumps, mass=None, amplitude=None) -> Field:
    meshes = grid.meshes()
    total = np.zeros(grid.shape)
    for center, sigma, weight in bumps:
        if len(center) != grid.dim:
            raise ConfigError(f"{key}.center", "needs one coordinate per axis")
        if sigma <= 0:
            raise ConfigError(f"{key}.sigma", "must be positive")
        r2 = sum((m - c) ** 2 for m, c in zip(meshes, center))
        total += weight * np.exp(-r2 / (2.0 * sigma ** 2))
    if mass is not None:
        target = float(mass)
        if target < 0:
            raise ConfigError(f"{key}.mass", "must be nonnegative")
        current = total.sum() * grid.cell_volume
        if current <= 0:
            raise ConfigError(f"{key}.mass", "bump has no mass on this grid")
        total *= target / current
    elif amplitude is not None:
        total *= float(amplitude)
    return grid.field(total)


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation/certification run needs, plus its raw echo."""

    grid: Grid
    params: ModelParams
    solver: SolverConfig
    T: float
    output_times: tuple[float, ...]
    initial: dict[str, InitialSpec]
    estimates_enabled: bool
    weights: tuple[tuple[float, float], ...]
    bump_count: int
    bump_seed: int
    tol_c: dict[str, float]
    probe_eta: tuple[float, ...]
    probe_trials: int
    probe_seed: int
    eps_ladder: tuple[float, ...]
    sweep_smoothing: float
    history_every: int
    raw: dict[str, str] = dataclass_field(default_factory=dict, compare=False)

    def build_initial_family(self) -> InitialFamily:
        fields = {name: spec.build(self.grid, name)
                  for name, spec in self.initial.items()}
        return InitialFamily(u0=fields["u"], v0=fields["v"], w0=fields["w"])

    def to_mapping(self) -> dict[str, str]:
        """Normalized key=value echo sufficient to reproduce the run."""
        m: dict[str, str] = {}
        m["grid.cells"] = ", ".join(str(n) for n in self.grid.cells)
        m["grid.lengths"] = ", ".join(_fmt(x) for x in self.grid.lengths)
        m["model.theta"] = _fmt(self.params.theta)
        m["model.eps"] = _fmt(self.params.eps)
        m["model.dim_n"] = str(self.params.dim_N)
        m["solver.cfl_safety"] = _fmt(self.solver.cfl_safety)
        m["solver.max_dt"] = _fmt(self.solver.max_dt)
        m["solver.linear_solver"] = self.solver.linear_solver
        m["solver.linear_solver_tol"] = _fmt(self.solver.linear_solver_tol)
        m["solver.linear_solver_max_iter"] = str(self.solver.linear_solver_max_iter)
        m["run.T"] = _fmt(self.T)
        m["run.output_times"] = ", ".join(_fmt(t) for t in self.output_times)
        m["run.estimates"] = "on" if self.estimates_enabled else "off"
        m["run.history_every"] = str(self.history_every)
        for name, spec in self.initial.items():
            m[f"init.{name}.kind"] = spec.kind
            for k, v in sorted(spec.options.items()):
                m[k] = v
        m["certify.weights"] = "; ".join(f"{_fmt(p)}:{_fmt(k)}" for p, k in self.weights)
        m["certify.bumps"] = str(self.bump_count)
        m["certify.seed"] = str(self.bump_seed)
        for kind, c in sorted(self.tol_c.items()):
            m[f"certify.tol_c.{kind}"] = _fmt(c)
        m["probe.eta"] = ", ".join(_fmt(x) for x in self.probe_eta)
        m["probe.trials"] = str(self.probe_trials)
        m["probe.seed"] = str(self.probe_seed)
        m["sweep.eps_ladder"] = ", ".join(_fmt(x) for x in self.eps_ladder)
        m["sweep.smoothing"] = _fmt(self.sweep_smoothing)
        return m


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def config_from_mapping(mapping: dict[str, str]) -> RunConfig:
    cells = tuple(int(x) for x in _get_floats(mapping, "grid.cells"))
    lengths = _get_floats(mapping, "grid.lengths", [1.0] * len(cells))
    if any(n < 1 for n in cells):
        raise ConfigError("grid.cells", f"cells must be positive, got {cells}")
    if len(lengths) != len(cells):
        raise ConfigError("grid.lengths", "needs one entry per axis")
    try:
        grid = Grid(cells=cells, lengths=lengths)
    except ValueError as exc:
        raise ConfigError("grid.cells", str(exc)) from None

    theta = _get_float(mapping, "model.theta")
    if not theta > 1.0:
        raise ConfigError("model.theta", f"must exceed 1, got {theta}")
    eps = _get_float(mapping, "model.eps", 0.0)
    if not (0.0 <= eps < 1.0):
        raise ConfigError("model.eps", f"must lie in [0, 1), got {eps}")
    dim_n = _get_int(mapping, "model.dim_n", grid.dim)
    try:
        params = ModelParams(theta=theta, eps=eps, dim_N=dim_n)
    except ValueError as exc:
        raise ConfigError("model.dim_n", str(exc)) from None

    try:
        solver = SolverConfig(
            cfl_safety=_get_float(mapping, "solver.cfl_safety", 0.5),
            max_dt=_get_float(mapping, "solver.max_dt", 0.01),
            linear_solver=mapping.get("solver.linear_solver", "spectral"),
            linear_solver_tol=_get_float(mapping, "solver.linear_solver_tol", 1e-12),
            linear_solver_max_iter=_get_int(mapping, "solver.linear_solver_max_iter", 2000),
        )
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    T = _get_float(mapping, "run.T")
    if T < 0:
        raise ConfigError("run.T", f"must be >= 0, got {T}")
    default_times = tuple(np.linspace(0.0, T, 21)) if T > 0 else (0.0,)
    output_times = _get_floats(mapping, "run.output_times", default_times)
    if any(t < 0 or t > T for t in output_times):
        raise ConfigError("run.output_times", f"times must lie in [0, T]={T}")

    initial = {}
    for name in ("u", "v", "w"):
        kind_key = f"init.{name}.kind"
        kind = mapping.get(kind_key, "constant" if name == "w" else None)
        if kind is None:
            raise ConfigError(kind_key, "required")
        if kind not in INITIAL_KINDS:
            raise ConfigError(kind_key,
                              f"unknown kind {kind!r}; pick one of {INITIAL_KINDS}")
        opts = {k: v for k, v in mapping.items() if k.startswith(f"init.{name}.")}
        opts.setdefault(f"init.{name}.value", "0")
        initial[name] = InitialSpec(kind=kind, options=opts)

    weights = _parse_weights(mapping.get("certify.weights", "1:2"))
    for p, k in weights:
        thr = math.sqrt(p) * (p + 1.0) / 2.0
        if not k > thr:
            raise ConfigError("certify.weights",
                              f"pair p={p}, k={k} is inadmissible: need "
                              f"k > sqrt(p)(p+1)/2 = {thr:.6g}")

    tol_c = dict(DEFAULT_TOL_C)
    for key in mapping:
        if key.startswith("certify.tol_c."):
            kind = key.removeprefix("certify.tol_c.")
            if kind not in tol_c:
                raise ConfigError(key, f"unknown certificate kind {kind!r}")
            tol_c[kind] = _get_float(mapping, key)

    eps_ladder = _get_floats(mapping, "sweep.eps_ladder", DEFAULT_EPS_LADDER)
    if any(not (0.0 < e < 1.0) for e in eps_ladder):
        raise ConfigError("sweep.eps_ladder", "entries must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps_ladder[:-1], eps_ladder[1:])):
        raise ConfigError("sweep.eps_ladder", "must be strictly decreasing")

    probe_eta = _get_floats(mapping, "probe.eta", (0.25, 1.0))
    if any(e <= 0 for e in probe_eta):
        raise ConfigError("probe.eta", "entries must be positive")

    bump_count = _get_int(mapping, "certify.bumps", 20)
    if bump_count < 1:
        raise ConfigError("certify.bumps", "must be >= 1")
    probe_trials = _get_int(mapping, "probe.trials", 200)
    if probe_trials < 1:
        raise ConfigError("probe.trials", "must be >= 1")
    history_every = _get_int(mapping, "run.history_every", 1)
    if history_every < 1:
        raise ConfigError("run.history_every", "must be >= 1")
    smoothing = _get_float(mapping, "sweep.smoothing", 0.0)
    if smoothing < 0:
        raise ConfigError("sweep.smoothing", "must be >= 0")

    cfg = RunConfig(
        grid=grid, params=params, solver=solver, T=T,
        output_times=tuple(output_times), initial=initial,
        estimates_enabled=_get_bool(mapping, "run.estimates", True),
        weights=weights,
        bump_count=bump_count,
        bump_seed=_get_int(mapping, "certify.seed", 2024),
        tol_c=tol_c,
        probe_eta=tuple(probe_eta),
        probe_trials=probe_trials,
        probe_seed=_get_int(mapping, "probe.seed", 7),
        eps_ladder=tuple(eps_ladder),
        sweep_smoothing=smoothing,
        history_every=history_every,
        raw=dict(mapping),
    )
    cfg.build_initial_family()  # fail fast on bad initial-data fields
    if cfg.estimates_enabled and cfg.params.theta <= theta_threshold(cfg.params.dim_N):
        raise ConfigError(
            "model.theta",
            f"signal L^p checks need theta above the threshold "
            f"{theta_threshold(cfg.params.dim_N)} for N={cfg.params.dim_N}")
    return cfg


def _parse_weights(value: str) -> tuple[tuple[float, float], ...]:
    pairs = []
    for tok in value.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        parts = tok.split(":")
        if len(parts) != 2:
            raise ConfigError("certify.weights",
                              f"expected 'p:k' pairs separated by ';', got {tok!r}")
        try:
            pairs.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConfigError("certify.weights", f"bad pair {tok!r}") from None
    if not pairs:
        raise ConfigError("certify.weights", "at least one p:k pair required")
    return tuple(pairs)


def load_config(path: str | Path) -> RunConfig:
    return config_from_mapping(load_config_mapping(path))
