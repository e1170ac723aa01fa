"""IMEX time integration of the regularized chemotaxis system.

One step advances (u, v, w) through three substages, in this fixed order:

1. explicit face-upwind advection of u and v along the current signal
   gradient (monotone, exactly mass-conserving),
2. explicit reactions evaluated at the post-advection values, and the signal
   decay/production ``-w + source_w(u, v, eps)``,
3. backward-Euler diffusion ``(I - dt*Lap) x = intermediate`` for each field.

Every substage preserves nonnegativity when ``dt`` respects the stability
rule of :func:`stable_dt`; values in [-1e-13, 0) are treated as roundoff and
clamped to zero, anything lower aborts the run as a scheme violation.

The trajectory records a full-resolution diagnostic series (per step: masses,
norms, extrema), running space-time accumulators by the rectangle rule in
time, snapshots at requested output times (the stepper lands on them
exactly), and optionally a dense field history for the certificate machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    Field,
    Grid,
    face_gradient_values,
    gradient_sq_values,
    lp_norm_values,
    solve_diffusion,
)
from .model import ModelParams, State, _pow, reaction_u, reaction_v, sign_split, source_w

CLAMP_FLOOR = 1e-13


class SchemeViolationError(RuntimeError):
    """A field left the nonnegative cone by more than the roundoff floor."""


class SimulationAbortError(RuntimeError):
    """An accumulator or field became non-finite; diagnostics attached."""


@dataclass(frozen=True)
class SolverConfig:
    cfl_safety: float = 0.5
    max_dt: float = 0.01
    linear_solver: str = "spectral"
    linear_solver_tol: float = 1e-12
    linear_solver_max_iter: int = 2000

    def __post_init__(self):
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not self.max_dt > 0:
            raise ValueError(f"max_dt must be positive, got {self.max_dt}")
        if not self.linear_solver_tol > 0:
            raise ValueError("linear_solver_tol must be positive")
        if self.linear_solver_max_iter < 1:
            raise ValueError("linear_solver_max_iter must be >= 1")
        if self.linear_solver not in ("spectral", "cg"):
            raise ValueError(f"unknown linear_solver {self.linear_solver!r}")


# accumulators integrated by the rectangle rule over every step; the last is
# a running sup rather than an integral (still nondecreasing in time)
ACCUMULATOR_NAMES = (
    "int_u_theta",          # iint u^theta            (post-advection values)
    "int_v_sq",             # iint v^2                (post-advection values)
    "int_grad_w_sq",        # iint |grad w|^2
    "int_grad_log1v_sq",    # iint |grad ln(1+v)|^2
    "int_vgradw_sq",        # iint (v/(1+v))^2 |grad w|^2
    "int_abs_reaction_u",   # iint |u(1-u^(theta-1)-v)|
    "int_abs_reaction_v",   # iint |v(1-v-u)|
    "int_reaction_u_plus",  # iint positive part of the u reaction
    "int_reaction_v_plus",
    "sup_reaction_u_plus",  # cellwise sup of that positive part over all steps
)

SERIES_NAMES = (
    "mass_u", "mass_v", "mass_w",
    "int_u_theta_now", "int_v_sq_now", "int_grad_w_sq_now",
    "min_u", "max_u", "min_v", "max_v", "min_w", "max_w",
)

CUMULATIVE_NAMES = (
    "cum_reaction_u",   # signed iint of the u reaction up to each boundary
    "cum_reaction_v",
    "cum_source_w",     # signed iint of (source_w - w)
)


@dataclass
class Trajectory:
    """Time-stepping record: snapshots, diagnostics, and accumulators."""

    grid: Grid
    params: ModelParams
    config: SolverConfig
    final_time: float
    times: np.ndarray                       # step boundaries, t_0 .. t_M
    dts: np.ndarray                         # step sizes, length M
    series: dict[str, np.ndarray]           # per-boundary diagnostics
    cumulative: dict[str, np.ndarray]       # signed space-time integrals
    accumulators: dict[str, float]          # final rectangle-rule integrals
    snapshots: list[tuple[float, State]]
    history_times: np.ndarray | None = None
    history: list[dict[str, np.ndarray]] | None = None

    @property
    def mean_dt(self) -> float:
        if len(self.dts) == 0:
            return 0.0
        return float(np.mean(self.dts))

    @property
    def max_dt_taken(self) -> float:
        if len(self.dts) == 0:
            return 0.0
        return float(np.max(self.dts))

    def snapshot_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.snapshots])

    def snapshot_at(self, t: float, rtol: float = 1e-9) -> State:
        for ts, state in self.snapshots:
            if abs(ts - t) <= rtol * max(1.0, abs(t)):
                return state
        raise KeyError(f"no snapshot at t={t}")

    def sup_series(self, name: str) -> float:
        return float(np.max(self.series[name]))

    def sup_w_lp(self, p: float) -> float:
        """Sup over snapshots of the signal's L^p norm."""
        return max(lp_norm_values(self.grid, s.w.values, p) for _, s in self.snapshots)

    def require_history(self) -> tuple[np.ndarray, list[dict[str, np.ndarray]]]:
        if self.history is None or self.history_times is None:
            raise ValueError("trajectory was run without dense field history")
        return self.history_times, self.history


def stable_dt(state: State, params: ModelParams, cfg: SolverConfig) -> float:
    """Largest step the explicit substages tolerate, scaled by cfl_safety.

    Transport limit: h_min / (2 * dim * max |dw/dn|) over all faces. Reaction
    limit: 1 / L with L = 1 + theta*max(u)^(theta-1) + max(u) + 2*max(v), a
    bound on the reaction Lipschitz constants. The configured max_dt caps both.
    """
    return _stable_dt(state.grid, state.u.values, state.v.values, state.w.values,
                      params, cfg)


def _stable_dt(grid: Grid, u: np.ndarray, v: np.ndarray, w: np.ndarray,
               params: ModelParams, cfg: SolverConfig) -> float:
    if u.size == 0:
        raise ValueError("empty state")
    max_g = max(float(np.max(np.abs(g))) for g in face_gradient_values(grid, w))
    if max_g > 0.0:
        transport = grid.min_spacing / (2.0 * grid.dim * max_g)
    else:
        transport = np.inf
    umax = float(u.max())
    vmax = float(v.max())
    l_reac = 1.0 + params.theta * _pow(umax, params.theta - 1.0) + umax + 2.0 * vmax
    dt = cfg.cfl_safety * min(transport, 1.0 / l_reac, cfg.max_dt)
    return float(dt)


def _clamp_nonneg(name: str, values: np.ndarray, t: float) -> np.ndarray:
    m = float(values.min())
    if m >= 0.0:
        return values
    if m < -CLAMP_FLOOR:
        idx = np.unravel_index(int(np.argmin(values)), values.shape)
        raise SchemeViolationError(
            f"{name} reached {m:.6e} at cell {tuple(int(i) for i in idx)}, "
            f"t={t:.6g}: below the -{CLAMP_FLOOR:g} roundoff floor")
    return np.maximum(values, 0.0)


def _advect(grid: Grid, s: np.ndarray, face_grads: tuple[np.ndarray, ...],
            dt: float) -> np.ndarray:
    """Explicit upwind drift along the signal gradient; conserves the sum."""
    out = s.copy()
    for a in range(grid.dim):
        n = grid.cells[a]
        if n < 2:
            continue
        h = grid.spacing[a]
        g = face_grads[a]
        sl = lambda lo, hi: tuple(
            slice(lo, hi) if ax == a else slice(None) for ax in range(grid.dim))
        g_int = g[sl(1, n)]
        left = s[sl(None, -1)]
        right = s[sl(1, None)]
        flux = np.where(g_int > 0.0, left, right) * g_int
        full = np.zeros_like(g)
        full[sl(1, n)] = flux
        out -= (dt / h) * (full[sl(1, None)] - full[sl(None, -1)])
    return out


def _advance(grid: Grid, u: np.ndarray, v: np.ndarray, w: np.ndarray,
             params: ModelParams, cfg: SolverConfig, dt: float, t: float,
             ) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict[str, float]]:
    """One IMEX step on raw arrays; returns new fields plus step integrals."""
    vol = grid.cell_volume
    face_g = face_gradient_values(grid, w)

    u1 = _clamp_nonneg("u", _advect(grid, u, face_g, dt), t)
    v1 = _clamp_nonneg("v", _advect(grid, v, face_g, dt), t)

    fu = reaction_u(u1, v1, params.theta)
    fv = reaction_v(u1, v1)
    src = source_w(u1, v1, params.eps)
    fu_plus, fu_minus = sign_split(fu)
    fv_plus, fv_minus = sign_split(fv)

    stats = {
        "reaction_u": float(fu.sum()) * vol,
        "reaction_v": float(fv.sum()) * vol,
        "abs_reaction_u": float((fu_plus + fu_minus).sum()) * vol,
        "abs_reaction_v": float((fv_plus + fv_minus).sum()) * vol,
        "reaction_u_plus": float(fu_plus.sum()) * vol,
        "reaction_v_plus": float(fv_plus.sum()) * vol,
        "sup_reaction_u_plus": float(fu_plus.max()),
        "source_w": float((src - w).sum()) * vol,
        "u_theta": float(_pow(u1, params.theta).sum()) * vol,
        "v_sq": float((v1 ** 2).sum()) * vol,
    }

    u2 = u1 + dt * fu
    v2 = v1 + dt * fv
    w2 = w + dt * (src - w)

    kw = dict(method=cfg.linear_solver, tol=cfg.linear_solver_tol,
              max_iter=cfg.linear_solver_max_iter)
    u3 = _clamp_nonneg("u", solve_diffusion(grid, u2, dt, **kw), t + dt)
    v3 = _clamp_nonneg("v", solve_diffusion(grid, v2, dt, **kw), t + dt)
    w3 = _clamp_nonneg("w", solve_diffusion(grid, w2, dt, **kw), t + dt)
    return u3, v3, w3, stats


def step(state: State, params: ModelParams, cfg: SolverConfig, dt: float) -> State:
    """Advance one step of size dt (caller guarantees dt <= stable_dt).

    Postconditions: all fields nonnegative, and the change of each field's
    integral equals dt times the integral of its reaction/source evaluated at
    the post-advection values, up to the linear-solver tolerance.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    grid = state.grid
    u3, v3, w3, _ = _advance(grid, state.u.values, state.v.values, state.w.values,
                             params, cfg, dt, state.time)
    return State(u=Field(grid, u3), v=Field(grid, v3), w=Field(grid, w3),
                 time=state.time + dt)


def _state_diagnostics(grid: Grid, u, v, w, theta: float) -> dict[str, float]:
    return {
        "mass_u": float(u.sum()) * grid.cell_volume,
        "mass_v": float(v.sum()) * grid.cell_volume,
        "mass_w": float(w.sum()) * grid.cell_volume,
        "int_u_theta_now": float(_pow(u, theta).sum()) * grid.cell_volume,
        "int_v_sq_now": float((v ** 2).sum()) * grid.cell_volume,
        "int_grad_w_sq_now": float(gradient_sq_values(grid, w).sum()) * grid.cell_volume,
        "min_u": float(u.min()), "max_u": float(u.max()),
        "min_v": float(v.min()), "max_v": float(v.max()),
        "min_w": float(w.min()), "max_w": float(w.max()),
    }


def simulate(initial: State, params: ModelParams, cfg: SolverConfig, T: float,
             output_times: list[float] | np.ndarray = (),
             history_every: int | None = None) -> Trajectory:
    """Run stable_dt-sized steps up to time T, landing on output times exactly.

    ``history_every=k`` keeps a dense copy of the fields every k-th step (plus
    the initial and final instants) for the certificate machinery; ``None``
    stores snapshots only.
    """
    if T < 0:
        raise ValueError(f"final time must be >= 0, got {T}")
    grid = initial.grid
    if initial.time != 0.0:
        raise ValueError("simulate expects the initial state at time 0")
    events = sorted({float(t) for t in output_times if 0.0 < t <= T} | ({T} if T > 0 else set()))

    u = initial.u.values.copy()
    v = initial.v.values.copy()
    w = initial.w.values.copy()

    times = [0.0]
    dts: list[float] = []
    series: dict[str, list[float]] = {k: [] for k in SERIES_NAMES}
    cumulative: dict[str, list[float]] = {k: [0.0] for k in CUMULATIVE_NAMES}
    accumulators = {k: 0.0 for k in ACCUMULATOR_NAMES}
    snapshots: list[tuple[float, State]] = [(0.0, initial)]
    hist_times: list[float] = []
    history: list[dict[str, np.ndarray]] = []

    def record_series():
        for key, val in _state_diagnostics(grid, u, v, w, params.theta).items():
            series[key].append(val)

    def record_history(t):
        hist_times.append(t)
        history.append({"u": u.copy(), "v": v.copy(), "w": w.copy()})

    record_series()
    if history_every is not None:
        record_history(0.0)

    t = 0.0
    event_idx = 0
    step_idx = 0
    time_eps = 1e-12 * max(1.0, T)
    while event_idx < len(events):
        target = events[event_idx]
        dt = _stable_dt(grid, u, v, w, params, cfg)
        hit = False
        if t + dt >= target - time_eps:
            dt = target - t
            hit = True
        if dt <= 0:
            raise SimulationAbortError(f"step size collapsed to {dt} at t={t}")

        # dissipation integrands are sampled at the step start
        grad_w_sq = gradient_sq_values(grid, w)
        diss_grad_w = float(grad_w_sq.sum()) * grid.cell_volume
        diss_log1v = float(gradient_sq_values(grid, np.log1p(v)).sum()) * grid.cell_volume
        diss_vgradw = float(((v / (1.0 + v)) ** 2 * grad_w_sq).sum()) * grid.cell_volume

        u, v, w, stats = _advance(grid, u, v, w, params, cfg, dt, t)
        t = target if hit else t + dt
        step_idx += 1

        accumulators["int_u_theta"] += dt * stats["u_theta"]
        accumulators["int_v_sq"] += dt * stats["v_sq"]
        accumulators["int_grad_w_sq"] += dt * diss_grad_w
        accumulators["int_grad_log1v_sq"] += dt * diss_log1v
        accumulators["int_vgradw_sq"] += dt * diss_vgradw
        accumulators["int_abs_reaction_u"] += dt * stats["abs_reaction_u"]
        accumulators["int_abs_reaction_v"] += dt * stats["abs_reaction_v"]
        accumulators["int_reaction_u_plus"] += dt * stats["reaction_u_plus"]
        accumulators["int_reaction_v_plus"] += dt * stats["reaction_v_plus"]
        accumulators["sup_reaction_u_plus"] = max(
            accumulators["sup_reaction_u_plus"], stats["sup_reaction_u_plus"])

        cumulative["cum_reaction_u"].append(cumulative["cum_reaction_u"][-1]
                                            + dt * stats["reaction_u"])
        cumulative["cum_reaction_v"].append(cumulative["cum_reaction_v"][-1]
                                            + dt * stats["reaction_v"])
        cumulative["cum_source_w"].append(cumulative["cum_source_w"][-1]
                                          + dt * stats["source_w"])

        times.append(t)
        dts.append(dt)
        record_series()
        if history_every is not None and step_idx % history_every == 0:
            record_history(t)

        if not np.all(np.isfinite(list(accumulators.values()))):
            raise SimulationAbortError(
                f"non-finite accumulator at t={t:.6g}; diagnostics: "
                f"mass_u={series['mass_u'][-1]:.6g} mass_v={series['mass_v'][-1]:.6g} "
                f"mass_w={series['mass_w'][-1]:.6g} max_u={series['max_u'][-1]:.6g}")

        if hit:
            snap = State(u=Field(grid, u), v=Field(grid, v), w=Field(grid, w), time=t)
            snapshots.append((t, snap))
            event_idx += 1

    if history_every is not None and (not hist_times or hist_times[-1] != t):
        record_history(t)

    return Trajectory(
        grid=grid, params=params, config=cfg, final_time=T,
        times=np.array(times), dts=np.array(dts),
        series={k: np.array(vals) for k, vals in series.items()},
        cumulative={k: np.array(vals) for k, vals in cumulative.items()},
        accumulators=accumulators,
        snapshots=snapshots,
        history_times=np.array(hist_times) if history_every is not None else None,
        history=history if history_every is not None else None,
    )
