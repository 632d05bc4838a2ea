"""Finite-volume evolution of the time-dependent system on a truncated
half-line.

The semi-discrete scheme is first order and deliberately plain: Rusanov
fluxes per phase, centered second differences for the two viscous terms,
pointwise drag, SSP-RK2 in time. The left ghost cell prescribes the outflow
velocities, the right ghost continues the steady profile past the truncation
point so that a converged profile is (up to truncation error) a fixed point
of the stepper.
"""

import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .diagnostics import NormSeries
from .errors import BlowUpError, DomainError, VacuumError
from .steady import SteadyProfile

DENSITY_FLOOR = 1e-10

GAUSSIAN = "gaussian"
COMPACT_BUMP = "compact_bump"
FROM_FILE = "from_file"

_SHAPES = (GAUSSIAN, COMPACT_BUMP, FROM_FILE)
_COMPONENTS = ("rho", "u", "n", "v")

STATE_HEADER = "x,rho,u,n,v"


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on [0, length]."""

    length: float
    cells: int
    dx: float
    centers: np.ndarray


def make_grid(length: float, cells: int) -> Grid1D:
    if length <= 0.0:
        raise DomainError("grid length must be positive")
    if cells < 1:
        raise DomainError("grid needs at least one cell")
    dx = length / cells
    centers = (np.arange(cells) + 0.5) * dx
    return Grid1D(length=float(length), cells=int(cells), dx=dx,
                  centers=centers)


@dataclass(frozen=True)
class PerturbationSpec:
    """Initial deviation from the steady profile.

    Velocity components are tapered by 1 - exp(-(x/width)^2) so the boundary
    values at x = 0 stay exactly at the prescribed outflow velocities.
    weight_tag optionally names the weighted class the initial data is meant
    to represent; it is carried along for bookkeeping, never enforced.
    from_file ignores the shape parameters and loads a full state snapshot.
    """

    shape: str = GAUSSIAN
    amplitude: float = 0.0
    center: float = 10.0
    width: float = 2.0
    components: tuple = ("u",)
    weight_tag: object = None
    path: str = ""

    def __post_init__(self):
        if self.shape not in _SHAPES:
            raise DomainError(f"unknown perturbation shape {self.shape!r}")
        if self.width <= 0.0:
            raise DomainError("perturbation width must be positive")
        unknown = [c for c in self.components if c not in _COMPONENTS]
        if unknown:
            raise DomainError(f"unknown perturbation components {unknown}")
        if self.shape == FROM_FILE and not self.path:
            raise DomainError("file-based perturbation needs a path")


def perturbation_values(pert: PerturbationSpec, x) -> dict:
    """Closed-form perturbation per component on the given coordinates."""
    if pert.shape == FROM_FILE:
        raise DomainError("file-based initial data has no closed-form values")
    x = np.asarray(x, dtype=float)
    s = (x - pert.center) / pert.width
    if pert.shape == GAUSSIAN:
        base = pert.amplitude * np.exp(-s * s)
    else:
        base = np.zeros_like(x)
        inside = np.abs(s) < 1.0
        si = s[inside]
        # mollifier normalized to hit amplitude exactly at the center
        base[inside] = pert.amplitude * np.exp(1.0 - 1.0 / (1.0 - si * si))
    taper = -np.expm1(-((x / pert.width) ** 2))
    out = {}
    for comp in _COMPONENTS:
        if comp not in pert.components:
            out[comp] = np.zeros_like(x)
        elif comp in ("u", "v"):
            out[comp] = base * taper
        else:
            out[comp] = base.copy()
    return out


@dataclass(frozen=True)
class EvolutionState:
    """Cell-averaged primitives plus the conserved momenta.

    u_bc and v_bc are the outflow velocities the left ghost enforces;
    right_ghost holds (rho, u, n, v) of the steady profile continued one
    half-cell past x = length.
    """

    t: float
    rho: np.ndarray
    u: np.ndarray
    n: np.ndarray
    v: np.ndarray
    mom1: np.ndarray
    mom2: np.ndarray
    u_bc: float
    v_bc: float
    right_ghost: tuple


def initialize(profile: SteadyProfile, grid: Grid1D,
               pert: PerturbationSpec) -> EvolutionState:
    """Steady profile interpolated to the cell centers plus a perturbation."""
    if grid.length > profile.x[-1] * (1.0 + 1e-12):
        raise DomainError(
            f"grid length {grid.length:.6g} exceeds the profile domain "
            f"{profile.x[-1]:.6g}")
    ghost = profile.interp(grid.length + 0.5 * grid.dx)
    right_ghost = (float(ghost[0]), float(ghost[1]),
                   float(ghost[2]), float(ghost[3]))
    u_bc = float(profile.achieved_u_minus)
    v_bc = float(profile.achieved_v_minus)
    if pert.shape == FROM_FILE:
        x, cols, meta = load_state_csv(pert.path)
        if not np.array_equal(x, grid.centers):
            raise DomainError("snapshot coordinates differ from the grid")
        rho0, u0, n0, v0 = cols["rho"], cols["u"], cols["n"], cols["v"]
        t0 = float(meta.get("t", 0.0))
        u_bc = float(meta.get("u_bc", u_bc))
        v_bc = float(meta.get("v_bc", v_bc))
        if "right_ghost" in meta:
            right_ghost = tuple(float(g) for g in meta["right_ghost"])
    else:
        rho_t, u_t, n_t, v_t, _, _ = profile.interp(grid.centers)
        vals = perturbation_values(pert, grid.centers)
        rho0 = rho_t + vals["rho"]
        u0 = u_t + vals["u"]
        n0 = n_t + vals["n"]
        v0 = v_t + vals["v"]
        t0 = 0.0
    for phase, dens in ((1, rho0), (2, n0)):
        low = np.nonzero(dens <= DENSITY_FLOOR)[0]
        if low.size:
            raise DomainError(
                f"initial phase-{phase} density at or below the floor "
                f"at cell {int(low[0])}; perturbation rejected")
    return EvolutionState(t=t0, rho=rho0, u=u0, n=n0, v=v0,
                          mom1=rho0 * u0, mom2=n0 * v0,
                          u_bc=u_bc, v_bc=v_bc, right_ghost=right_ghost)


def stable_dt(state: EvolutionState, grid: Grid1D, spec, cfl: float = 0.4
              ) -> float:
    """Explicit-stability step: advective bounds per phase plus the
    diffusive bound dx^2 / (2 max(mu/rho, 1)); the phase-2 viscosity n
    cancels against its density, leaving the unit coefficient."""
    if not 0.0 < cfl < 1.0:
        raise DomainError(f"cfl must lie in (0, 1), got {cfl}")
    f = spec.fluids
    c1 = np.sqrt(f.A1 * f.gamma * state.rho ** (f.gamma - 1.0))
    c2 = np.sqrt(f.A2 * f.alpha * state.n ** (f.alpha - 1.0))
    adv1 = grid.dx / float(np.max(np.abs(state.u) + c1))
    adv2 = grid.dx / float(np.max(np.abs(state.v) + c2))
    diff = grid.dx ** 2 / (2.0 * max(float(np.max(f.mu / state.rho)), 1.0))
    return cfl * min(adv1, adv2, diff)


def _pad(arr, left, right):
    return np.concatenate(([left], arr, [right]))


def _stage_rhs(rho, m1, n, m2, spec, dx, u_bc, v_bc, right_ghost):
    """Semi-discrete right-hand side for the conserved quadruple.

    Ghosts: the left cell copies the interior densities and carries the
    prescribed outflow velocities; the right cell is the frozen profile
    continuation.
    """
    f = spec.fluids
    g_rho, g_u, g_n, g_v = right_ghost
    # let non-finite values propagate silently; the stage check after the
    # update turns them into a loud abort
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        rho_p = _pad(rho, rho[0], g_rho)
        m1_p = _pad(m1, rho[0] * u_bc, g_rho * g_u)
        n_p = _pad(n, n[0], g_n)
        m2_p = _pad(m2, n[0] * v_bc, g_n * g_v)
        u_p = m1_p / rho_p
        v_p = m2_p / n_p
        p1 = f.A1 * rho_p ** f.gamma
        p2 = f.A2 * n_p ** f.alpha
        s1 = np.abs(u_p) + np.sqrt(f.A1 * f.gamma * rho_p ** (f.gamma - 1.0))
        s2 = np.abs(v_p) + np.sqrt(f.A2 * f.alpha * n_p ** (f.alpha - 1.0))
        a1 = np.maximum(s1[:-1], s1[1:])
        a2 = np.maximum(s2[:-1], s2[1:])

        flux_rho = (0.5 * (m1_p[:-1] + m1_p[1:])
                    - 0.5 * a1 * (rho_p[1:] - rho_p[:-1]))
        f_m1 = m1_p * u_p + p1
        flux_m1 = (0.5 * (f_m1[:-1] + f_m1[1:])
                   - 0.5 * a1 * (m1_p[1:] - m1_p[:-1]))
        flux_n = (0.5 * (m2_p[:-1] + m2_p[1:])
                  - 0.5 * a2 * (n_p[1:] - n_p[:-1]))
        f_m2 = m2_p * v_p + p2
        flux_m2 = (0.5 * (f_m2[:-1] + f_m2[1:])
                   - 0.5 * a2 * (m2_p[1:] - m2_p[:-1]))

        d_rho = -(flux_rho[1:] - flux_rho[:-1]) / dx
        d_m1 = -(flux_m1[1:] - flux_m1[:-1]) / dx
        d_n = -(flux_n[1:] - flux_n[:-1]) / dx
        d_m2 = -(flux_m2[1:] - flux_m2[:-1]) / dx

        d_m1 += f.mu * (u_p[:-2] - 2.0 * u_p[1:-1] + u_p[2:]) / dx ** 2
        n_iface = 0.5 * (n_p[:-1] + n_p[1:])
        v_grad = (v_p[1:] - v_p[:-1]) / dx
        d_m2 += (n_iface[1:] * v_grad[1:] - n_iface[:-1] * v_grad[:-1]) / dx

        drag = n * (v_p[1:-1] - u_p[1:-1])
        d_m1 += drag
        d_m2 -= drag
    return d_rho, d_m1, d_n, d_m2


def _check_stage(rho, m1, n, m2, t):
    for arr in (rho, m1, n, m2):
        if not np.all(np.isfinite(arr)):
            raise BlowUpError(t)
    for phase, dens in ((1, rho), (2, n)):
        low = np.nonzero(dens <= DENSITY_FLOOR)[0]
        if low.size:
            raise VacuumError(phase, int(low[0]), t)


def _with_arrays(state, t, rho, m1, n, m2):
    return EvolutionState(t=t, rho=rho, u=m1 / rho, n=n, v=m2 / n,
                          mom1=m1, mom2=m2, u_bc=state.u_bc,
                          v_bc=state.v_bc, right_ghost=state.right_ghost)


def _euler_stage(state: EvolutionState, grid: Grid1D, spec, dt: float
                 ) -> EvolutionState:
    """Single forward-Euler stage; the budget tests address it directly."""
    rates = _stage_rhs(state.rho, state.mom1, state.n, state.mom2, spec,
                       grid.dx, state.u_bc, state.v_bc, state.right_ghost)
    rho, m1, n, m2 = (u + dt * r for u, r in
                      zip((state.rho, state.mom1, state.n, state.mom2), rates))
    _check_stage(rho, m1, n, m2, state.t + dt)
    return _with_arrays(state, state.t + dt, rho, m1, n, m2)


def step(state: EvolutionState, grid: Grid1D, spec, dt: float
         ) -> EvolutionState:
    """One SSP-RK2 (Heun) step; aborts loudly on blow-up or vacuum."""
    if dt <= 0.0:
        raise DomainError("step needs dt > 0")
    mid = _euler_stage(state, grid, spec, dt)
    rates = _stage_rhs(mid.rho, mid.mom1, mid.n, mid.mom2, spec, grid.dx,
                       state.u_bc, state.v_bc, state.right_ghost)
    olds = (state.rho, state.mom1, state.n, state.mom2)
    mids = (mid.rho, mid.mom1, mid.n, mid.mom2)
    rho, m1, n, m2 = (0.5 * (u0 + u1 + dt * r)
                      for u0, u1, r in zip(olds, mids, rates))
    _check_stage(rho, m1, n, m2, state.t + dt)
    return _with_arrays(state, state.t + dt, rho, m1, n, m2)


@dataclass(frozen=True)
class EvolveResult:
    series: NormSeries
    state: EvolutionState
    truncated: bool


def evolve(state: EvolutionState, grid: Grid1D, spec, t_end: float,
           observer_stride: int = 1, observers=(), cfl: float = 0.4,
           wall_clock_budget: float = None, drag_substeps: int = 1
           ) -> EvolveResult:
    """March the state to t_end, collecting observer records along the way.

    Observers are called with the current state: any NormRecord they return
    is appended to the series (at most one observer should record norms so
    the series stays strictly time-ordered; the others can write snapshots
    or just watch). The step is clipped to land exactly on t_end.
    drag_substeps divides the stability step to resolve a stiff relaxation
    rate without splitting the source from the fluxes. A wall-clock budget
    in seconds turns an overlong run into a truncated result instead of an
    error.
    """
    if t_end < state.t:
        raise DomainError("t_end lies before the state time")
    if observer_stride < 1:
        raise DomainError("observer_stride must be a positive integer")
    if drag_substeps < 1:
        raise DomainError("drag_substeps must be a positive integer")
    records = []

    def observe(current):
        for obs in observers:
            rec = obs(current)
            if rec is not None:
                records.append(rec)

    if t_end == state.t:
        return EvolveResult(series=NormSeries(records=()), state=state,
                            truncated=False)
    observe(state)
    start = time.monotonic()
    truncated = False
    accepted = 0
    observed = True
    tiny = 1e-12 * max(1.0, abs(t_end))
    while t_end - state.t > tiny:
        if (wall_clock_budget is not None
                and time.monotonic() - start > wall_clock_budget):
            truncated = True
            break
        dt = stable_dt(state, grid, spec, cfl) / drag_substeps
        dt = min(dt, t_end - state.t)
        state = step(state, grid, spec, dt)
        accepted += 1
        observed = accepted % observer_stride == 0
        if observed:
            observe(state)
    if not observed:
        observe(state)
    return EvolveResult(series=NormSeries(records=tuple(records)),
                        state=state, truncated=truncated)


# ---------------------------------------------------------------------------
# state snapshots
# ---------------------------------------------------------------------------

def _meta_path(path):
    return str(path) + ".meta.json"


def save_state_csv(state: EvolutionState, grid: Grid1D, path,
                   spec_hash: str = None):
    """Write the primitive fields plus a JSON sidecar with the metadata
    needed to resume (time, boundary velocities, right ghost)."""
    with open(path, "w") as fh:
        fh.write(STATE_HEADER + "\n")
        for i in range(grid.cells):
            row = (grid.centers[i], state.rho[i], state.u[i],
                   state.n[i], state.v[i])
            fh.write(",".join("%.17g" % val for val in row) + "\n")
    meta = {
        "t": state.t,
        "spec_hash": spec_hash,
        "length": grid.length,
        "cells": grid.cells,
        "u_bc": state.u_bc,
        "v_bc": state.v_bc,
        "right_ghost": list(state.right_ghost),
    }
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_state_csv(path):
    """Read a snapshot back: coordinates, primitive columns, metadata dict."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != STATE_HEADER:
            raise DomainError(f"unexpected snapshot header {header!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = {}
    if os.path.exists(_meta_path(path)):
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
    cols = {name: data[:, i + 1] for i, name in enumerate(_COMPONENTS)}
    return data[:, 0], cols, meta
