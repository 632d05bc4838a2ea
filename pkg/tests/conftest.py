"""Shared builders for randomized specs across the test suite."""

import zlib

import numpy as np

import twophase as tp


def random_fluids(rng):
    return tp.FluidConstants(
        A1=float(rng.uniform(0.3, 3.0)),
        A2=float(rng.uniform(0.3, 3.0)),
        gamma=float(rng.uniform(1.0, 3.0)),
        alpha=float(rng.uniform(1.0, 3.0)),
        mu=float(rng.uniform(0.2, 5.0)),
    )


def random_spec(rng, regime, delta=0.0):
    """Random ModelSpec in the requested regime class.

    Sonic specs are constructed exactly, u_plus = -c_plus; the other classes
    draw a Mach number safely away from 1. delta > 0 displaces u_minus
    below u_plus (the sonic-admissible side).
    """
    fluids = random_fluids(rng)
    rho_plus = float(rng.uniform(0.3, 3.0))
    n_plus = float(rng.uniform(0.3, 3.0))
    c = tp.sonic_velocity(fluids, rho_plus, n_plus)  # -c_plus
    if regime == "supersonic":
        u_plus = float(rng.uniform(1.1, 3.0)) * c
    elif regime == "subsonic":
        u_plus = float(rng.uniform(0.15, 0.9)) * c
    elif regime == "sonic":
        u_plus = c
    else:
        raise ValueError(regime)
    far = tp.FarFieldState(rho_plus=rho_plus, n_plus=n_plus, u_plus=u_plus)
    return tp.ModelSpec(fluids=fluids, far=far, u_minus=u_plus - delta)


def rng_for(name, salt=0):
    """Deterministic per-test generator so failures replay exactly."""
    return np.random.default_rng(zlib.crc32(f"{name}:{salt}".encode()))


def flat_profile(spec, x_max=50.0, points=501):
    """Constant steady profile pinned at the far-field state everywhere.

    The exact steady solution for u_minus = u_plus, and a convenient
    reference state for perturbation and evolution tests."""
    x = np.linspace(0.0, x_max, points)
    far = spec.far
    zeros = np.zeros_like(x)
    return tp.SteadyProfile(
        x=x,
        rho_t=np.full_like(x, far.rho_plus),
        u_t=np.full_like(x, far.u_plus),
        n_t=np.full_like(x, far.n_plus),
        v_t=np.full_like(x, far.u_plus),
        ux_t=zeros, vx_t=zeros,
        regime=tp.classify_regime(spec), delta=0.0,
        achieved_u_minus=far.u_plus, achieved_v_minus=far.u_plus,
        boundary_compatible=True, sigma0=0.0,
        rho_plus=far.rho_plus, u_plus=far.u_plus, n_plus=far.n_plus)
