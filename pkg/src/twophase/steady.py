"""Steady outflow profiles by eigensystem analysis and manifold shooting.

The steady equations integrate once to a 3-dimensional autonomous system for
U = (u_bar, w_bar, v_bar) = (u~ - u_plus, u~_x, v~ - u_plus):

    u_bar_x = w_bar
    w_bar_x = [ m1 (1 - p1'(rho~)/u~^2) w_bar - m2 (1 - u~/v~) ] / mu
    v_bar_x = (v~/m2) [ m1 u_bar + p1(rho~) - p1(rho_plus)
                        + m2 v_bar + p2(n~) - p2(n_plus) - mu w_bar ]

with constant mass fluxes m1 = rho_plus u_plus, m2 = n_plus u_plus and the
densities recovered from them, rho~ = m1/u~, n~ = m2/v~. The far field is the
fixed point U = 0; profiles are trajectories that approach it as x grows and
meet the prescribed boundary velocity at x = 0.

The linearization at the fixed point has one eigenvalue pattern per regime
(two stable directions when supersonic, one when subsonic, and a genuine
center direction at sonic), which dictates the construction: backward
shooting from an eigen-subspace seed off the far field for M != 1, and a
center-direction collocation solve for M = 1.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_bvp

from . import model
from .errors import (DomainError, InsufficientDataError, NumericsError,
                     ShootingError, SingularityError)

EXPONENTIAL = "exponential"
ALGEBRAIC = "algebraic"

NEG, ZERO, POS = "neg", "zero", "pos"


class _TrialDiverged(Exception):
    """A shooting trial left the physical region; backtrack the line search."""


# ---------------------------------------------------------------------------
# linear algebra at the far field
# ---------------------------------------------------------------------------

def farfield_jacobian(spec: model.ModelSpec) -> np.ndarray:
    """Closed-form linearization of the steady system at the far field.

    Row 1: (0, 1, 0)
    Row 2: (n+/mu, (rho+ u+^2 - A1 g rho+^g)/(mu u+), -n+/mu)
    Row 3: ((rho+ u+^2 - A1 g rho+^g)/(n+ u+), -mu/n+,
            (n+ u+^2 - A2 al n+^al)/(n+ u+))

    Assembled entrywise, never fitted.
    """
    f, far = spec.fluids, spec.far
    rp, np_, up, mu = far.rho_plus, far.n_plus, far.u_plus, f.mu
    e1 = rp * up ** 2 - f.A1 * f.gamma * rp ** f.gamma
    e2 = np_ * up ** 2 - f.A2 * f.alpha * np_ ** f.alpha
    return np.array([
        [0.0, 1.0, 0.0],
        [np_ / mu, e1 / (mu * up), -np_ / mu],
        [e1 / (np_ * up), -mu / np_, e2 / (np_ * up)],
    ])


def matrix_invariants(J):
    """Trace, sum of principal 2x2 minors, determinant of a 3x3 matrix.

    These are the elementary symmetric functions of the eigenvalues, used
    both to build the characteristic cubic and as the closure check on the
    roots that come back.
    """
    J = np.asarray(J, dtype=float)
    tr = J[0, 0] + J[1, 1] + J[2, 2]
    inv2 = (J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
            + J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]
            + J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
    det = (J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
           - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
           + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0]))
    return tr, inv2, det


def solve_cubic(c2: float, c1: float, c0: float):
    """Roots of lam^3 + c2 lam^2 + c1 lam + c0, sorted by real part.

    Depressed-cubic reduction t = lam + c2/3, then discriminant branching:
    three real roots via the trigonometric form when 4p^3 + 27q^2 <= 0,
    one real root plus a conjugate pair via Cardano otherwise.
    """
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2 ** 3 / 27.0 - c2 * c1 / 3.0 + c0
    shift = -c2 / 3.0
    disc = 4.0 * p ** 3 + 27.0 * q * q
    if disc <= 0.0:
        # three real roots (possibly repeated)
        if p == 0.0:
            roots = [shift, shift, shift]
        else:
            m = 2.0 * math.sqrt(-p / 3.0)
            # clamp the cosine argument against roundoff at disc ~ 0
            arg = 3.0 * q / (p * m)
            arg = min(1.0, max(-1.0, arg))
            theta = math.acos(arg) / 3.0
            roots = [shift + m * math.cos(theta - 2.0 * math.pi * k / 3.0)
                     for k in range(3)]
        roots = [complex(r) for r in roots]
    else:
        # one real root by Cardano, stable choice of cube root
        rt = math.sqrt(disc / 108.0)
        w3 = -q / 2.0 + rt if q <= 0 else -q / 2.0 - rt
        w = math.copysign(abs(w3) ** (1.0 / 3.0), w3)
        real = w - p / (3.0 * w) if w != 0.0 else 0.0
        # remaining quadratic t^2 + real*t + (p + real^2)
        br = real * real + p  # product of the two remaining depressed roots...
        # depressed cubic t^3+pt+q = (t-real)(t^2 + real t + (p + real^2))
        half = -real / 2.0
        disc2 = real * real / 4.0 - (p + real * real)
        im = math.sqrt(-disc2) if disc2 < 0 else 0.0
        if disc2 < 0:
            roots = [complex(shift + real),
                     complex(shift + half, im),
                     complex(shift + half, -im)]
        else:
            s = math.sqrt(disc2)
            roots = [complex(shift + real),
                     complex(shift + half + s),
                     complex(shift + half - s)]
    roots.sort(key=lambda z: (z.real, z.imag))
    return roots


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (sorted by real part), eigenvectors, and sign pattern."""

    lambdas: tuple
    vectors: np.ndarray  # columns vectors[:, i] match lambdas[i]
    sign_pattern: tuple


def _nullspace_vector(M):
    """Unit vector spanning the (numerical) nullspace of a 3x3 matrix."""
    _, _, vh = np.linalg.svd(M)
    return vh[-1].conj()


def eigensystem(J, zero_tolerance: float = 1e-8) -> EigenSystem:
    """Eigen-decomposition of the far-field matrix via the characteristic cubic.

    Eigenvectors come from nullspace extraction of J - lam I; a residual
    |J r - lam r| above 1e-8 (relative to |J|) is treated as a numerical
    failure rather than silently returned.
    """
    J = np.asarray(J, dtype=float)
    tr, inv2, det = matrix_invariants(J)
    lambdas = tuple(solve_cubic(-tr, inv2, -det))
    scale = max(np.max(np.abs(J)), 1.0)
    vectors = np.zeros((3, 3), dtype=complex)
    for i, lam in enumerate(lambdas):
        r = _nullspace_vector(J - lam * np.eye(3))
        res = np.linalg.norm(J @ r - lam * r)
        if res > 1e-8 * scale:
            raise NumericsError(
                f"eigenvector residual {res:.3e} for eigenvalue {lam:.6g}")
        vectors[:, i] = r
    pattern = tuple(
        ZERO if abs(lam.real) < zero_tolerance else (NEG if lam.real < 0 else POS)
        for lam in lambdas)
    return EigenSystem(lambdas=lambdas, vectors=vectors, sign_pattern=pattern)


def _left_eigenvector(J, lam):
    """Left eigenvector for lam: nullspace of (J - lam I)^T, real part."""
    v = _nullspace_vector(np.asarray(J, dtype=float).T - lam * np.eye(3))
    v = np.real_if_close(v, tol=1e6)
    v = np.real(v)
    n = np.linalg.norm(v)
    if n == 0:
        raise NumericsError("degenerate left eigenvector")
    return v / n


# ---------------------------------------------------------------------------
# the reduced steady system
# ---------------------------------------------------------------------------

def _rhs_params(spec):
    f, far = spec.fluids, spec.far
    return (f.A1, f.A2, f.gamma, f.alpha, f.mu,
            far.rho_plus, far.n_plus, far.u_plus,
            spec.mass_flux_1, spec.mass_flux_2)


def _rhs_scalar(params, u_bar, w_bar, v_bar):
    """Scalar right-hand side; kept in plain floats for the inner RK loop."""
    A1, A2, gam, alp, mu, rp, np_, up, m1, m2 = params
    ut = up + u_bar
    vt = up + v_bar
    if ut >= 0.0:
        raise SingularityError(1)
    if vt >= 0.0:
        raise SingularityError(2)
    rt = m1 / ut
    nt = m2 / vt
    p1t = A1 * rt ** gam
    p2t = A2 * nt ** alp
    p1p = A1 * gam * rt ** (gam - 1.0)
    w_dot = (m1 * (1.0 - p1p / (ut * ut)) * w_bar - m2 * (1.0 - ut / vt)) / mu
    bracket = (m1 * u_bar + (p1t - A1 * rp ** gam)
               + m2 * v_bar + (p2t - A2 * np_ ** alp) - mu * w_bar)
    v_dot = bracket / nt
    return w_bar, w_dot, v_dot


def _rhs_vectorized(params, U):
    """Vectorized right-hand side on a (3, m) stack of states."""
    A1, A2, gam, alp, mu, rp, np_, up, m1, m2 = params
    u_bar, w_bar, v_bar = U
    ut = up + u_bar
    vt = up + v_bar
    if np.any(ut >= 0.0):
        raise SingularityError(1)
    if np.any(vt >= 0.0):
        raise SingularityError(2)
    rt = m1 / ut
    nt = m2 / vt
    p1p = A1 * gam * rt ** (gam - 1.0)
    w_dot = (m1 * (1.0 - p1p / (ut * ut)) * w_bar - m2 * (1.0 - ut / vt)) / mu
    bracket = (m1 * u_bar + (A1 * rt ** gam - A1 * rp ** gam)
               + m2 * v_bar + (A2 * nt ** alp - A2 * np_ ** alp) - mu * w_bar)
    return np.vstack((w_bar, w_dot, bracket / nt))


def steady_rhs(spec: model.ModelSpec, state) -> np.ndarray:
    """Full nonlinear right-hand side at one reduced state (u_bar, w_bar, v_bar).

    Densities are recovered from the mass fluxes, so the state must keep both
    phase velocities negative; a crossing raises SingularityError naming the
    offending phase.
    """
    u_bar, w_bar, v_bar = (float(s) for s in state)
    return np.array(_rhs_scalar(_rhs_params(spec), u_bar, w_bar, v_bar))


def sigma_profile(a: float, sigma0: float, x):
    """Exact solution sigma0 / (1 + a sigma0 x) of sigma_x = -a sigma^2."""
    if a <= 0 or sigma0 <= 0:
        raise DomainError("sigma_profile needs a > 0 and sigma0 > 0")
    return sigma0 / (1.0 + a * sigma0 * np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# adaptive RK4 with step-doubling error control
# ---------------------------------------------------------------------------

def _rk4(f, y, h):
    k1 = f(*y)
    k2 = f(y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1], y[2] + 0.5 * h * k1[2])
    k3 = f(y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1], y[2] + 0.5 * h * k2[2])
    k4 = f(y[0] + h * k3[0], y[1] + h * k3[1], y[2] + h * k3[2])
    return (y[0] + h / 6.0 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1]),
            y[2] + h / 6.0 * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2]))


def _integrate(f, x0, y0, x1, tol=1e-10, h_max=0.05, guard=None, record=None):
    """March y' = f(y) from x0 to x1 (either direction) with step halving.

    Error per step is estimated by comparing one full step against two half
    steps (classic step doubling); the Richardson-extrapolated state is kept.
    `guard(y)` may abort the march early (returns True to stop); `record`
    collects (x, y, f(y)) at every accepted node including the endpoints.
    """
    direction = 1.0 if x1 >= x0 else -1.0
    x, y = x0, tuple(float(v) for v in y0)
    if record is not None:
        record.append((x, y, f(*y)))
    h = direction * min(h_max, max(abs(x1 - x0) / 16.0, 1e-12))
    max_steps = 2_000_000
    for _ in range(max_steps):
        if direction * (x1 - x) <= 0.0:
            return x, y
        if direction * (x + h) > direction * x1:
            h = x1 - x
        y_big = _rk4(f, y, h)
        y_mid = _rk4(f, y, 0.5 * h)
        y_two = _rk4(f, y_mid, 0.5 * h)
        err = max(abs(y_two[i] - y_big[i]) / (1.0 + abs(y_two[i])) for i in range(3))
        if math.isnan(err):
            h *= 0.1
            if abs(h) < 1e-14 * max(1.0, abs(x)):
                raise NumericsError(f"non-finite step estimate at x={x:.6g}")
            continue
        if err <= tol:
            x = x + h
            y = tuple(y_two[i] + (y_two[i] - y_big[i]) / 15.0 for i in range(3))
            if record is not None:
                record.append((x, y, f(*y)))
            if guard is not None and guard(y):
                return x, y
            grow = 5.0 if err == 0.0 else min(5.0, 0.9 * (tol / err) ** 0.2)
            h = direction * min(abs(h) * grow, h_max)
        else:
            h *= max(0.1, 0.9 * (tol / err) ** 0.2)
            if abs(h) < 1e-14 * max(1.0, abs(x)):
                raise NumericsError(f"step size underflow at x={x:.6g}")
    raise NumericsError("step budget exhausted in steady integration")


def _hermite_resample(xs, ys, fs, x_new):
    """Cubic Hermite interpolation of a trajectory onto a new grid.

    Both the states ys and their derivatives fs are known at the trajectory
    nodes xs (strictly increasing), so each interval supports the standard
    two-point Hermite cubic.
    """
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    fs = np.asarray(fs)
    idx = np.clip(np.searchsorted(xs, x_new, side="right") - 1, 0, len(xs) - 2)
    h = xs[idx + 1] - xs[idx]
    t = (x_new - xs[idx]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    out = (h00[:, None] * ys[idx]
           + (h10 * h)[:, None] * fs[idx]
           + h01[:, None] * ys[idx + 1]
           + (h11 * h)[:, None] * fs[idx + 1])
    return out


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyProfile:
    """Discrete steady profile on a uniform half-line grid starting at 0.

    rho_t, u_t, n_t, v_t are the profile values, ux_t and vx_t their first
    derivatives. achieved_u_minus is the boundary velocity the construction
    actually realized (u_t[0]); achieved_v_minus likewise for the second
    phase, which can differ from the request in the subsonic regime where the
    admissible boundary set is one-dimensional. sigma0 is the boundary value
    of the slow decay scale (meaningful in the sonic regime, equal to delta).
    """

    x: np.ndarray
    rho_t: np.ndarray
    u_t: np.ndarray
    n_t: np.ndarray
    v_t: np.ndarray
    ux_t: np.ndarray
    vx_t: np.ndarray
    regime: model.Regime
    delta: float
    achieved_u_minus: float
    achieved_v_minus: float
    boundary_compatible: bool
    sigma0: float
    rho_plus: float
    u_plus: float
    n_plus: float

    def interp(self, x_new):
        """Linear interpolation of all six fields onto new coordinates."""
        cols = (self.rho_t, self.u_t, self.n_t, self.v_t, self.ux_t, self.vx_t)
        return tuple(np.interp(x_new, self.x, c) for c in cols)


@dataclass(frozen=True)
class SpatialDecayFit:
    law: str
    rate_or_slope: float
    prefactor: float
    r_squared: float
    window: tuple


@dataclass(frozen=True)
class SteadySolveOptions:
    """Knobs for solve_steady; None means pick automatically from the spec."""

    max_delta: float = 0.1
    allow_large_delta: bool = False
    eps_seed: float = None
    sigma_seed: float = 1e-3
    x_domain: float = None
    points: int = 2048
    ode_tol: float = 1e-10
    newton_tol: float = 1e-10
    max_iter: int = 40
    farfield_tol: float = None
    match_tolerance: float = 1e-6
    zero_tolerance: float = 1e-8
    tail_floor: float = 1e-12
    bvp_tol: float = 1e-9
    bvp_max_nodes: int = 100_000


def _build_profile(spec, x, states, rhs_values, regime, boundary_compatible,
                   sigma0):
    u_bar, w_bar, v_bar = states
    far = spec.far
    u_t = far.u_plus + u_bar
    v_t = far.u_plus + v_bar
    if np.any(u_t >= 0.0):
        raise SingularityError(1)
    if np.any(v_t >= 0.0):
        raise SingularityError(2)
    # both velocities negative and both mass fluxes negative, so the
    # recovered densities are automatically positive
    rho_t = spec.mass_flux_1 / u_t
    n_t = spec.mass_flux_2 / v_t
    return SteadyProfile(
        x=x, rho_t=rho_t, u_t=u_t, n_t=n_t, v_t=v_t,
        ux_t=w_bar, vx_t=rhs_values[2], regime=regime, delta=spec.delta,
        achieved_u_minus=float(u_t[0]), achieved_v_minus=float(v_t[0]),
        boundary_compatible=boundary_compatible, sigma0=sigma0,
        rho_plus=far.rho_plus, u_plus=far.u_plus, n_plus=far.n_plus)


def _record_to_grid(spec, record, x_grid):
    """Resample a recorded trajectory onto x_grid and evaluate the RHS there."""
    xs = np.array([r[0] for r in record])
    ys = np.array([r[1] for r in record])
    fs = np.array([r[2] for r in record])
    order = np.argsort(xs)
    xs, ys, fs = xs[order], ys[order], fs[order]
    keep = np.concatenate(([True], np.diff(xs) > 0))
    xs, ys, fs = xs[keep], ys[keep], fs[keep]
    states = _hermite_resample(xs, ys, fs, x_grid).T
    rhs_values = _rhs_vectorized(_rhs_params(spec), states)
    return states, rhs_values


def _shoot(spec, opts, regime, eig):
    """Backward shooting for the regimes with exponential far-field decay.

    The Newton leg integrates backward only over [0, x_far]: backward
    marching amplifies seed-scale roundoff along the fastest stable mode by
    exp(|lam_fast| x), so the leg has to stay short enough that this noise
    lands well under the boundary tolerance. Beyond x_far the profile is in
    the linear regime (amplitude ~ eps_seed and falling) and is written down
    in closed form as the decaying eigen-mode combination with the converged
    shooting coefficients; the splice is continuous by construction and off
    by only the quadratic manifold correction O(eps_seed^2).

    Shooting coefficients live in amplitude-at-x=0 units; exp(lam_i x_far)
    converts them to the seed scale.
    """
    params = _rhs_params(spec)
    f = lambda u, w, v: _rhs_scalar(params, u, w, v)
    up = spec.far.u_plus
    d = spec.u_minus - up
    delta = spec.delta
    scale = max(1.0, abs(up))

    stable = [i for i, lam in enumerate(eig.lambdas) if lam.real < 0]
    complex_pair = False
    if regime.is_supersonic:
        assert len(stable) == 2
        lam1, lam2 = (eig.lambdas[i] for i in stable)
        if abs(lam1.imag) > 0:
            # complex pair: real solutions are Re[(c1 - i c2) e^(lam x) r],
            # so the basis must be Re r, Im r of the SAME normalized r
            complex_pair = True
            r = eig.vectors[:, stable[0]]
            r = r / np.linalg.norm(r)
            basis = [np.real(r), np.imag(r)]
        else:
            if abs(lam1 - lam2) < 1e-8 * max(1.0, abs(lam1)):
                raise NumericsError(
                    "defective stable pair; shooting basis degenerates")
            basis = [np.real(eig.vectors[:, stable[0]]),
                     np.real(eig.vectors[:, stable[1]])]
            basis = [b / np.linalg.norm(b) for b in basis]
        rates = [eig.lambdas[i].real for i in stable]
    else:
        assert len(stable) == 1
        b = np.real(eig.vectors[:, stable[0]])
        basis = [b / np.linalg.norm(b)]
        rates = [eig.lambdas[stable[0]].real]

    slow = max(rates)   # least negative stable rate
    fast = min(rates)
    eps_seed = opts.eps_seed
    if eps_seed is None:
        eps_seed = 3e-5 * scale
    tail_floor = opts.tail_floor * scale
    x_domain = opts.x_domain
    if x_domain is None:
        x_domain = math.log(max(delta, eps_seed) / tail_floor) / abs(slow)
    # keep the Newton leg short: backward marching regrows roundoff injected
    # near the seed by the ratio of amplitudes, so the leg must not span more
    # than a few decades; the closed-form tail covers the rest
    x_far = math.log(max(delta / eps_seed, 10.0)) / abs(slow)
    spread = slow - fast
    if spread > 1e-6:
        # cap the cross-mode amplification exp(spread * x_far) near 1e6
        x_far = min(x_far, 14.0 / spread)
    x_far = min(x_far, x_domain)
    dx = x_domain / (opts.points - 1)

    growth = [math.exp(r * x_far) for r in rates]
    blow_bound = 1000.0 * max(delta, 1e-3)

    def boundary_state(coeffs, h_max, record=None):
        seed = sum(c * g * b for c, g, b in zip(coeffs, growth, basis))
        guard = lambda y: max(abs(v) for v in y) > blow_bound
        x_end, y = _integrate(f, x_far, seed, 0.0, tol=opts.ode_tol,
                              h_max=h_max, guard=guard, record=record)
        if x_end != 0.0:
            raise _TrialDiverged
        return np.array(y)

    def eigen_tail(coeffs, x):
        """Closed-form linear tail at coordinates x (at-0 amplitude units)."""
        x = np.asarray(x, dtype=float)
        if complex_pair:
            lam = eig.lambdas[stable[0]]
            r = eig.vectors[:, stable[0]] / np.linalg.norm(eig.vectors[:, stable[0]])
            c = coeffs[0] - 1j * coeffs[1]
            return np.real(np.outer(r, c * np.exp(lam * x)))
        cols = [c * np.exp(rate * x)[None, :] * b[:, None]
                for c, rate, b in zip(coeffs, rates, basis)]
        return sum(cols)

    # residual components: match u_bar(0) always, v_bar(0) only when the
    # stable subspace has a second parameter to spend on it
    take = (0, 2) if len(basis) == 2 else (0,)
    target = np.array([d] * len(take))

    def residual(coeffs, h_max):
        y0 = boundary_state(coeffs, h_max)
        return np.array([y0[i] for i in take]) - target

    # linear-theory initial guess
    B = np.array([[b[i] for b in basis] for i in take])
    try:
        coeffs = np.linalg.solve(B, target)
    except np.linalg.LinAlgError:
        coeffs, *_ = np.linalg.lstsq(B, target, rcond=None)

    # same step cap for the Newton iterations and the final record pass, so
    # the converged coefficients match the boundary value of the trajectory
    # that is actually returned
    h_run = dx / 4.0
    g = residual(coeffs, h_run)
    gnorm = np.max(np.abs(g))
    for _ in range(opts.max_iter):
        if gnorm <= opts.newton_tol * scale:
            break
        # finite-difference Jacobian in the shooting parameters; the map is
        # near-linear, so a generous step keeps integrator noise out of it
        Jn = np.zeros((len(take), len(coeffs)))
        for j in range(len(coeffs)):
            step = 1e-5 * max(abs(coeffs[j]), delta, 1e-8)
            cp = coeffs.copy()
            cp[j] += step
            Jn[:, j] = (residual(cp, h_run) - g) / step
        try:
            dc = np.linalg.solve(Jn, -g)
        except np.linalg.LinAlgError:
            raise ShootingError("singular shooting Jacobian", residual=gnorm)
        lam = 1.0
        for _ in range(10):
            try:
                g_new = residual(coeffs + lam * dc, h_run)
            except (SingularityError, _TrialDiverged, NumericsError,
                    ZeroDivisionError, OverflowError):
                lam *= 0.5
                continue
            if np.max(np.abs(g_new)) < gnorm * (1.0 - 1e-4 * lam) + 1e-300:
                break
            lam *= 0.5
        else:
            raise ShootingError("line search stalled", residual=gnorm)
        coeffs = coeffs + lam * dc
        g, gnorm = g_new, np.max(np.abs(g_new))
    else:
        raise ShootingError("no convergence in boundary shooting",
                            residual=gnorm)

    # final pass with a step cap tied to the output grid, so that the cubic
    # resample error stays far below the stencil truncation error
    record = []
    boundary_state(coeffs, h_max=dx / 4.0, record=record)

    x_grid = np.linspace(0.0, x_domain, opts.points)
    inner = x_grid <= x_far
    states_in, _ = _record_to_grid(spec, record, x_grid[inner])
    states = np.empty((3, opts.points))
    states[:, inner] = states_in
    if not np.all(inner):
        states[:, ~inner] = eigen_tail(coeffs, x_grid[~inner])
    rhs_values = _rhs_vectorized(params, states)
    compatible = abs(states[2, 0] - d) <= opts.match_tolerance
    return _build_profile(spec, x_grid, states, rhs_values, regime,
                          boundary_compatible=compatible, sigma0=delta), x_domain


def _solve_sonic(spec, opts, regime, eig):
    """Center-direction construction at M = 1.

    Backward marching is exponentially ill-posed here (the forward-stable
    mode grows under backward integration over the long algebraic-decay
    domain), so the trajectory is pinned by collocation instead: seed the
    center asymptotics u_bar = v_bar = -sigma, w_bar = a sigma^2 with the
    closed-form sigma, then Newton-polish the whole curve against the ODE
    with boundary data at x = 0 and a kill condition on the unstable mode at
    the far end.
    """
    params = _rhs_params(spec)
    up = spec.far.u_plus
    d = spec.u_minus - up
    delta = spec.delta
    if d >= 0.0:
        raise DomainError(
            "sonic profiles decay through u~ < u_plus; require u_minus < u_plus")
    consts = model.derived_constants(spec)
    a = consts.a
    sigma_seed = opts.sigma_seed
    if sigma_seed >= delta:
        sigma_seed = 0.1 * delta
    x_domain = opts.x_domain
    if x_domain is None:
        x_domain = (1.0 / sigma_seed - 1.0 / delta) / a

    # mesh uniform in 1/sigma so nodes thin out with the algebraic tail
    m = 400
    inv = np.linspace(1.0 / delta, 1.0 / delta + a * x_domain, m)
    x_nodes = (inv - 1.0 / delta) / a
    sig = 1.0 / inv
    y_guess = np.vstack((-sig, a * sig * sig, -sig))

    unstable = [i for i, lam in enumerate(eig.lambdas)
                if lam.real > opts.zero_tolerance]
    if len(unstable) != 1:
        raise NumericsError("sonic spectrum lacks a single unstable mode")
    ell = _left_eigenvector(farfield_jacobian(spec), eig.lambdas[unstable[0]].real)

    def fun(x, y):
        return _rhs_vectorized(params, y)

    def bc(ya, yb):
        return np.array([ya[0] - d, ya[2] - d, ell @ yb])

    sol = solve_bvp(fun, bc, x_nodes, y_guess, tol=opts.bvp_tol,
                    max_nodes=opts.bvp_max_nodes)
    if not sol.success:
        raise ShootingError(f"sonic collocation failed: {sol.message}",
                            residual=float(np.max(sol.rms_residuals)))

    x_grid = np.linspace(0.0, x_domain, opts.points)
    states = sol.sol(x_grid)
    rhs_values = _rhs_vectorized(params, states)
    return _build_profile(spec, x_grid, states, rhs_values, regime,
                          boundary_compatible=True, sigma0=delta), x_domain


def solve_steady(spec: model.ModelSpec,
                 options: SteadySolveOptions = None) -> SteadyProfile:
    """Construct the steady profile meeting u(0) = v(0) = u_minus.

    Supersonic: two-parameter Newton shooting on the stable subspace seed.
    Subsonic: one-parameter shooting on the stable direction; the phase-2
    boundary velocity is then determined by the trajectory and reported via
    achieved_v_minus / boundary_compatible instead of being enforced.
    Sonic: center-direction collocation (see _solve_sonic).
    """
    opts = options or SteadySolveOptions()
    delta = spec.delta
    if delta > opts.max_delta and not opts.allow_large_delta:
        raise DomainError(
            f"delta={delta:.4g} exceeds max_delta={opts.max_delta:.4g}; "
            "the construction is a small-delta method (set allow_large_delta "
            "to override)")
    regime = model.classify_regime(spec)

    if delta == 0.0:
        x_domain = opts.x_domain if opts.x_domain is not None else 20.0
        x = np.linspace(0.0, x_domain, opts.points)
        zero = np.zeros_like(x)
        far = spec.far
        return SteadyProfile(
            x=x, rho_t=np.full_like(x, far.rho_plus),
            u_t=np.full_like(x, far.u_plus),
            n_t=np.full_like(x, far.n_plus),
            v_t=np.full_like(x, far.u_plus),
            ux_t=zero, vx_t=zero.copy(), regime=regime, delta=0.0,
            achieved_u_minus=far.u_plus, achieved_v_minus=far.u_plus,
            boundary_compatible=True, sigma0=0.0,
            rho_plus=far.rho_plus, u_plus=far.u_plus, n_plus=far.n_plus)

    eig = eigensystem(farfield_jacobian(spec), opts.zero_tolerance)
    if regime.is_sonic:
        profile, x_domain = _solve_sonic(spec, opts, regime, eig)
    else:
        profile, x_domain = _shoot(spec, opts, regime, eig)

    tol = opts.farfield_tol
    if tol is None:
        if regime.is_sonic:
            tol = 3.0 * sigma_profile(model.derived_constants(spec).a,
                                      delta, x_domain)
        else:
            tol = max(1e-8 * max(1.0, abs(spec.far.u_plus)),
                      100.0 * opts.tail_floor)
    end_gap = max(abs(profile.rho_t[-1] - spec.far.rho_plus),
                  abs(profile.u_t[-1] - spec.far.u_plus),
                  abs(profile.n_t[-1] - spec.far.n_plus),
                  abs(profile.v_t[-1] - spec.far.u_plus))
    if end_gap > tol:
        raise ShootingError(
            f"far-field convergence failed: end gap {end_gap:.3e} > {tol:.3e}")
    return profile


# ---------------------------------------------------------------------------
# residual and decay diagnostics
# ---------------------------------------------------------------------------

# integer numerators, division by 12 dx deferred so that stencils of a
# constant cancel exactly
_D1_EDGE = np.array([
    [-25.0, 48.0, -36.0, 16.0, -3.0],
    [-3.0, -10.0, 18.0, -6.0, 1.0],
])

_D2_EDGE = np.array([
    [45.0, -154.0, 214.0, -156.0, 61.0, -10.0],
    [10.0, -15.0, -4.0, 14.0, -6.0, 1.0],
])


def _deriv1(f, dx):
    """Fourth-order first derivative: 5-point centered stencil inside,
    one-sided variants on the two cells nearest each end."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[2:-2] = f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]
    out[0] = _D1_EDGE[0] @ f[:5]
    out[1] = _D1_EDGE[1] @ f[:5]
    out[-1] = -(_D1_EDGE[0] @ f[-1:-6:-1])
    out[-2] = -(_D1_EDGE[1] @ f[-1:-6:-1])
    return out / (12.0 * dx)


def _deriv2(f, dx):
    """Fourth-order second derivative, same edge treatment as _deriv1."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2]
                 + 16.0 * f[3:-1] - f[4:])
    out[0] = _D2_EDGE[0] @ f[:6]
    out[1] = _D2_EDGE[1] @ f[:6]
    out[-1] = _D2_EDGE[0] @ f[-1:-7:-1]
    out[-2] = _D2_EDGE[1] @ f[-1:-7:-1]
    return out / (12.0 * dx * dx)


def steady_residual(spec: model.ModelSpec, profile: SteadyProfile) -> float:
    """Max pointwise residual of the two steady momentum balances.

    Fluxes are differentiated with high-order centered stencils (one-sided
    at the endpoints). The phase-1 viscous term is the direct second
    difference of u_t; the phase-2 term differentiates the stored vx_t once,
    since the construction provides that column exactly and v_t alone is
    still pinned through the flux and drag terms. The mass equations hold
    exactly by construction and are checked separately through the mass-flux
    identity.
    """
    if len(profile.x) < 6:
        raise InsufficientDataError("need at least 6 grid points for the stencils")
    f = spec.fluids
    dx = float(profile.x[1] - profile.x[0])
    m1, m2 = spec.mass_flux_1, spec.mass_flux_2
    p1 = f.A1 * profile.rho_t ** f.gamma
    p2 = f.A2 * profile.n_t ** f.alpha
    drag = profile.n_t * (profile.v_t - profile.u_t)
    res1 = (_deriv1(m1 * profile.u_t + p1, dx)
            - f.mu * _deriv2(profile.u_t, dx) - drag)
    res2 = (_deriv1(m2 * profile.v_t + p2, dx)
            - _deriv1(profile.n_t * profile.vx_t, dx) + drag)
    return float(max(np.max(np.abs(res1)), np.max(np.abs(res2))))


_FARFIELD_LIMITS = {
    "rho": lambda p: p.rho_plus,
    "u": lambda p: p.u_plus,
    "n": lambda p: p.n_plus,
    "v": lambda p: p.u_plus,
    "ux": lambda p: 0.0,
    "vx": lambda p: 0.0,
    "ux_over_sigma2": lambda p: 0.0,
}

_QUANTITY_COLUMNS = {
    "rho": "rho_t", "u": "u_t", "n": "n_t", "v": "v_t",
    "ux": "ux_t", "vx": "vx_t",
}


def fit_spatial_decay(profile: SteadyProfile, quantity: str, law: str,
                      window: tuple, sigma_params=None) -> SpatialDecayFit:
    """Least-squares decay fit of |q(x) - q_inf| on a window.

    Exponential law regresses log|q - q_inf| on x (rate_or_slope is the decay
    rate, positive for decay); algebraic law regresses on log(1 + delta x)
    (rate_or_slope is the power, about -1 for the leading sonic deviation).
    quantity "ux_over_sigma2" divides u~_x by the closed-form sigma^2, whose
    algebraic fit has slope about 0 and prefactor about the curvature
    constant; it needs sigma_params = (a, sigma0).
    """
    if quantity not in _FARFIELD_LIMITS:
        raise DomainError(f"unknown quantity {quantity!r}")
    if law not in (EXPONENTIAL, ALGEBRAIC):
        raise DomainError(f"unknown law {law!r}")
    x = profile.x
    if quantity == "ux_over_sigma2":
        if sigma_params is None:
            raise DomainError("quantity ux_over_sigma2 requires sigma_params")
        a, sigma0 = sigma_params
        q = profile.ux_t / sigma_profile(a, sigma0, x) ** 2
    else:
        q = getattr(profile, _QUANTITY_COLUMNS[quantity])
    x_lo, x_hi = window
    mask = (x >= x_lo) & (x <= x_hi)
    if int(mask.sum()) < 8:
        raise InsufficientDataError(
            f"decay window [{x_lo:.6g}, {x_hi:.6g}] holds only "
            f"{int(mask.sum())} samples (need 8)")
    dev = np.abs(q[mask] - _FARFIELD_LIMITS[quantity](profile))
    if np.any(dev <= 0.0):
        raise DomainError("quantity touches its far-field limit inside the window")
    logd = np.log(dev)
    if law == EXPONENTIAL:
        abscissa = x[mask]
        slope, intercept = np.polyfit(abscissa, logd, 1)
        rate = -slope
    else:
        abscissa = np.log1p(profile.delta * x[mask])
        slope, intercept = np.polyfit(abscissa, logd, 1)
        rate = slope
    fitted = slope * abscissa + intercept
    ss_res = float(np.sum((logd - fitted) ** 2))
    ss_tot = float(np.sum((logd - logd.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return SpatialDecayFit(law=law, rate_or_slope=float(rate),
                           prefactor=float(np.exp(intercept)),
                           r_squared=float(r2), window=(x_lo, x_hi))


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

PROFILE_HEADER = "x,rho_t,u_t,n_t,v_t,ux_t,vx_t"


def save_profile_csv(profile: SteadyProfile, path):
    cols = np.column_stack([profile.x, profile.rho_t, profile.u_t,
                            profile.n_t, profile.v_t, profile.ux_t,
                            profile.vx_t])
    with open(path, "w") as fh:
        fh.write(PROFILE_HEADER + "\n")
        for row in cols:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def load_profile_csv(path):
    """Read a profile CSV back as a dict of named columns."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != PROFILE_HEADER:
            raise DomainError(f"unexpected profile header {header!r}")
        data = np.loadtxt(fh, delimiter=",")
    names = PROFILE_HEADER.split(",")
    return {name: data[:, i] for i, name in enumerate(names)}
