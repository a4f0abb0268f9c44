"""Shared d=1 time-stepping kernels for the forward-backward solvers.

Conventions, used consistently by the equilibrium solver, the planner
system solver and the planner descent dynamics:

* u lives on time levels 0..nt; the backward step computes u[k] from
  u[k+1] with implicit diffusion and the Hamiltonian evaluated explicitly
  at the central gradient of u[k+1]; the coupling field is taken at the
  density slice of level k.
* m lives on time levels 0..nt; step k -> k+1 uses the drift slice k,
  implicit diffusion and an implicit conservative upwind flux on faces
  (face j sits between cells j-1 and j).  The resulting matrix is an
  M-matrix for any drift, so positivity holds unconditionally; the
  update is re-expressed in face-flux form so mass is conserved to
  round-off regardless of the linear-solve residual.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import LinearSolveError, MassConservationError, TimeStepDivergenceError
from .grids import Grid

MASS_DRIFT_RAISE = 1e-10  # larger drift than this indicates a scheme bug


def solve_periodic_tridiag(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray,
                           rhs: np.ndarray) -> np.ndarray:
    """Solve A x = rhs for A periodic tridiagonal.

    Band convention is "rolled": lower[i] = A[i, i-1] with lower[0] the
    corner A[0, n-1], and upper[i] = A[i, i+1] with upper[n-1] = A[n-1, 0].
    Uses the Sherman-Morrison rank-one reduction to two banded solves.
    rhs may be (n,) or (n, k).
    """
    n = diag.shape[0]
    beta0 = lower[0]   # A[0, n-1]
    betan = upper[-1]  # A[n-1, 0]
    gamma = -diag[0]
    d = diag.copy()
    d[0] -= gamma
    d[-1] -= beta0 * betan / gamma

    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = d
    ab[2, :-1] = lower[1:]

    u = np.zeros(n)
    u[0] = gamma
    u[-1] = betan

    b = np.column_stack([np.atleast_2d(rhs.T).T, u])
    try:
        sol = solve_banded((1, 1), ab, b)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - singular system
        raise LinearSolveError(f"banded solve failed: {exc}") from exc
    z = sol[:, -1]
    y = sol[:, :-1]
    # v = (1, 0, ..., 0, beta0/gamma)
    vy = y[0] + (beta0 / gamma) * y[-1]
    vz = z[0] + (beta0 / gamma) * z[-1]
    x = y - np.outer(z, vy / (1.0 + vz))
    x = x[:, 0] if np.ndim(rhs) == 1 else x
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("periodic tridiagonal solve produced non-finite values")
    return x


def d1_central(f: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(f, -1) - np.roll(f, 1)) / (2.0 * dx)


def lap1(f: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(f, -1) - 2.0 * f + np.roll(f, 1)) / dx**2


def time_weights(grid: Grid) -> np.ndarray:
    """Trapezoidal weights on the time levels 0..nt."""
    w = np.full(grid.nt + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


# ---------------------------------------------------------------------------
# backward Hamilton-Jacobi-Bellman sweep
# ---------------------------------------------------------------------------

def hjb_backward_sweep(grid: Grid, hamiltonian, coupling_fields: np.ndarray,
                       terminal_field: np.ndarray,
                       source_fields: np.ndarray | None = None) -> np.ndarray:
    """Integrate -du/dt - lap u + h0(x, Du) - F = S backward from u(T).

    coupling_fields[k] is F(., m_k); source_fields[k] (optional) the extra
    right-hand side of the planner system.  Returns u on all levels.
    """
    n, nt, dt, dx = grid.n, grid.nt, grid.dt, grid.dx
    x = grid.xs()
    r = dt / dx**2
    lower = np.full(n, -r)
    diag = np.full(n, 1.0 + 2.0 * r)
    upper = np.full(n, -r)

    u = np.empty((nt + 1, n))
    u[nt] = terminal_field
    for k in range(nt - 1, -1, -1):
        du = d1_central(u[k + 1], dx)
        with np.errstate(over="ignore", invalid="ignore"):
            ham = hamiltonian.h0(x, du) - coupling_fields[k]
            if source_fields is not None:
                ham = ham - source_fields[k]
            rhs = u[k + 1] - dt * ham
        if not np.all(np.isfinite(rhs)):
            du_max = float(np.abs(du[np.isfinite(du)]).max()) if np.any(np.isfinite(du)) else np.inf
            suggested = 0.5 * dx / max(du_max, 1.0)
            raise TimeStepDivergenceError(
                f"non-finite values at level {k}; the explicit Hamiltonian term "
                f"needs a smaller step (try dt <= {suggested:.3e})",
                suggested_dt=min(suggested, 0.5 * dt),
            )
        u[k] = solve_periodic_tridiag(lower, diag, upper, rhs)
    return u


def hjb_residual(grid: Grid, hamiltonian, u: np.ndarray, coupling_fields: np.ndarray,
                 source_fields: np.ndarray | None = None) -> float:
    """Sup-norm defect of the discrete backward equation over all steps."""
    worst = 0.0
    x = grid.xs()
    for k in range(grid.nt):
        du = d1_central(u[k + 1], grid.dx)
        res = ((u[k] - u[k + 1]) / grid.dt - lap1(u[k], grid.dx)
               + hamiltonian.h0(x, du) - coupling_fields[k])
        if source_fields is not None:
            res = res - source_fields[k]
        worst = max(worst, float(np.abs(res).max()))
    return worst


# ---------------------------------------------------------------------------
# forward Fokker-Planck sweep (implicit upwind transport + diffusion)
# ---------------------------------------------------------------------------

def _face_drift(a: np.ndarray) -> np.ndarray:
    """Average cell drift onto faces; face j sits between cells j-1 and j."""
    return 0.5 * (np.roll(a, 1) + a)


def fp_step(grid: Grid, m: np.ndarray, a_cells: np.ndarray) -> np.ndarray:
    """One implicit step of dm/dt - lap m + div(m a) = 0 with cell drift a.

    Solves the M-matrix system, then rebuilds the update from face fluxes
    so the new slice has exactly the old mass up to round-off.
    """
    dt, dx, n = grid.dt, grid.dx, grid.n
    bf = _face_drift(a_cells)
    bp = np.maximum(bf, 0.0)
    bm = np.minimum(bf, 0.0)
    r = dt / dx**2
    c = dt / dx
    lower = -r - c * bp
    upper = -r + c * np.roll(bm, -1)
    diag = 1.0 + 2.0 * r + c * (np.roll(bp, -1) - bm)
    m_t = solve_periodic_tridiag(lower, diag, upper, m)
    # total outgoing face flux: diffusive gradient minus upwind advective flux
    theta = (m_t - np.roll(m_t, 1)) / dx - (bp * np.roll(m_t, 1) + bm * m_t)
    m_new = m + c * (np.roll(theta, -1) - theta)
    if not np.all(np.isfinite(m_new)):
        raise TimeStepDivergenceError("non-finite density during forward step",
                                      suggested_dt=0.5 * grid.dt)
    return m_new


def fp_forward_sweep(grid: Grid, m0: np.ndarray, a_path: np.ndarray) -> np.ndarray:
    """Integrate the density forward from m0 under the drift path a_path.

    a_path has nt+1 (or nt) slices; slice k drives step k -> k+1.  Raises
    if per-slice mass drifts by more than 1e-10 (a scheme bug, not a data
    error).
    """
    nt = grid.nt
    m = np.empty((nt + 1, grid.n))
    m[0] = m0
    target = m0.sum() * grid.dx
    for k in range(nt):
        m[k + 1] = fp_step(grid, m[k], a_path[k])
        mass = m[k + 1].sum() * grid.dx
        if abs(mass - target) > MASS_DRIFT_RAISE:
            raise MassConservationError(
                f"mass drifted to {mass:.15f} at step {k + 1}"
            )
    return m


def fp_residual(grid: Grid, m: np.ndarray, a_path: np.ndarray) -> float:
    """Sup-norm defect of the discrete forward equation over all steps."""
    worst = 0.0
    dx, dt = grid.dx, grid.dt
    for k in range(grid.nt):
        bf = _face_drift(a_path[k])
        bp = np.maximum(bf, 0.0)
        bm = np.minimum(bf, 0.0)
        w = bp * np.roll(m[k + 1], 1) + bm * m[k + 1]
        res = ((m[k + 1] - m[k]) / dt - lap1(m[k + 1], dx)
               + (np.roll(w, -1) - w) / dx)
        worst = max(worst, float(np.abs(res).max()))
    return worst
