"""Social costs, inefficiency gap, residuals, bounds and certificates.

The central quantities along an equilibrium (u, m):

* the efficiency residual fields int dF/dm(x, m, y) m(dx) and its
  terminal analogue -- both vanish identically iff efficient equilibria
  exist from every start;
* squared-residual integrals: the lower-bound integrands restricted to
  the window [t0+eps, T-eps], and their full-interval square root, which
  is the upper-bound norm;
* the perturbation certificate: feasible perturbed controls built from
  the residuals, whose cost phi(h) can never undercut the planner
  optimum, so max_h (cost(u,m) - phi(h)) is a constant-free lower bound
  on the gap;
* the duality diagnostic comparing the Hamiltonian convexity terms
  against the coupling terms along equilibrium and planner solutions.

The unknown regularity constants of the quantitative bounds are not
estimated; everything here is either an exact discrete inequality or a
structural zero/nonzero dichotomy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MassConservationError
from .grids import ScalarPath, VectorPath, reconstruct_flux_1d
from .mfg import MFGSolution, SolverParams, solve_mfg
from .model import Coupling, Problem, TerminalCost, delta_ghat, residual_field
from .planner import PlannerSolution, planner_cost, solve_planner_descent, solve_planner_system
from .stepping import d1_central, fp_forward_sweep, time_weights


def social_cost(sol: MFGSolution, problem: Problem) -> float:
    """Averaged cost of the population playing the equilibrium feedback."""
    return planner_cost(sol.m, sol.alpha_star, problem)


def residual_F(coupling: Coupling, m: np.ndarray) -> np.ndarray:
    """Efficiency residual field of the running coupling at one density slice."""
    return residual_field(coupling, m)


def residual_G(terminal: TerminalCost, m: np.ndarray) -> np.ndarray:
    """Efficiency residual field of the terminal cost at the final density."""
    return residual_field(terminal, m)


# ---------------------------------------------------------------------------
# lower/upper bound integrands
# ---------------------------------------------------------------------------

def _window_weights(grid, eps: float) -> np.ndarray:
    """Trapezoidal weights supported on time levels inside [t0+eps, T-eps]."""
    if eps < 0 or 2 * eps >= grid.T - grid.t0:
        raise ValueError(f"need 0 <= eps < (T-t0)/2, got {eps}")
    t = grid.times()
    inside = (t >= grid.t0 + eps - 1e-12) & (t <= grid.T - eps + 1e-12)
    idx = np.flatnonzero(inside)
    w = np.zeros(grid.nt + 1)
    w[idx] = grid.dt
    w[idx[0]] = w[idx[-1]] = 0.5 * grid.dt
    return w


def lb_integrands(sol: MFGSolution, problem: Problem, eps: float) -> tuple[float, float]:
    """Squared-residual integrals entering the gap lower bound.

    lb_F integrates ||residual_F(m(t))||_L2^2 over [t0+eps, T-eps]; lb_G is
    the squared L2 norm of the terminal residual.  eps = 0 gives the
    full-interval quantity used by ub_norm.
    """
    grid = problem.grid
    m = sol.m.values
    w = _window_weights(grid, eps)
    lb_f = 0.0
    for k in np.flatnonzero(w):
        r = residual_field(problem.coupling, m[k])
        lb_f += w[k] * float(r @ r) * grid.dx
    rg = residual_field(problem.terminal, m[-1])
    lb_g = float(rg @ rg) * grid.dx
    return lb_f, lb_g


def ub_norm(sol: MFGSolution, problem: Problem) -> float:
    """Square root of the full-interval residual integral plus the terminal one.

    This is the quantity whose size controls the gap from above for convex
    averaged couplings; it vanishes exactly for the efficient structure and
    scales linearly in the coupling strength.
    """
    lb_f, lb_g = lb_integrands(sol, problem, 0.0)
    return float(np.sqrt(lb_f + lb_g))


# ---------------------------------------------------------------------------
# perturbation certificate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Perturbation:
    """Mass-neutral density perturbation with its compensating flux.

    mu has zero-mean slices and vanishes at t0; beta closes the discrete
    continuity equation; tau is the largest h keeping m + h mu >= m/2
    pointwise, realizing the admissible range 1/(2 C ||mu||) of the
    certificate construction.
    """

    mu: ScalarPath
    beta: VectorPath
    gamma: np.ndarray
    tau: float
    variant: str


def _ramp_running(grid, eps: float) -> np.ndarray:
    t0, T = grid.t0, grid.T
    t = grid.times()
    g = np.ones_like(t)
    g = np.where(t <= t0 + 0.5 * eps, 0.0, g)
    rise = (t > t0 + 0.5 * eps) & (t < t0 + eps)
    g = np.where(rise, 2.0 * (t - t0 - 0.5 * eps) / eps, g)
    fall = t >= T - eps
    g = np.where(fall, (T - t) / eps, g)
    return g


def _ramp_terminal(grid, eps: float) -> np.ndarray:
    t = grid.times()
    g = np.where(t >= grid.T - eps, (t - (grid.T - eps)) / eps, 0.0)
    return g


def _check_eps(grid, eps: float):
    if not 0.0 < eps < 0.5 * (grid.T - grid.t0):
        raise ValueError(f"need 0 < eps < (T-t0)/2, got {eps}")


def _build_perturbation(sol: MFGSolution, grid, direction: np.ndarray,
                        gamma: np.ndarray, variant: str) -> Perturbation:
    """Assemble (mu, beta, tau) from the residual direction field.

    direction[k] is the residual field paired with slice k; mu is
    -gamma(t) m_slice * direction, where m_slice is m(t) for the running
    variant and m(T) for the terminal one (already folded into direction
    by the callers).
    """
    mu = -gamma[:, None] * direction
    m = sol.m.values
    # positivity margin: m + h mu >= m/2 <=> h * (-mu/m) <= 1/2 where mu < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(m > 0.0, -mu / m, np.inf)
    worst = float(np.nanmax(np.where(np.isfinite(shrink), shrink, 0.0)))
    tau = np.inf if worst <= 0.0 else 0.5 / worst
    mu_path = ScalarPath(mu, grid)
    beta = reconstruct_flux_1d(mu_path, grid)
    return Perturbation(mu=mu_path, beta=beta, gamma=gamma, tau=tau, variant=variant)


def build_perturbation_running(sol: MFGSolution, problem: Problem,
                               eps: float) -> Perturbation:
    """Perturbation along the running-cost residual with the four-piece ramp."""
    grid = problem.grid
    _check_eps(grid, eps)
    gamma = _ramp_running(grid, eps)
    m = sol.m.values
    active = gamma > 0.0
    if m[active].min() <= 0.0:
        k = int(np.flatnonzero(active)[np.argmin(m[active].min(axis=1))])
        raise MassConservationError(
            f"density vanishes on slice {k}; the perturbation needs m > 0 "
            "wherever the ramp is active"
        )
    direction = np.stack([m[k] * residual_field(problem.coupling, m[k])
                          for k in range(grid.nt + 1)])
    return _build_perturbation(sol, grid, direction, gamma, "running-cost")


def build_perturbation_terminal(sol: MFGSolution, problem: Problem,
                                eps: float) -> Perturbation:
    """Perturbation along the terminal residual, supported on [T-eps, T]."""
    grid = problem.grid
    _check_eps(grid, eps)
    gamma = _ramp_terminal(grid, eps)
    m_T = sol.m.values[-1]
    if m_T.min() <= 0.0:
        raise MassConservationError("terminal density vanishes somewhere")
    rg = residual_field(problem.terminal, m_T)
    direction = np.tile(m_T * rg, (grid.nt + 1, 1))
    return _build_perturbation(sol, grid, direction, gamma, "terminal")


def phi_eval(sol: MFGSolution, pert: Perturbation, h: float,
             problem: Problem) -> float:
    """Cost of the perturbed feasible pair at perturbation size h.

    The perturbation defines the control alpha_h = (m alpha* + h beta) /
    (m + h mu); the density is re-solved under the discrete dynamics, so
    the value is the exact discrete control objective at alpha_h.  That
    makes phi(h) a true member of the planner's feasible set for every h
    (phi(h) >= discrete optimum), which is the inequality the certificate
    rests on; at h = 0 it reproduces the equilibrium pair and cost
    exactly.
    """
    if not 0.0 <= h <= pert.tau:
        raise ValueError(f"h={h} outside the admissible range [0, {pert.tau}]")
    grid = problem.grid
    alpha = sol.alpha_star.values[..., 0]
    if h == 0.0:
        alpha_h = alpha
    else:
        m = sol.m.values
        mu = pert.mu.values
        beta = pert.beta.values[..., 0]
        alpha_h = (m * alpha + h * beta) / (m + h * mu)
    m_resolved = fp_forward_sweep(grid, problem.m0, alpha_h)
    return planner_cost(m_resolved, alpha_h, problem)


def certificate(sol: MFGSolution, problem: Problem, eps: float,
                h_samples: int = 32) -> float:
    """Constant-free lower bound on the inefficiency gap.

    Builds both perturbation variants, samples h log-spaced over
    [1e-4 tau, tau] and returns max(0, max_h (cost(u,m) - phi(h))).  Valid
    because every phi(h) is the cost of a feasible pair, hence at least
    the planner optimum.
    """
    cost_eq = social_cost(sol, problem)
    best = 0.0
    for builder in (build_perturbation_running, build_perturbation_terminal):
        pert = builder(sol, problem, eps)
        if float(np.abs(pert.mu.values).max()) == 0.0:
            continue  # residual vanishes; this variant certifies nothing
        tau = pert.tau if np.isfinite(pert.tau) else 1.0
        for h in np.geomspace(1e-4 * tau, tau, h_samples):
            best = max(best, cost_eq - phi_eval(sol, pert, h, problem))
    return best


# ---------------------------------------------------------------------------
# duality diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualityReport:
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def duality_check(mfg: MFGSolution, plan: PlannerSolution,
                  problem: Problem) -> DualityReport:
    """Convexity terms vs. coupling terms along (u, m) and (u_hat, m_hat).

    lhs is the exact Bregman form of the Hamiltonian convexity terms,
    sum over time of int (m B(Du -> Du_hat) + m_hat B(Du_hat -> Du)); for
    the quadratic Hamiltonian this equals (1/2) int int (m + m_hat)
    |Du - Du_hat|^2, i.e. the convexity constant enters with its sharp
    value.  rhs collects the coupling and terminal terms

      - int int (F(x, m) - dFhat/dm(m_hat, x)) (m - m_hat)
      - int (G(x, m(T)) - dGhat/dm(m_hat(T), x)) (m(T) - m_hat(T)),

    and slack = rhs - lhs is nonnegative (up to discretization) whenever
    the averaged coupling functionals are convex.  Expects the planner
    solution from the system route (its u_hat is a value function).
    """
    grid = problem.grid
    ham = problem.hamiltonian
    x = grid.xs()
    w = time_weights(grid)
    u, uh = mfg.u.values, plan.u_hat.values
    m, mh = mfg.m.values, plan.m_hat.values

    lhs = 0.0
    rhs = 0.0
    for k in range(grid.nt + 1):
        du = d1_central(u[k], grid.dx)
        duh = d1_central(uh[k], grid.dx)
        breg_m = ham.h0(x, duh) - ham.h0(x, du) - ham.dp_h0(x, du) * (duh - du)
        breg_mh = ham.h0(x, du) - ham.h0(x, duh) - ham.dp_h0(x, duh) * (du - duh)
        lhs += w[k] * float(m[k] @ breg_m + mh[k] @ breg_mh) * grid.dx
        f_term = problem.coupling.eval(m[k]) - delta_ghat(problem.coupling, mh[k])
        rhs -= w[k] * float(f_term @ (m[k] - mh[k])) * grid.dx
    g_term = problem.terminal.eval(m[-1]) - delta_ghat(problem.terminal, mh[-1])
    rhs -= float(g_term @ (m[-1] - mh[-1])) * grid.dx
    return DualityReport(lhs=lhs, rhs=rhs)


# ---------------------------------------------------------------------------
# Holder diagnostic for x-free couplings
# ---------------------------------------------------------------------------

def holder_diagnostic(sol: MFGSolution, problem: Problem, eps: float) -> float:
    """sup over t1 != t2 in [t0+eps, T-eps] of |F(m(t2)) - F(m(t1))| / sqrt(dt).

    Only meaningful for x-free couplings, where this modulus controls the
    gap from below; raises for any other catalog label.
    """
    if problem.coupling.label != "xfree":
        raise ValueError(
            f"Holder diagnostic needs an x-free coupling, got {problem.coupling.label!r}"
        )
    grid = problem.grid
    t = grid.times()
    idx = np.flatnonzero((t >= grid.t0 + eps - 1e-12) & (t <= grid.T - eps + 1e-12))
    f = np.array([problem.coupling.eval(sol.m.values[k])[0] for k in idx])
    tt = t[idx]
    df = np.abs(f[:, None] - f[None, :])
    dts = np.abs(tt[:, None] - tt[None, :])
    mask = dts > 0
    return float(np.max(df[mask] / np.sqrt(dts[mask])))


# ---------------------------------------------------------------------------
# aggregated report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EfficiencyReport:
    """Flat record of costs, gap, residual norms and the certificate."""

    cost_mfg: float
    cost_planner: float          # descent value: constructive upper bound
    cost_planner_system: float   # optimality-system value, reported alongside
    gap: float
    lb_integrand_F: float
    lb_integrand_G: float
    ub_norm: float
    residual_F_sup: float
    residual_G_sup: float
    certificate: float
    epsilon: float
    holder: float
    mfg_converged: bool
    system_converged: bool
    descent_converged: bool
    mfg_iterations: int
    descent_iterations: int
    fp_residual: float
    hjb_residual: float
    fpk_residual: float
    planner_values_disagree: bool

    SCHEMA = (
        "cost_mfg", "cost_planner", "cost_planner_system", "gap",
        "lb_integrand_F", "lb_integrand_G", "ub_norm",
        "residual_F_sup", "residual_G_sup", "certificate", "epsilon",
        "holder", "mfg_converged", "system_converged", "descent_converged",
        "mfg_iterations", "descent_iterations",
        "fp_residual", "hjb_residual", "fpk_residual",
        "planner_values_disagree",
    )


def default_epsilon(grid) -> float:
    """The ramp must resolve on the time grid (clamped below (T-t0)/2)."""
    horizon = grid.T - grid.t0
    return min(max(4.0 * grid.dt, horizon / 16.0), horizon * 7.0 / 16.0)


def full_report(problem: Problem, params: SolverParams | None = None,
                eps: float | None = None) -> EfficiencyReport:
    """Solve everything and aggregate the efficiency quantities.

    The gap uses the descent value of the planner cost (a constructive
    upper bound on the discrete optimum, so the reported gap is a
    conservative estimate); the system value is recorded alongside and a
    disagreement beyond 1e-3 relative is flagged, which for nonconvex
    couplings signals that the optimality system found a non-minimal
    critical point.
    """
    params = params or SolverParams()
    grid = problem.grid
    eps = default_epsilon(grid) if eps is None else eps

    mfg = solve_mfg(problem, params)
    cost_eq = social_cost(mfg, problem)
    descent = solve_planner_descent(problem, params, init=mfg.alpha_star)
    system = solve_planner_system(problem, params)

    m = mfg.m.values
    res_f_sup = max(float(np.abs(residual_field(problem.coupling, m[k])).max())
                    for k in range(grid.nt + 1))
    res_g_sup = float(np.abs(residual_field(problem.terminal, m[-1])).max())
    lb_f, lb_g = lb_integrands(mfg, problem, eps)
    cert = certificate(mfg, problem, eps)
    hol = (holder_diagnostic(mfg, problem, eps)
           if problem.coupling.label == "xfree" else float("nan"))
    disagree = abs(system.cost - descent.cost) > 1e-3 * (1.0 + abs(descent.cost))

    return EfficiencyReport(
        cost_mfg=cost_eq,
        cost_planner=descent.cost,
        cost_planner_system=system.cost,
        gap=cost_eq - descent.cost,
        lb_integrand_F=lb_f,
        lb_integrand_G=lb_g,
        ub_norm=ub_norm(mfg, problem),
        residual_F_sup=res_f_sup,
        residual_G_sup=res_g_sup,
        certificate=cert,
        epsilon=eps,
        holder=hol,
        mfg_converged=mfg.converged,
        system_converged=system.converged,
        descent_converged=descent.converged,
        mfg_iterations=mfg.iterations,
        descent_iterations=descent.iterations,
        fp_residual=mfg.fp_residual,
        hjb_residual=mfg.hjb_residual,
        fpk_residual=mfg.fpk_residual,
        planner_values_disagree=disagree,
    )
