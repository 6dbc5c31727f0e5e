"""Entropic optimal transport on product grids by alternate scaling.

The regularized problem minimizes

    sum_ij c_ij pi_ij h1 h2  +  gamma * sum_ij pi_ij (log pi_ij - 1) h1 h2

over nonnegative plans pi with prescribed marginals mu and nu. Its
optimality system is solved by alternately rescaling two vectors a and b
against the Gibbs kernel K = exp(-c / gamma); the optimal plan is
pi_ij = a_i K_ij b_j. The dual objective is

    -gamma * [ sum_ij a_i b_j K_ij h1 h2
               - sum_i log(a_i) mu_i h1 - sum_j log(b_j) nu_j h2 ]

and equals the primal value at the joint optimum. Cells where a marginal
vanishes carry scaling value 0 for the whole run, which reproduces the
product support structure of the optimal plan exactly.

Both a direct-arithmetic loop (:func:`solve`) and a log-domain loop
(:func:`solve_logdomain`) are provided; they honor the same contract and
agree to near machine precision whenever the direct loop does not over-
or underflow. The log-domain loop is the default everywhere else in the
package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .measures import Grid1D, GridMeasure, ProductDensity

__all__ = [
    "CostField",
    "GibbsKernel",
    "DualState",
    "Potentials",
    "SolveReport",
    "SolveResult",
    "TransportPlan",
    "SandwichCheck",
    "SolverError",
    "ParameterError",
    "DivergedScalingError",
    "DirectOverflowError",
    "ConvergenceError",
    "COST_RULES",
    "cost_field",
    "gibbs_kernel",
    "sinkhorn_step_a",
    "sinkhorn_step_b",
    "solve",
    "solve_logdomain",
    "primal_value",
    "dual_value",
    "normalize_gauge",
    "optimality_residual",
    "potentials_from_state",
    "potential_sandwich_check",
    "support_check",
]

#: the transport plan is just a nonnegative density on the product grid
TransportPlan = ProductDensity


class SolverError(Exception):
    """Base class for solver failures."""


class ParameterError(SolverError, ValueError):
    """Invalid argument (non-probability marginal, non-positive gamma, ...)."""


class DivergedScalingError(SolverError):
    """A scaling denominator vanished at a cell with positive marginal."""

    def __init__(self, iteration: int, side: str):
        self.iteration = iteration
        self.side = side
        super().__init__(
            f"scaling denominator vanished on the {side} side at iteration {iteration}"
        )


class DirectOverflowError(SolverError):
    """Direct-mode arithmetic left the representable range."""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(
            f"direct-mode overflow at iteration {iteration}; retry in log-domain "
            "mode (mode='log')"
        )


class ConvergenceError(SolverError):
    """Marginal residual did not reach tol within max_iter; carries the report."""

    def __init__(self, report: "SolveReport"):
        self.report = report
        super().__init__(
            f"no convergence after {report.iterations} iterations, last residual "
            f"{report.residual_history[-1]:.3e}"
        )


def _sqdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (x - y) ** 2


def _absdist(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.abs(x - y)


#: closed-form cost rules; each maps broadcastable x, y arrays to costs
COST_RULES: dict = {"sqdist": _sqdist, "abs": _absdist}


@dataclass(frozen=True, eq=False)
class CostField:
    """Cost values c(x_i, y_j) tabulated on a product grid.

    ``rule`` names the closed-form rule the table was built from, or None
    for file-based tables that admit no off-grid evaluation.
    """

    grid1: Grid1D
    grid2: Grid1D
    values: np.ndarray
    rule: Optional[str] = None

    def __init__(self, grid1: Grid1D, grid2: Grid1D, values, rule: Optional[str] = None):
        vals = np.array(values, dtype=float, copy=True)
        if vals.shape != (grid1.n, grid2.n):
            raise ParameterError(
                f"cost shape {vals.shape} does not match grids ({grid1.n}, {grid2.n})"
            )
        if not np.all(np.isfinite(vals)):
            raise ParameterError("cost values must be finite")
        if np.any(vals < 0):
            raise ParameterError("cost values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "grid1", grid1)
        object.__setattr__(self, "grid2", grid2)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "rule", rule)


def cost_field(grid1: Grid1D, grid2: Grid1D, rule: str) -> CostField:
    """Tabulate a named closed-form cost rule on the product grid."""
    if rule not in COST_RULES:
        raise ParameterError(f"unknown cost rule {rule!r}, expected one of {sorted(COST_RULES)}")
    fn = COST_RULES[rule]
    vals = fn(grid1.centers[:, None], grid2.centers[None, :])
    return CostField(grid1, grid2, vals, rule)


@dataclass(frozen=True, eq=False)
class GibbsKernel:
    """The kernel K_ij = exp(-c_ij / gamma) together with its exact logarithm.

    ``log_values`` (= -c/gamma) is always kept; ``values`` may underflow to
    zero for very small gamma, which only matters to the direct-mode loop.
    """

    grid1: Grid1D
    grid2: Grid1D
    gamma: float
    values: np.ndarray
    log_values: np.ndarray


def gibbs_kernel(c: CostField, gamma: float) -> GibbsKernel:
    """Build the Gibbs kernel of a cost table; gamma must be positive."""
    if not np.isfinite(gamma) or gamma <= 0:
        raise ParameterError(f"gamma must be positive, got {gamma}")
    log_values = -c.values / gamma
    values = np.exp(log_values)
    values.setflags(write=False)
    log_values.setflags(write=False)
    return GibbsKernel(c.grid1, c.grid2, float(gamma), values, log_values)


@dataclass(frozen=True, eq=False)
class DualState:
    """Scaling vectors with their exact log-domain shadows.

    Entries are 0 (log shadow -inf) exactly on the cells where the
    corresponding marginal vanishes; elsewhere strictly positive with
    exp(log_a) = a to within rounding.
    """

    a: np.ndarray
    b: np.ndarray
    log_a: np.ndarray
    log_b: np.ndarray


@dataclass(frozen=True, eq=False)
class Potentials:
    """Back-substituted dual potentials alpha = gamma log a, beta = gamma log b.

    Cells outside the marginal supports carry -inf sentinels; no claim of
    continuity is made.
    """

    alpha: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class SolveReport:
    """Outcome record of one solve.

    ``residual_history`` lists the weighted L1 error of the unenforced
    marginal after each scaling pass; ``optimality_residual`` is the pair
    of marginal-equation residuals of the final state; ``gauge_constant``
    is the factor the a-vector was divided by to normalize its integral
    to 1.
    """

    iterations: int
    residual_history: Tuple[float, ...]
    primal_value: float
    dual_value: float
    gap: float
    optimality_residual: Tuple[float, float]
    gauge_constant: float
    converged: bool
    mode: str


class SolveResult(NamedTuple):
    plan: TransportPlan
    state: DualState
    potentials: Potentials
    report: SolveReport


def _logsumexp(m: np.ndarray, axis: int) -> np.ndarray:
    """Max-subtracted log-sum-exp that tolerates all--inf slices."""
    mx = np.max(m, axis=axis)
    safe = np.isfinite(mx)
    shifted = m - np.expand_dims(np.where(safe, mx, 0.0), axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(np.sum(np.exp(shifted), axis=axis))
    return np.where(safe, mx + out, -np.inf)


def sinkhorn_step_a(K: GibbsKernel, b: np.ndarray, mu: GridMeasure) -> np.ndarray:
    """One scaling pass enforcing the first marginal.

    Returns a with a_i = mu_i / (sum_j K_ij b_j h2) on the support of mu
    and a_i = 0 elsewhere; afterwards the first marginal of a_i K_ij b_j
    equals mu exactly up to rounding.
    """
    if mu.grid.n != K.grid1.n:
        raise ParameterError("mu does not live on the kernel's first grid")
    b = np.asarray(b, dtype=float)
    denom = K.values @ b * K.grid2.h
    a = np.zeros(K.grid1.n)
    supp = mu.density > 0
    bad = supp & (denom <= 0)
    if np.any(bad):
        raise DivergedScalingError(0, "a")
    a[supp] = mu.density[supp] / denom[supp]
    return a


def sinkhorn_step_b(K: GibbsKernel, a: np.ndarray, nu: GridMeasure) -> np.ndarray:
    """Mirror image of :func:`sinkhorn_step_a`, enforcing the second marginal."""
    if nu.grid.n != K.grid2.n:
        raise ParameterError("nu does not live on the kernel's second grid")
    a = np.asarray(a, dtype=float)
    denom = K.values.T @ a * K.grid1.h
    b = np.zeros(K.grid2.n)
    supp = nu.density > 0
    bad = supp & (denom <= 0)
    if np.any(bad):
        raise DivergedScalingError(0, "b")
    b[supp] = nu.density[supp] / denom[supp]
    return b


def _check_probability(m: GridMeasure, name: str) -> None:
    mass = m.mass
    if abs(mass - 1.0) > 1e-10 * max(1.0, abs(mass)):
        raise ParameterError(f"{name} must be a probability measure, has mass {mass!r}")


class _CoreResult(NamedTuple):
    log_a: np.ndarray  # on support cells only
    log_b: np.ndarray
    residuals: list
    converged: bool
    iterations: int


def _core_direct(
    mu_s: np.ndarray,
    nu_t: np.ndarray,
    K_st: np.ndarray,
    h1: float,
    h2: float,
    tol: float,
    max_iter: int,
) -> _CoreResult:
    """Direct-arithmetic scaling loop on support-restricted data."""
    b = np.ones_like(nu_t)
    residuals: list = []
    converged = False
    it = 0
    a = np.zeros_like(mu_s)
    while it < max_iter:
        it += 1
        denom = K_st @ b * h2
        if np.any(denom == 0):
            raise DivergedScalingError(it, "a")
        with np.errstate(over="ignore"):
            a = mu_s / denom
        if not np.all(np.isfinite(a)):
            raise DirectOverflowError(it)
        s = K_st.T @ a * h1
        colmarg = b * s
        r = float(np.abs(colmarg - nu_t).sum() * h2)
        residuals.append(r)
        if r <= tol:
            converged = True
            break
        if np.any(s == 0):
            raise DivergedScalingError(it, "b")
        b = nu_t / s
        if not np.all(np.isfinite(b)):
            raise DirectOverflowError(it)
    with np.errstate(divide="ignore"):
        return _CoreResult(np.log(a), np.log(b), residuals, converged, it)


def _core_log(
    mu_s: np.ndarray,
    nu_t: np.ndarray,
    logK_st: np.ndarray,
    h1: float,
    h2: float,
    tol: float,
    max_iter: int,
) -> _CoreResult:
    """Log-domain scaling loop; immune to over- and underflow in the kernel."""
    log_mu = np.log(mu_s)
    log_nu = np.log(nu_t)
    lh1 = np.log(h1)
    lh2 = np.log(h2)
    log_b = np.zeros_like(nu_t)
    residuals: list = []
    converged = False
    it = 0
    log_a = np.full_like(mu_s, -np.inf)
    while it < max_iter:
        it += 1
        log_a = log_mu - _logsumexp(logK_st + log_b[None, :] + lh2, axis=1)
        s = _logsumexp(logK_st + log_a[:, None] + lh1, axis=0)
        colmarg = np.exp(log_b + s)
        r = float(np.abs(colmarg - nu_t).sum() * h2)
        residuals.append(r)
        if r <= tol:
            converged = True
            break
        log_b = log_nu - s
    return _CoreResult(log_a, log_b, residuals, converged, it)


def _assemble(
    mu: GridMeasure,
    nu: GridMeasure,
    c: CostField,
    K: GibbsKernel,
    core: _CoreResult,
    mode: str,
    tol: float,
) -> SolveResult:
    """Embed support-restricted scaling vectors, normalize the gauge, and report."""
    smask = mu.density > 0
    tmask = nu.density > 0
    h1 = mu.grid.h
    h2 = nu.grid.h

    # gauge: divide a by its integral so that sum_i a_i h1 = 1
    log_gauge = _logsumexp(core.log_a + np.log(h1), axis=0)
    log_a_s = core.log_a - log_gauge
    log_b_t = core.log_b + log_gauge
    with np.errstate(over="ignore"):
        gauge_constant = float(np.exp(log_gauge))

    log_a = np.full(mu.grid.n, -np.inf)
    log_b = np.full(nu.grid.n, -np.inf)
    log_a[smask] = log_a_s
    log_b[tmask] = log_b_t
    with np.errstate(over="ignore"):
        a = np.exp(log_a)
        b = np.exp(log_b)
    state = DualState(a, b, log_a, log_b)

    plan_vals = np.zeros((mu.grid.n, nu.grid.n))
    block = np.exp(
        log_a_s[:, None] + K.log_values[np.ix_(smask, tmask)] + log_b_t[None, :]
    )
    plan_vals[np.ix_(smask, tmask)] = block
    plan = ProductDensity(mu.grid, nu.grid, plan_vals)

    potentials = potentials_from_state(state, K.gamma)
    primal = primal_value(plan, c, K.gamma)
    dual = dual_value(state, K, mu, nu)
    r1, r2 = optimality_residual(state, K, mu, nu)
    report = SolveReport(
        iterations=core.iterations,
        residual_history=tuple(core.residuals),
        primal_value=primal,
        dual_value=dual,
        gap=primal - dual,
        optimality_residual=(r1, r2),
        gauge_constant=gauge_constant,
        converged=core.converged,
        mode=mode,
    )
    result = SolveResult(plan, state, potentials, report)
    if not core.converged:
        raise ConvergenceError(report)
    return result


def _prepare(mu: GridMeasure, nu: GridMeasure, c: CostField, gamma: float, tol: float, max_iter: int):
    _check_probability(mu, "mu")
    _check_probability(nu, "nu")
    if mu.grid.n != c.grid1.n or nu.grid.n != c.grid2.n:
        raise ParameterError("marginals and cost table live on different grids")
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be at least 1, got {max_iter}")
    K = gibbs_kernel(c, gamma)
    smask = mu.density > 0
    tmask = nu.density > 0
    return K, smask, tmask


def solve(
    mu: GridMeasure,
    nu: GridMeasure,
    c: CostField,
    gamma: float,
    tol: float = 1e-9,
    max_iter: int = 100000,
) -> SolveResult:
    """Alternate scaling in direct arithmetic until the marginals match.

    Parameters
    ----------
    mu, nu : GridMeasure
        Probability marginals (mass 1 within 1e-10).
    c : CostField
        Nonnegative cost table on the product of the marginals' grids.
    gamma : float
        Regularization weight, positive.
    tol : float
        Stop when the weighted L1 error of the unenforced marginal drops
        to tol or below (checked after each a-pass).
    max_iter : int
        Iteration cap; one iteration is one a-pass plus, if the stopping
        rule is not yet met, one b-pass.

    Returns
    -------
    SolveResult
        Plan, gauge-normalized dual state, potentials, and report.

    Raises
    ------
    ConvergenceError
        If max_iter is exhausted; the report rides on the exception.
    DirectOverflowError
        If scaling vectors leave the double range (small gamma); the
        log-domain variant handles those instances.
    """
    K, smask, tmask = _prepare(mu, nu, c, gamma, tol, max_iter)
    core = _core_direct(
        mu.density[smask],
        nu.density[tmask],
        K.values[np.ix_(smask, tmask)],
        mu.grid.h,
        nu.grid.h,
        tol,
        max_iter,
    )
    return _assemble(mu, nu, c, K, core, "direct", tol)


def solve_logdomain(
    mu: GridMeasure,
    nu: GridMeasure,
    c: CostField,
    gamma: float,
    tol: float = 1e-9,
    max_iter: int = 100000,
) -> SolveResult:
    """Same contract as :func:`solve`, iterated on logarithms.

    Updates log a_i = log mu_i - logsumexp_j(log K_ij + log b_j + log h2)
    with max-subtraction, so small gamma cannot overflow the kernel. The
    plan agrees with the direct mode to 1e-8 entrywise whenever the
    latter completes.
    """
    K, smask, tmask = _prepare(mu, nu, c, gamma, tol, max_iter)
    core = _core_log(
        mu.density[smask],
        nu.density[tmask],
        K.log_values[np.ix_(smask, tmask)],
        mu.grid.h,
        nu.grid.h,
        tol,
        max_iter,
    )
    return _assemble(mu, nu, c, K, core, "log", tol)


def primal_value(plan: TransportPlan, c: CostField, gamma: float) -> float:
    """Transport cost plus gamma-weighted neg-entropy of the plan.

    Computes sum c pi w + gamma sum pi (log pi - 1) w with the convention
    0 (log 0 - 1) = 0 and w the product cell weight.
    """
    w = plan.weight
    pi = plan.values
    cost = float(np.sum(c.values * pi) * w)
    pos = pi > 0
    ent = float(np.sum(pi[pos] * (np.log(pi[pos]) - 1.0)) * w)
    return cost + gamma * ent


def dual_value(state: DualState, K: GibbsKernel, mu: GridMeasure, nu: GridMeasure) -> float:
    """Discrete dual objective of a scaling pair.

    Evaluates -gamma [ sum a b K w - sum log(a) mu h1 - sum log(b) nu h2 ];
    cells with vanishing marginal contribute nothing. A zero scaling value
    on a support cell makes the state dual-infeasible and yields -inf.
    """
    smask = mu.density > 0
    tmask = nu.density > 0
    if np.any(state.a[smask] == 0) or np.any(state.b[tmask] == 0):
        return -np.inf
    h1 = mu.grid.h
    h2 = nu.grid.h
    log_a = state.log_a[smask]
    log_b = state.log_b[tmask]
    cross = float(
        np.sum(np.exp(log_a[:, None] + K.log_values[np.ix_(smask, tmask)] + log_b[None, :]))
        * h1
        * h2
    )
    term_a = float(np.sum(log_a * mu.density[smask]) * h1)
    term_b = float(np.sum(log_b * nu.density[tmask]) * h2)
    return -K.gamma * (cross - term_a - term_b)


def normalize_gauge(state: DualState, h1: float) -> DualState:
    """Rescale (a, b) -> (a/g, g b) so that sum_i a_i h1 = 1.

    The plan and the dual value are invariant under this rescaling;
    idempotent on an already normalized state.
    """
    finite = np.isfinite(state.log_a)
    if not np.any(finite):
        raise ParameterError("cannot normalize a state with identically zero a")
    log_gauge = _logsumexp(state.log_a[finite] + np.log(h1), axis=0)
    log_a = np.where(finite, state.log_a - log_gauge, -np.inf)
    log_b = np.where(np.isfinite(state.log_b), state.log_b + log_gauge, -np.inf)
    with np.errstate(over="ignore"):
        return DualState(np.exp(log_a), np.exp(log_b), log_a, log_b)


def optimality_residual(
    state: DualState, K: GibbsKernel, mu: GridMeasure, nu: GridMeasure
) -> Tuple[float, float]:
    """Weighted L1 residuals of the two marginal equations on the supports.

    r1 sums |a_i (sum_j K_ij b_j h2) - mu_i| h1 over the support of mu;
    r2 is the mirror image. Both vanish at a solution.
    """
    smask = mu.density > 0
    tmask = nu.density > 0
    h1 = mu.grid.h
    h2 = nu.grid.h
    logK = K.log_values[np.ix_(smask, tmask)]
    log_a = state.log_a[smask]
    log_b = state.log_b[tmask]
    rowmarg = np.exp(_logsumexp(logK + log_b[None, :] + np.log(h2), axis=1) + log_a)
    colmarg = np.exp(_logsumexp(logK + log_a[:, None] + np.log(h1), axis=0) + log_b)
    r1 = float(np.abs(rowmarg - mu.density[smask]).sum() * h1)
    r2 = float(np.abs(colmarg - nu.density[tmask]).sum() * h2)
    return r1, r2


def potentials_from_state(state: DualState, gamma: float) -> Potentials:
    """Back-substitute potentials alpha = gamma log a, beta = gamma log b.

    Support cells carry finite values, null cells the -inf sentinel.
    """
    alpha = gamma * state.log_a
    beta = gamma * state.log_b
    return Potentials(alpha, beta)


@dataclass(frozen=True)
class SandwichCheck:
    """Result of the two-sided potential bound check.

    ``k_const`` is log(cbar/cunder) built from the extremes of the
    denominator sums; ``max_violation`` is how far any support cell sits
    outside [log mu - k, log mu + k] (nonpositive when the bound holds).
    """

    k_const: float
    max_violation: float
    holds: bool


def potential_sandwich_check(
    state: DualState,
    K: GibbsKernel,
    mu: GridMeasure,
    tol: float = 1e-9,
) -> SandwichCheck:
    """Check log mu - k <= alpha/gamma <= log mu + k on the support of mu.

    Here alpha/gamma = log a and k = log(cbar/cunder) with cunder, cbar
    the smallest and largest of the sums c_i = sum_j K_ij b_j h2 over
    support cells. Expects a gauge-normalized state (integral of a equal
    to 1); the normalization pins cunder <= 1 <= cbar, which makes the
    two-sided bound valid.
    """
    smask = mu.density > 0
    tmask = np.isfinite(state.log_b)
    h2 = K.grid2.h
    logK = K.log_values[np.ix_(smask, tmask)]
    log_c = _logsumexp(logK + state.log_b[tmask][None, :] + np.log(h2), axis=1)
    k_const = float(np.max(log_c) - np.min(log_c))
    log_mu = np.log(mu.density[smask])
    log_a = state.log_a[smask]
    upper = np.max(log_a - (log_mu + k_const))
    lower = np.max((log_mu - k_const) - log_a)
    max_violation = float(max(upper, lower))
    return SandwichCheck(k_const, max_violation, max_violation <= tol)


def support_check(
    plan: TransportPlan, mu: GridMeasure, nu: GridMeasure, threshold: float = 1e-300
) -> bool:
    """True iff plan entries exceed threshold exactly on supp mu x supp nu."""
    expected = np.outer(mu.density > 0, nu.density > 0)
    return bool(np.array_equal(plan.values > threshold, expected))
