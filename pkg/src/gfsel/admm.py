"""Row-stochastic quadratic programming by an ADMM splitting.

Solves

    min_Z  tr(Z^T D Z C) + alpha * tr(Z^T Z) - 2 tr(Z^T E)
    s.t.   every row of Z on the probability simplex

by splitting Z from a nonnegative auxiliary copy H, with a multiplier
matrix and a geometrically growing penalty. The primal step is a row-wise
Euclidean projection onto the simplex; the auxiliary step is a nonnegative
clamp.
"""

import functools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

PENALTY_GROWTH = 1.01
PENALTY_CAP = 1e10
DESCENT_SLACK = 1e-8

# Consensus gap beyond which the splitting is declared divergent; the
# H-step can amplify geometrically when the reweighting diagonal carries
# near-degenerate rows and the penalty is still small.
DIVERGENCE_CAP = 1e10

# Fixed-penalty polish: stop once the objective moves less than this
# relative spread over a trailing window of iterations.
POLISH_TOL = 1e-10
POLISH_WINDOW = 10


class ConsensusWarning(RuntimeWarning):
    """The consensus gap failed to tighten monotonically near convergence."""


def project_simplex_row(v) -> np.ndarray:
    """Euclidean projection of a vector onto {x : x >= 0, sum(x) = 1}.

    Sort-and-threshold rule: with u the descending sort of ``v``, find the
    largest j such that u_j + (1 - sum_{i<=j} u_i) / j > 0, take
    theta = (1 - sum_{i<=rho} u_i) / rho and return max(v + theta, 0).
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidInputError(f"expected a 1-D vector, got shape {v.shape}")
    if v.size == 0:
        raise InvalidInputError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u)
    positions = np.arange(1, v.size + 1)
    feasible = u + (1.0 - cumulative) / positions > 0
    # The first prefix is always feasible in exact arithmetic; the floor
    # restores that when cancellation wipes it out for huge inputs.
    rho = max(int(np.count_nonzero(feasible)) - 1, 0)
    theta = (1.0 - cumulative[rho]) / (rho + 1)
    return np.maximum(v + theta, 0.0)


def project_simplex_rows(V) -> np.ndarray:
    """Vectorized row-wise variant of :func:`project_simplex_row`."""
    V = np.asarray(V, dtype=np.float64)
    if V.ndim != 2 or V.shape[1] == 0:
        raise InvalidInputError(f"expected a non-empty 2-D matrix, got shape {V.shape}")
    U = -np.sort(-V, axis=1)
    cumulative = np.cumsum(U, axis=1)
    positions = np.arange(1, V.shape[1] + 1)
    feasible = U * positions > cumulative - 1.0
    # feasible runs True then False along each row, so the count locates rho;
    # the floor restores the always-feasible first prefix when cancellation
    # wipes it out for huge inputs.
    rho = np.maximum(np.count_nonzero(feasible, axis=1) - 1, 0)
    theta = (1.0 - cumulative[np.arange(V.shape[0]), rho]) / (rho + 1)
    return np.maximum(V + theta[:, None], 0.0)


@dataclass(frozen=True)
class ZSubproblem:
    """Frozen data of one row-stochastic quadratic program.

    ``dvec`` is the strictly positive reweighting diagonal, ``C`` the Gram
    matrix of the projected smoothed samples, ``E = D C + alpha * prior``
    the linear coefficient and ``alpha`` the prior weight. When ``C`` comes
    from a skinny factor (C = F F^T with F n-by-c), ``gram_factor`` keeps F
    so products with C cost O(n^2 c) instead of O(n^3).
    """

    dvec: np.ndarray
    C: np.ndarray
    E: np.ndarray
    alpha: float
    gram_factor: np.ndarray | None = None

    @classmethod
    def from_parts(cls, Xbar, W, dvec, alpha, prior) -> "ZSubproblem":
        """Assemble C = (Xbar W)(Xbar W)^T and E = D C + alpha * prior."""
        Xbar = np.asarray(Xbar, dtype=np.float64)
        W = np.asarray(W, dtype=np.float64)
        dvec = np.asarray(dvec, dtype=np.float64)
        prior = np.asarray(prior, dtype=np.float64)
        if np.any(dvec <= 0):
            raise InvalidInputError("reweighting diagonal must be strictly positive")
        projected = Xbar @ W
        C = projected @ projected.T
        C = 0.5 * (C + C.T)
        E = dvec[:, None] * C + alpha * prior
        return cls(dvec=dvec, C=C, E=E, alpha=float(alpha), gram_factor=projected)

    def _right_multiply(self, M) -> np.ndarray:
        """M @ C through the skinny factor when available."""
        if self.gram_factor is not None:
            return (M @ self.gram_factor) @ self.gram_factor.T
        return M @ self.C

    @functools.cached_property
    def _doubled_e(self) -> np.ndarray:
        return 2.0 * self.E

    def objective(self, Z) -> float:
        """Value tr(Z^T D Z C) + alpha tr(Z^T Z) - 2 tr(Z^T E) at Z."""
        Z = np.asarray(Z, dtype=np.float64)
        scaled = self.dvec[:, None] * Z
        return float(
            np.sum(scaled * self._right_multiply(Z))
            + self.alpha * np.sum(Z * Z)
            - 2.0 * np.sum(Z * self.E)
        )


@dataclass
class AdmmState:
    """Mutable iterate of the splitting: primal Z, auxiliary H, multiplier
    Sigma, penalty mu and its growth factor."""

    Z: np.ndarray
    H: np.ndarray
    Sigma: np.ndarray
    mu: float
    growth: float = PENALTY_GROWTH
    iteration: int = 0


def compute_m(state: AdmmState, prob: ZSubproblem) -> np.ndarray:
    """Unconstrained minimizer of the primal step,
    M = H - Sigma/mu - (D H C + alpha H - 2 E) / mu."""
    if not state.mu > 0:
        raise InvalidInputError("penalty mu must be positive")
    H = state.H
    block = prob._right_multiply(prob.dvec[:, None] * H)
    block += prob.alpha * H
    block += state.Sigma
    block -= prob._doubled_e
    block *= -1.0 / state.mu
    block += H
    return block


def compute_n(state: AdmmState, prob: ZSubproblem) -> np.ndarray:
    """Unconstrained minimizer of the auxiliary step,
    N = Z + Sigma/mu - (D Z C + alpha Z) / mu."""
    if not state.mu > 0:
        raise InvalidInputError("penalty mu must be positive")
    Z = state.Z
    block = prob._right_multiply(prob.dvec[:, None] * Z)
    block += prob.alpha * Z
    block -= state.Sigma
    block *= -1.0 / state.mu
    block += Z
    return block


def step_h(N) -> np.ndarray:
    """Project the auxiliary target onto the nonnegative orthant."""
    return np.maximum(np.asarray(N, dtype=np.float64), 0.0)


def solve_z(prob: ZSubproblem, z0, max_inner: int = 2000, inner_tol: float = 1e-6) -> np.ndarray:
    """Run the ADMM iteration from a feasible starting point.

    Iterates primal projection, auxiliary clamp, multiplier ascent and
    penalty growth from mu = 1 until the consensus gap ||Z - H||_inf drops
    below ``inner_tol``; the slow multiplicative penalty schedule needs on
    the order of a thousand iterations to get there, hence the default
    budget. Once consensus is reached the penalty stops growing and the
    same updates continue (exact fixed-penalty splitting) until the
    objective stabilizes, because the geometric schedule can outrun the
    multiplier on ill-conditioned instances and freeze slightly short of
    the optimum. ``max_inner`` caps both phases together. The returned
    iterate never has a worse objective than ``z0``: if the inner solver
    failed to descend, ``z0`` is returned unchanged.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    n = prob.C.shape[0]
    if z0.shape != (n, n):
        raise InvalidInputError(f"starting point must be {n}x{n}, got {z0.shape}")
    if not inner_tol > 0:
        raise InvalidInputError("inner tolerance must be positive")
    if np.min(z0) < -1e-10 or np.max(np.abs(z0.sum(axis=1) - 1.0)) > 1e-6:
        raise InvalidInputError("starting point must be row-stochastic and nonnegative")

    state = AdmmState(Z=z0.copy(), H=z0.copy(), Sigma=np.zeros_like(z0), mu=1.0)
    start_value = prob.objective(z0)
    gaps = []
    annealing_iterations = 0
    converged = False
    recent_values = []
    # Overflow inside a diverging iteration is handled through the gap
    # checks below, not through floating-point warnings.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(max_inner):
            state.Z = project_simplex_rows(compute_m(state, prob))
            state.H = step_h(compute_n(state, prob))
            diff = state.Z - state.H
            gap = max(float(diff.max()), -float(diff.min()))
            if np.isnan(gap):
                raise NumericalFailureError(f"non-finite iterate at inner iteration {it}")
            if gap > DIVERGENCE_CAP:
                # Runaway auxiliary step; the starting point is the best safe answer.
                return z0.copy()
            diff *= state.mu
            state.Sigma += diff
            state.iteration = it + 1
            gaps.append(gap)
            if not converged:
                state.mu = min(state.mu * state.growth, PENALTY_CAP)
                annealing_iterations = it + 1
                if gap <= inner_tol:
                    converged = True
            else:
                value = prob.objective(state.Z)
                recent_values.append(value)
                if len(recent_values) > POLISH_WINDOW:
                    recent_values.pop(0)
                    spread = abs(recent_values[0] - recent_values[-1])
                    if spread <= POLISH_TOL * max(abs(recent_values[-1]), 1e-12):
                        break

    if converged:
        # The tightening property belongs to the growing-penalty phase; the
        # fixed-penalty polish that follows has its own gap dynamics.
        tail = gaps[:annealing_iterations][-10:]
        # Slack of a few ulps so pure round-off jitter is not flagged.
        if any(later > earlier * (1 + 1e-12) + 1e-15 for earlier, later in zip(tail, tail[1:])):
            warnings.warn(
                "consensus gap did not tighten monotonically over the final iterations",
                ConsensusWarning,
                stacklevel=2,
            )

    value = prob.objective(state.Z)
    if not np.isfinite(value):
        raise NumericalFailureError(f"non-finite objective after {state.iteration} inner iterations")
    if value > start_value + DESCENT_SLACK:
        return z0.copy()
    return state.Z
