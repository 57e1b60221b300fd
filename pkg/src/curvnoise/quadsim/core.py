"""Exact distribution dynamics of noisy-gradient methods on quadratics.

The objective is f(theta) = 0.5 (theta - theta*)' H (theta - theta*) and
the gradient oracle returns grad f + eps with E[eps] = 0, E[eps eps'] = S.
Mean and second moment of the iterates propagate in closed form; the
stationary ("limit cycle") suboptimality has analytic expressions for
plain/preconditioned stochastic gradient and for Polyak momentum, which
this module both implements and cross-checks against the recursions and
Monte Carlo simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..linalg import SymMatrix, eigh
from . import _scan


class InstabilityError(RuntimeError):
    """Stepsize outside the stability region; iterates diverge."""


class NotSimultaneouslyDiagonalizableError(ValueError):
    """Closed forms require H, S (and M) to commute."""


class NoFeasibleStepsizeError(RuntimeError):
    """Every grid point was unstable or never reaches the threshold."""


class BoundInapplicableError(ValueError):
    """Preconditions of the function-value bound are violated."""


HARD_STEP_CAP = 1_000_000_000


@dataclass(frozen=True)
class QuadraticProblem:
    H: SymMatrix
    theta_star: np.ndarray
    S: SymMatrix

    def __post_init__(self):
        ts = np.asarray(self.theta_star, dtype=float)
        if ts.shape != (self.H.dim,):
            raise ValueError("theta_star dimension mismatch")
        object.__setattr__(self, "theta_star", ts)
        if self.H.dim != self.S.dim:
            raise ValueError("H and S dimension mismatch")
        if np.linalg.eigvalsh(self.H.a)[0] <= 0.0:
            raise ValueError("H must be positive definite")
        if np.linalg.eigvalsh(self.S.a)[0] < -1e-12:
            raise ValueError("S must be positive semidefinite")

    @property
    def dim(self) -> int:
        return self.H.dim


@dataclass(frozen=True)
class MethodSpec:
    """kind: "sg", "precond" (M-preconditioned SG) or "polyak"."""

    kind: str
    alpha: float
    M: SymMatrix | None = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sg", "precond", "polyak"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.alpha < 0.0:
            raise ValueError("alpha must be nonnegative")
        if self.kind == "precond" and self.M is None:
            raise ValueError("preconditioned method needs M")
        if self.kind == "polyak" and not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    @classmethod
    def newton(cls, problem: QuadraticProblem, alpha: float) -> "MethodSpec":
        """Preconditioned SG with M equal to the exact inverse Hessian."""
        return cls("precond", alpha, M=SymMatrix(np.linalg.inv(problem.H.a)))

    def preconditioner(self, d: int) -> np.ndarray:
        return np.eye(d) if self.M is None else self.M.a


@dataclass(frozen=True)
class MomentState:
    """Exact mean and second moment (about theta*) of the iterate at step t.

    For Polyak momentum the joint (theta, v) blocks are carried as well.
    """

    t: int
    delta: np.ndarray
    Sigma: SymMatrix
    delta_v: np.ndarray | None = None
    Sigma_vv: SymMatrix | None = None
    Sigma_thetav: np.ndarray | None = None


@dataclass(frozen=True)
class NoiseGeometry:
    """S proportional to H^beta, scaled to a fixed trace."""

    beta: int
    trace_target: float


@dataclass(frozen=True)
class ThresholdOutcome:
    status: str  # "converged" | "never" | "diverged" | "pruned"
    steps: int | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def make_problem(
    d: int,
    beta: int,
    theta0_mode: str = "ones",
    theta0: np.ndarray | None = None,
    delta0: float = 10.0,
) -> tuple[QuadraticProblem, np.ndarray]:
    """Diagonal benchmark problem: H_ii = i^2, S = c_beta H^beta, Tr(S) = d.

    theta0_mode:
      - "ones": the all-ones vector (the table convention; initial
        suboptimality Tr(H)/2);
      - "unit-subopt-uniform": theta0_i all equal, scaled so the initial
        suboptimality is ``delta0`` (default 10);
      - "explicit": use the ``theta0`` argument as given.

    The step counts in the reference tables are extremely sensitive to the
    start for loose thresholds; "ones" is the convention that reproduces
    them and is therefore the default.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    h = np.arange(1, d + 1, dtype=float) ** 2
    s = h**beta
    s *= d / np.sum(s)
    problem = QuadraticProblem(
        H=SymMatrix.diagonal(h), theta_star=np.zeros(d), S=SymMatrix.diagonal(s)
    )
    if theta0_mode == "unit-subopt-uniform":
        c = np.sqrt(2.0 * delta0 / np.sum(h))
        start = np.full(d, c)
    elif theta0_mode == "ones":
        start = np.ones(d)
    elif theta0_mode == "explicit":
        if theta0 is None:
            raise ValueError("explicit mode needs theta0")
        start = np.asarray(theta0, dtype=float)
    else:
        raise ValueError(f"unknown theta0_mode {theta0_mode!r}")
    return problem, start


def initial_state(
    problem: QuadraticProblem, method: MethodSpec, theta0: np.ndarray
) -> MomentState:
    """Deterministic start at theta0 (t = 0, no update applied yet).

    For Polyak the velocity already holds the first gradient plus noise,
    matching the joint transition-matrix form of the recursion.
    """
    delta = np.asarray(theta0, dtype=float) - problem.theta_star
    Sigma = SymMatrix(np.outer(delta, delta))
    if method.kind != "polyak":
        return MomentState(t=0, delta=delta, Sigma=Sigma)
    H = problem.H.a
    dd = np.outer(delta, delta)
    return MomentState(
        t=0,
        delta=delta,
        Sigma=Sigma,
        delta_v=H @ delta,
        Sigma_vv=SymMatrix(H @ dd @ H + problem.S.a),
        Sigma_thetav=dd @ H,
    )


def step_moments(
    problem: QuadraticProblem, method: MethodSpec, state: MomentState
) -> MomentState:
    """One exact update of the mean/second-moment recursion."""
    H, S = problem.H.a, problem.S.a
    a = method.alpha
    if method.kind != "polyak":
        M = method.preconditioner(problem.dim)
        A = np.eye(problem.dim) - a * M @ H
        return MomentState(
            t=state.t + 1,
            delta=A @ state.delta,
            Sigma=SymMatrix(A @ state.Sigma.a @ A.T + a * a * M @ S @ M.T),
        )
    g = method.gamma
    d = problem.dim
    I = np.eye(d)
    P = np.block([[I, -a * I], [H, g * I - a * H]])
    dj = np.concatenate([state.delta, state.delta_v])
    Sj = np.block(
        [[state.Sigma.a, state.Sigma_thetav], [state.Sigma_thetav.T, state.Sigma_vv.a]]
    )
    Sj = P @ Sj @ P.T
    Sj[d:, d:] += S
    dj = P @ dj
    return MomentState(
        t=state.t + 1,
        delta=dj[:d],
        Sigma=SymMatrix(Sj[:d, :d]),
        delta_v=dj[d:],
        Sigma_vv=SymMatrix(Sj[d:, d:]),
        Sigma_thetav=Sj[:d, d:],
    )


def expected_subopt(problem: QuadraticProblem, state: MomentState) -> float:
    """E[f(theta_t) - f(theta*)] = 0.5 Tr(H Sigma_t)."""
    return 0.5 * float(np.sum(problem.H.a * state.Sigma.a))


def _commutes(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    scale = max(1.0, float(np.linalg.norm(a)) * float(np.linalg.norm(b)))
    return float(np.linalg.norm(a @ b - b @ a)) <= tol * scale


def _diagonalize(problem: QuadraticProblem, M: np.ndarray | None):
    """Spectra of H, S (and M) in a common eigenbasis, plus the basis."""
    H, S = problem.H.a, problem.S.a
    if not _commutes(H, S) or (M is not None and not (_commutes(H, M) and _commutes(S, M))):
        raise NotSimultaneouslyDiagonalizableError(
            "H, S and M must be simultaneously diagonalizable"
        )
    dec = eigh(problem.H)
    V = dec.vectors
    h = dec.values
    s = np.diag(V.T @ S @ V).copy()
    m = None if M is None else np.diag(V.T @ M @ V).copy()
    return h, s, m, V


def limit_cycle_sg(
    problem: QuadraticProblem, alpha: float, M: SymMatrix | None = None
) -> float:
    """Stationary expected suboptimality of (preconditioned) SG.

    (alpha/2) Tr((2I - alpha M H)^{-1} M S) in the common eigenbasis.
    """
    h, s, m, _ = _diagonalize(problem, None if M is None else M.a)
    if m is None:
        m = np.ones_like(h)
    rates = 1.0 - alpha * m * h
    if np.any(np.abs(rates) >= 1.0):
        raise InstabilityError(f"|1 - alpha m h| >= 1 at alpha={alpha}")
    return 0.5 * alpha * float(np.sum(m * s / (2.0 - alpha * m * h)))


def polyak_stable(h: np.ndarray, alpha: float, gamma: float) -> bool:
    """Per-dimension spectral radius of the momentum iteration below one."""
    tr = 1.0 + gamma - alpha * h
    disc = tr * tr - 4.0 * gamma
    radius = np.where(
        disc >= 0.0,
        np.maximum(np.abs(tr + np.sqrt(np.abs(disc))), np.abs(tr - np.sqrt(np.abs(disc))))
        / 2.0,
        np.sqrt(gamma),
    )
    return bool(np.all(radius < 1.0 - 1e-15))


def limit_cycle_polyak(problem: QuadraticProblem, alpha: float, gamma: float) -> float:
    """Stationary expected suboptimality of Polyak momentum.

    (alpha/2) (1+gamma)/(1-gamma) Tr((2(1+gamma)I - alpha H)^{-1} S).
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    h, s, _, _ = _diagonalize(problem, None)
    if not polyak_stable(h, alpha, gamma):
        raise InstabilityError(f"momentum iteration unstable at alpha={alpha}, gamma={gamma}")
    denom = 2.0 * (1.0 + gamma) - alpha * h
    return 0.5 * alpha * (1.0 + gamma) / (1.0 - gamma) * float(np.sum(s / denom))


def _scan_setup(problem, method, theta0):
    """Per-dimension spectra and initial scan state in the H eigenbasis."""
    M = None if method.kind != "precond" else method.M.a
    h, s, m, V = _diagonalize(problem, M)
    delta0 = V.T @ (np.asarray(theta0, dtype=float) - problem.theta_star)
    if method.kind == "polyak":
        st = np.empty((3, h.size))
        st[0] = delta0**2
        st[1] = h * h * delta0**2 + s
        st[2] = h * delta0**2
        return h, s, None, st
    if m is None:
        m = np.ones_like(h)
    return h, s, m, delta0**2


def steps_to_threshold(
    problem: QuadraticProblem,
    method: MethodSpec,
    theta0: np.ndarray,
    eps: float,
    max_steps: int | None = None,
) -> ThresholdOutcome:
    """Smallest update count t with E[Delta_t] <= eps under exact propagation.

    "never" is returned, without iterating, when the stationary limit-cycle
    value already exceeds eps; "diverged" when the iteration is unstable.
    With ``max_steps`` the scan is cut off and "pruned" reported instead.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    a = method.alpha
    h, s, m, st = _scan_setup(problem, method, theta0)
    sigma0 = st[0] if method.kind == "polyak" else st
    if 0.5 * float(h @ sigma0) <= eps:
        return ThresholdOutcome("converged", 0)
    try:
        if method.kind == "polyak":
            limit = limit_cycle_polyak(problem, a, method.gamma)
        else:
            limit = limit_cycle_sg(problem, a, method.M)
    except InstabilityError:
        return ThresholdOutcome("diverged")
    if limit > eps:
        return ThresholdOutcome("never")
    done = 0
    budget = HARD_STEP_CAP if max_steps is None else max_steps
    chunk = 4096
    while done < budget:
        n = min(chunk, budget - done)
        if method.kind == "polyak":
            k = _scan.polyak_scan(h, s, st, a, method.gamma, eps, n)
        else:
            k = _scan.sg_scan(h, m, s, st, a, eps, n)
        if k >= 0:
            return ThresholdOutcome("converged", done + int(k))
        done += n
        chunk = min(2 * chunk, 1 << 22)
    if max_steps is None:
        raise RuntimeError("hard step cap exceeded; eps sits exactly on the limit cycle?")
    return ThresholdOutcome("pruned")


def default_alpha_grid(
    lo: float = 1e-5, hi: float = 2.0, per_decade: int = 60
) -> np.ndarray:
    """Logarithmic stepsize grid, ``per_decade`` points per decade."""
    k_lo = int(np.ceil(per_decade * np.log10(lo)))
    k_hi = int(np.floor(per_decade * np.log10(hi)))
    return 10.0 ** (np.arange(k_lo, k_hi + 1) / per_decade)


# Joint momentum grid for free optimization over (alpha, gamma).
DEFAULT_GAMMA_GRID = (0.5, 0.8, 0.9, 0.95, 0.99)

# Fixed momentum used by the reference-table protocol.  Optimizing gamma
# jointly finds strictly faster schedules than the reference tables report
# (e.g. gamma=0.5 with a large stepsize at eps=1), so the tables correspond
# to a fixed-momentum run; 0.8 is the value consistent with both the step
# counts and the one-digit stepsizes at the two tighter thresholds.
TABLE_GAMMA_GRID = (0.8,)


@dataclass(frozen=True)
class OptimizeResult:
    best_alpha: float
    best_gamma: float | None
    best_steps: int
    profile: list = field(default_factory=list)  # (alpha, gamma, status, steps)


def optimize_stepsize(
    problem: QuadraticProblem,
    kind: str,
    eps: float,
    theta0: np.ndarray,
    alpha_grid: np.ndarray | None = None,
    gamma_grid=None,
) -> OptimizeResult:
    """Exhaustive grid search minimizing the threshold-crossing step count.

    Ties break toward larger alpha, then larger gamma.  Grid points that
    provably cannot beat the incumbent (scan passes its count without
    crossing) are reported as "pruned" in the profile.
    """
    alphas = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, float)
    if alphas.size == 0:
        raise ValueError("empty stepsize grid")
    if kind == "polyak":
        gammas = DEFAULT_GAMMA_GRID if gamma_grid is None else tuple(gamma_grid)
    else:
        gammas = (None,)
    best: tuple[int, float, float | None] | None = None
    profile = []
    for alpha in sorted(alphas, reverse=True):
        for gamma in sorted(gammas, key=lambda g: -1.0 if g is None else -g):
            if kind == "polyak":
                method = MethodSpec("polyak", alpha, gamma=gamma)
            elif kind == "newton":
                method = MethodSpec.newton(problem, alpha)
            elif kind == "sg":
                method = MethodSpec("sg", alpha)
            else:
                raise ValueError(f"unknown method kind {kind!r}")
            cap = None if best is None else best[0] - 1
            out = steps_to_threshold(problem, method, theta0, eps, max_steps=cap)
            profile.append((float(alpha), gamma, out.status, out.steps))
            if out.converged and (best is None or out.steps < best[0]):
                best = (out.steps, float(alpha), gamma)
    if best is None:
        raise NoFeasibleStepsizeError(
            f"no grid point reaches eps={eps}: all never/diverged"
        )
    return OptimizeResult(
        best_alpha=best[1], best_gamma=best[2], best_steps=best[0], profile=profile
    )


@dataclass(frozen=True)
class Prop2Report:
    mu: float
    mu_M: float
    rate: float
    noise_floor: float
    exact_subopt: np.ndarray
    bound: np.ndarray
    max_violation: float
    mc_checkpoints: list  # (t, mc_mean, mc_sem, exact)
    mc_max_sigma_dev: float


def check_prop2_bound(
    problem: QuadraticProblem,
    method: MethodSpec,
    theta0: np.ndarray,
    horizon: int,
    mc_paths: int = 0,
    rng: np.random.Generator | None = None,
) -> Prop2Report:
    """Verify the preconditioned function-value bound along the exact recursion.

    E[Delta_k] <= (1 - 2 alpha mu_M mu)^k Delta_0 + alpha/(4 mu_M mu) Tr(H M S M)
    with mu = lambda_min(H) and mu_M = lambda_min(M - (alpha/2) M' H M).
    """
    if method.kind == "polyak":
        raise BoundInapplicableError("bound covers (preconditioned) SG only")
    H, S = problem.H.a, problem.S.a
    a = method.alpha
    M = method.preconditioner(problem.dim)
    mu = float(np.linalg.eigvalsh(H)[0])
    mu_M = float(np.linalg.eigvalsh(M - 0.5 * a * M.T @ H @ M)[0])
    if mu_M <= 0.0:
        raise BoundInapplicableError("lambda_min(M - (alpha/2) M'HM) must be positive")
    if a * mu_M * mu > 0.5:
        raise BoundInapplicableError("alpha mu_M mu must not exceed 1/2")
    noise_floor = a / (4.0 * mu_M * mu) * float(np.trace(H @ M @ S @ M))
    rate = 1.0 - 2.0 * a * mu_M * mu
    state = initial_state(problem, method, theta0)
    delta0 = expected_subopt(problem, state)
    exact = np.empty(horizon + 1)
    bound = np.empty(horizon + 1)
    for k in range(horizon + 1):
        exact[k] = expected_subopt(problem, state)
        bound[k] = rate**k * delta0 + noise_floor
        if k < horizon:
            state = step_moments(problem, method, state)
    max_violation = float(np.max(exact - bound))
    checkpoints = []
    mc_dev = 0.0
    if mc_paths > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        means, sems = simulate_paths(problem, method, theta0, horizon, mc_paths, rng)
        ts = np.unique(np.linspace(1, horizon, num=min(10, horizon), dtype=int))
        for t in ts:
            sem = max(sems[t], 1e-300)
            dev = abs(means[t] - exact[t]) / sem
            mc_dev = max(mc_dev, dev)
            checkpoints.append((int(t), float(means[t]), float(sems[t]), float(exact[t])))
    return Prop2Report(
        mu=mu,
        mu_M=mu_M,
        rate=rate,
        noise_floor=noise_floor,
        exact_subopt=exact,
        bound=bound,
        max_violation=max_violation,
        mc_checkpoints=checkpoints,
        mc_max_sigma_dev=mc_dev,
    )


def _noise_factor(S: np.ndarray) -> np.ndarray:
    """Factor L with L L' = S, via eigendecomposition of S."""
    vals, vecs = np.linalg.eigh(S)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def simulate_paths(
    problem: QuadraticProblem,
    method: MethodSpec,
    theta0: np.ndarray,
    steps: int,
    paths: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo suboptimality curve with Gaussian gradient noise.

    Returns (mean, standard error) arrays over t = 0..steps.  Deterministic
    for a given generator state; raises on non-finite iterates.
    """
    d = problem.dim
    H = problem.H.a
    L = _noise_factor(problem.S.a)
    M = method.preconditioner(d) if method.kind != "polyak" else None
    theta = np.tile(np.asarray(theta0, dtype=float) - problem.theta_star, (paths, 1))
    vel = np.zeros_like(theta)
    means = np.empty(steps + 1)
    sems = np.empty(steps + 1)

    def record(t):
        sub = 0.5 * np.einsum("pi,ij,pj->p", theta, H, theta)
        if not np.all(np.isfinite(sub)):
            raise models_divergence(t)
        means[t] = np.mean(sub)
        sems[t] = np.std(sub, ddof=1) / np.sqrt(paths) if paths > 1 else 0.0

    record(0)
    a = method.alpha
    for t in range(1, steps + 1):
        eps = rng.standard_normal((paths, d)) @ L.T
        grad = theta @ H + eps
        if method.kind == "polyak":
            vel = method.gamma * vel + grad
            theta = theta - a * vel
        else:
            theta = theta - a * grad @ M.T
        record(t)
    return means, sems


def models_divergence(step: int):
    from ..models import DivergenceError

    return DivergenceError(step, f"non-finite iterates at step {step}")


def stationary_sigma(
    problem: QuadraticProblem,
    method: MethodSpec,
    theta0: np.ndarray,
    rel_tol: float = 1e-12,
    max_iter: int = 10_000_000,
) -> SymMatrix:
    """Fixed point of the second-moment recursion, by iteration to rel_tol."""
    state = initial_state(problem, method, theta0)
    prev = state.Sigma.a
    for _ in range(max_iter):
        state = step_moments(problem, method, state)
        cur = state.Sigma.a
        scale = max(1.0, float(np.linalg.norm(cur)))
        if float(np.linalg.norm(cur - prev)) <= rel_tol * scale:
            return SymMatrix(cur)
        prev = cur
    raise InstabilityError("second-moment recursion did not settle")


def lyapunov_residual(
    problem: QuadraticProblem, method: MethodSpec, Sigma_inf: SymMatrix
) -> float:
    """Frobenius residual of the stationary equation of the SG recursion.

    Sigma H M + M H Sigma = alpha M (S + H Sigma H) M.
    """
    H, S = problem.H.a, problem.S.a
    M = method.preconditioner(problem.dim)
    Si = Sigma_inf.a
    lhs = Si @ H @ M + M @ H @ Si
    rhs = method.alpha * M @ (S + H @ Si @ H) @ M
    return float(np.linalg.norm(lhs - rhs, "fro"))
