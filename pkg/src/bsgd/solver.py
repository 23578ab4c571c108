"""Stochastic gradient descent in dual coordinates, with a Landweber baseline.

The persistent iterate is the dual variable xi_k; the primal iterate is
recomputed from it after every update, which avoids a redundant forward
duality map per step.  Block sampling draws one uniform per iteration from
a counter-based Philox stream keyed by the run seed and maps it to
``min(int(u * N), N - 1)``; the protocol is fixed so that independent
reimplementations can follow the same path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .geometry import (
    DualVector,
    GeometryParams,
    GridVector,
    bregman_distance,
    conjugate_exponent,
    duality_map,
    inverse_duality_map,
    lr_norm,
)

__all__ = [
    "StoppingRule",
    "SolverConfig",
    "IterationRecord",
    "NoisyRunParams",
    "SGDRun",
    "objective_value",
    "stochastic_gradient",
    "full_gradient",
    "sgd_step",
    "step_schedule",
    "schedule_prefix",
    "check_step_admissibility",
    "omega_for_margin_fraction",
    "a_priori_stop_index",
    "run_sgd",
    "run_landweber",
    "relative_error",
    "history_to_csv",
]

logger = logging.getLogger(__name__)

_DIVERGENCE_FACTOR = 1e12
_STOP_INDEX_CAP = 10**8
_MODE_TOL = 1e-9


@lru_cache(maxsize=None)
def _geometry(r: float, p: float) -> GeometryParams:
    return GeometryParams.for_lebesgue(r, p)


@dataclass(frozen=True)
class StoppingRule:
    """max_epochs: fixed budget; a_priori: largest k with
    delta^p * sum of steps <= gamma_budget; oracle_best: fixed budget,
    result is the best iterate along the trajectory."""

    kind: str = "max_epochs"
    delta: float | None = None
    gamma_budget: float | None = None

    def __post_init__(self):
        if self.kind not in ("max_epochs", "a_priori", "oracle_best"):
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if self.kind == "a_priori":
            if self.delta is None or self.delta <= 0:
                raise ValueError("a_priori stopping needs a positive noise level")
            if self.gamma_budget is None or self.gamma_budget <= 0:
                raise ValueError("a_priori stopping needs a positive step budget")


@dataclass(frozen=True)
class SolverConfig:
    r_X: float
    r_Y: float
    p: float
    q: float
    mu0: float
    step_decay_exponent: float = 0.0
    batch_size: int | None = None
    max_epochs: int = 100
    seed: int = 0
    stopping: StoppingRule = field(default_factory=StoppingRule)
    mode: str = "theory"
    record_every: int | None = 1

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError(f"base step-size must be positive, got {self.mu0}")
        if self.step_decay_exponent < 0:
            raise ValueError("step decay exponent must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("need at least one epoch")
        if self.record_every is not None and self.record_every < 1:
            raise ValueError("record_every must be >= 1 (or None for final only)")
        for name, e in (("r_X", self.r_X), ("r_Y", self.r_Y),
                        ("p", self.p), ("q", self.q)):
            if not e > 1:
                raise ValueError(f"{name} must exceed 1, got {e}")
        if self.mode == "theory":
            if abs(self.p - max(self.r_X, 2.0)) > _MODE_TOL or abs(self.q - self.p) > _MODE_TOL:
                raise ValueError(
                    f"theory mode requires p = max(r_X, 2) and q = p, "
                    f"got p={self.p}, q={self.q} for r_X={self.r_X}"
                )
        elif self.mode == "practice":
            if abs(self.p - self.r_X) > _MODE_TOL or abs(self.q - self.r_Y) > _MODE_TOL:
                raise ValueError(
                    f"practice mode requires p = r_X and q = r_Y, "
                    f"got p={self.p}, q={self.q} for r_X={self.r_X}, r_Y={self.r_Y}"
                )
        else:
            raise ValueError(f"unknown mode {self.mode!r}; expected theory or practice")

    @classmethod
    def make(cls, mode: str, r_X: float, r_Y: float, mu0: float, **kwargs) -> "SolverConfig":
        """Fill (p, q) from the mode: theory uses p = max(r_X, 2), q = p;
        practice uses p = r_X, q = r_Y."""
        if mode == "theory":
            p = max(r_X, 2.0)
            q = p
        elif mode == "practice":
            p, q = r_X, r_Y
        else:
            raise ValueError(f"unknown mode {mode!r}")
        return cls(r_X=r_X, r_Y=r_Y, p=p, q=q, mu0=mu0, mode=mode, **kwargs)

    def geometry_x(self) -> GeometryParams:
        return _geometry(self.r_X, self.p)

    def geometry_y(self) -> GeometryParams:
        return _geometry(self.r_Y, self.q)


@dataclass(frozen=True)
class NoisyRunParams:
    """Constants of the noisy-regime ball argument: noise level, step
    budget, Young-inequality weight, and the ball radius they induce."""

    delta: float
    gamma_budget: float
    omega: float
    nu: float

    def __post_init__(self):
        for name in ("delta", "gamma_budget", "omega", "nu"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_initial_distance(cls, bregman0: float, delta: float,
                              gamma_budget: float, omega: float, gamma: float,
                              p: float) -> "NoisyRunParams":
        nu = bregman0 + omega ** (-p) / p * (1.0 + gamma) ** p * gamma_budget
        return cls(delta=delta, gamma_budget=gamma_budget, omega=omega, nu=nu)


@dataclass
class IterationRecord:
    """Diagnostics for iterate x_k and the step that produced it.

    ``mu``, ``batch_index`` and ``psi_batch_pre`` describe the step
    k-1 -> k (``psi_batch_pre`` is the sampled block's objective at the
    pre-step iterate); they are None on the k = 0 record.  Truth-dependent
    fields are None when no ground truth is known.
    """

    k: int
    mu: float | None
    batch_index: int | None
    psi: float
    residual: float
    rel_l2_error: float | None
    bregman_to_truth: float | None
    psi_batch_pre: float | None = None

    def __post_init__(self):
        if self.psi < 0 or self.residual < 0:
            raise ValueError("objective and residual must be nonnegative")


@dataclass
class SGDRun:
    history: list[IterationRecord]
    final_x: GridVector
    final_dual: DualVector
    best_x: GridVector
    best_k: int
    best_metric: float
    best_metric_kind: str
    diverged: bool
    diverged_at: int | None
    iters_per_epoch: int
    n_iterations: int
    snapshots: list[tuple[int, GridVector, DualVector]] = field(default_factory=list)


def objective_value(problem, x: GridVector, y_obs, q: float, r_Y: float) -> float:
    """Psi(x) = (1/N) sum_i (1/q) ||F_i(x) - y_i||_{r_Y}^q over all blocks."""
    total = 0.0
    for i in range(problem.n_blocks):
        total += lr_norm(problem.apply_block(i, x) - y_obs[i], r_Y) ** q / q
    return total / problem.n_blocks


def stochastic_gradient(problem, x: GridVector, y_obs, block_index: int,
                        q: float, r_Y: float) -> DualVector:
    """One-block gradient F_i'(x)* J_q(F_i(x) - y_i)."""
    if not 0 <= block_index < problem.n_blocks:
        raise IndexError(
            f"block index {block_index} out of range [0, {problem.n_blocks})"
        )
    gy = _geometry(r_Y, q)
    resid = problem.apply_block(block_index, x) - y_obs[block_index]
    return problem.adjoint_apply(block_index, x, duality_map(resid, gy))


def full_gradient(problem, x: GridVector, y_obs, q: float, r_Y: float) -> DualVector:
    """Mean of all block gradients; the Landweber update direction."""
    acc = None
    for i in range(problem.n_blocks):
        g = stochastic_gradient(problem, x, y_obs, i, q, r_Y)
        acc = g.values.copy() if acc is None else acc + g.values
    return DualVector(acc / problem.n_blocks)


def sgd_step(dual_state: DualVector, g: DualVector, mu: float,
             geometry: GeometryParams) -> tuple[DualVector, GridVector]:
    """One dual-space update: xi <- xi - mu * g, primal recomputed from xi."""
    if mu <= 0:
        raise ValueError(f"step-size must be positive, got {mu}")
    new_dual = DualVector(dual_state.values - mu * g.values)
    return new_dual, inverse_duality_map(new_dual, geometry)


def step_schedule(mu0: float, decay: float, k: int) -> float:
    """mu_k = mu0 * k**(-decay) for k >= 1; decay = 0 gives constant steps."""
    if k < 1:
        raise ValueError(f"step index must be >= 1, got {k}")
    if decay == 0.0:
        return mu0
    return mu0 * float(k) ** (-decay)


def schedule_prefix(mu0: float, decay: float, n: int) -> np.ndarray:
    """The first n step-sizes mu_1, ..., mu_n."""
    if n < 1:
        raise ValueError("need at least one step")
    return mu0 * np.arange(1, n + 1, dtype=np.float64) ** (-decay)


def check_step_admissibility(mu_list, gamma: float, L_max: float, G_pstar: float,
                             p_star: float, omega: float | None = None
                             ) -> tuple[bool, float]:
    """Minimum descent margin 1 - gamma - L^p* (G/p*) mu^(p*-1) over the
    schedule; admissible iff it stays positive.

    With ``omega`` set, the noise-robust variant additionally subtracts
    omega**p* / p*, the Young-inequality weight absorbed by the residual
    term.
    """
    mu = np.asarray(list(mu_list), dtype=np.float64)
    if mu.size == 0 or np.any(mu <= 0):
        raise ValueError("step-sizes must be positive")
    margins = 1.0 - gamma - L_max**p_star * (G_pstar / p_star) * mu ** (p_star - 1.0)
    if omega is not None:
        margins = margins - omega**p_star / p_star
    min_margin = float(np.min(margins))
    return min_margin > 0.0, min_margin


def omega_for_margin_fraction(p: float, fraction: float = 0.5) -> float:
    """Young weight omega whose margin cost omega**p*/p* equals ``fraction``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    p_star = conjugate_exponent(p)
    return (fraction * p_star) ** (1.0 / p_star)


def a_priori_stop_index(delta: float, mu0: float, decay: float, Gamma: float,
                        p: float) -> int:
    """Largest k with delta^p * (mu_1 + ... + mu_k) <= Gamma.

    Monotone nonincreasing in delta and unbounded as delta -> 0; guarded at
    1e8 iterations.
    """
    if delta <= 0 or Gamma <= 0 or mu0 <= 0:
        raise ValueError("delta, Gamma, and mu0 must be positive")
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    budget = Gamma / (delta**p * mu0)
    if budget < 1.0:
        return 0
    if decay == 0.0:
        k = int(math.floor(budget))
        if k > _STOP_INDEX_CAP:
            raise OverflowError(
                f"a-priori stop index {k} exceeds the {_STOP_INDEX_CAP} guard; "
                f"reduce the step budget or raise the noise level"
            )
        return k
    count = 0
    running = 0.0
    start = 1
    chunk = 1 << 16
    while True:
        ell = np.arange(start, start + chunk, dtype=np.float64)
        cums = running + np.cumsum(ell ** (-decay))
        idx = int(np.searchsorted(cums, budget, side="right"))
        count += idx
        if idx < chunk:
            return count
        if count >= _STOP_INDEX_CAP:
            raise OverflowError(
                f"a-priori stop index exceeds the {_STOP_INDEX_CAP} guard; "
                f"reduce the step budget or raise the noise level"
            )
        running = float(cums[-1])
        start += chunk


def relative_error(x: GridVector, x_truth: GridVector) -> float:
    """Relative l^2 error ||x_truth - x||_2 / ||x_truth||_2."""
    denom = float(np.linalg.norm(x_truth.values))
    if denom == 0.0:
        raise ValueError("ground truth must be nonzero")
    return float(np.linalg.norm(x_truth.values - x.values)) / denom


def _full_diagnostics(problem, x, y_obs, q, r_Y):
    """Full objective and the outer-l^q product norm of the residual."""
    norms = np.array([lr_norm(problem.apply_block(i, x) - y_obs[i], r_Y)
                      for i in range(problem.n_blocks)])
    psi = float(np.sum(norms**q)) / (q * problem.n_blocks)
    residual = float(np.sum(norms**q) ** (1.0 / q))
    return psi, residual


def _make_record(problem, x, y_obs, config, k, mu, batch, psi_pre, truth, gx):
    psi, residual = _full_diagnostics(problem, x, y_obs, config.q, config.r_Y)
    rel = relative_error(x, truth) if truth is not None else None
    breg = bregman_distance(x, truth, gx) if truth is not None else None
    return IterationRecord(k=k, mu=mu, batch_index=batch, psi=psi,
                           residual=residual, rel_l2_error=rel,
                           bregman_to_truth=breg, psi_batch_pre=psi_pre)


def _total_iterations(config: SolverConfig, iters_per_epoch: int) -> int:
    if config.stopping.kind == "a_priori":
        return a_priori_stop_index(config.stopping.delta, config.mu0,
                                   config.step_decay_exponent,
                                   config.stopping.gamma_budget, config.p)
    return config.max_epochs * iters_per_epoch


def _warn_if_inadmissible(problem, config: SolverConfig, total: int) -> None:
    gx = config.geometry_x()
    gamma = problem.gamma
    if gamma is None or problem.L_max is None or gx.G_pstar is None:
        logger.debug("admissibility not checkable (missing gamma, L_max, or "
                     "smoothness constant); proceeding")
        return
    mu_head = schedule_prefix(config.mu0, config.step_decay_exponent, min(total, 4))
    ok, margin = check_step_admissibility(mu_head, gamma, problem.L_max,
                                          gx.G_pstar, gx.p_star)
    if not ok:
        logger.warning(
            "step schedule is inadmissible (margin %.3e); proceeding anyway "
            "- this configuration carries no descent guarantee", margin,
        )


def _run_iteration_loop(problem, y_obs, config: SolverConfig, x0,
                        sample_block, iters_per_epoch: int,
                        collect_snapshots: bool) -> SGDRun:
    if len(y_obs) != problem.n_blocks:
        raise ValueError(
            f"observation block count {len(y_obs)} != {problem.n_blocks}"
        )
    gx = config.geometry_x()
    gy = config.geometry_y()
    truth = problem.x_truth

    if x0 is None:
        x = GridVector(np.zeros(problem.domain_shape))
    elif isinstance(x0, GridVector):
        x = x0
    else:
        x = GridVector(np.broadcast_to(np.asarray(x0, dtype=np.float64),
                                       problem.domain_shape).copy())
    xi = duality_map(x, gx)
    guard = _DIVERGENCE_FACTOR * max(1.0, float(np.max(np.abs(xi.values))))

    total = _total_iterations(config, iters_per_epoch)
    _warn_if_inadmissible(problem, config, max(total, 1))

    if truth is not None:
        best_kind = "rel_l2_error"
        best_metric = relative_error(x, truth)
    else:
        best_kind = "residual"
        _, best_metric = _full_diagnostics(problem, x, y_obs, config.q, config.r_Y)
    best_x, best_k = x, 0

    history = [_make_record(problem, x, y_obs, config, 0, None, None, None,
                            truth, gx)]
    snapshots = [(0, x, xi)] if collect_snapshots else []
    diverged = False
    diverged_at = None

    for k in range(1, total + 1):
        i = sample_block()
        mu = step_schedule(config.mu0, config.step_decay_exponent, k)
        if i is None:
            grad = full_gradient(problem, x, y_obs, config.q, config.r_Y)
            psi_pre = None
        else:
            resid = problem.apply_block(i, x) - y_obs[i]
            psi_pre = lr_norm(resid, config.r_Y) ** config.q / config.q
            grad = problem.adjoint_apply(i, x, duality_map(resid, gy))

        new_vals = xi.values - mu * grad.values
        if not np.isfinite(new_vals).all() or np.max(np.abs(new_vals)) > guard:
            diverged = True
            diverged_at = k
            history.append(_make_record(problem, x, y_obs, config, k, mu, i,
                                        psi_pre, truth, gx))
            logger.warning("iterate diverged at iteration %d; aborting run", k)
            break
        xi = DualVector(new_vals)
        x = inverse_duality_map(xi, gx)

        if truth is not None:
            metric = relative_error(x, truth)
            if metric < best_metric:
                best_metric, best_x, best_k = metric, x, k

        is_record = (config.record_every is not None
                     and k % config.record_every == 0) or k == total
        if is_record:
            history.append(_make_record(problem, x, y_obs, config, k, mu, i,
                                        psi_pre, truth, gx))
            if truth is None:
                metric = history[-1].residual
                if metric < best_metric:
                    best_metric, best_x, best_k = metric, x, k
            if collect_snapshots:
                snapshots.append((k, x, xi))

    return SGDRun(history=history, final_x=x, final_dual=xi, best_x=best_x,
                  best_k=best_k, best_metric=best_metric,
                  best_metric_kind=best_kind, diverged=diverged,
                  diverged_at=diverged_at, iters_per_epoch=iters_per_epoch,
                  n_iterations=history[-1].k, snapshots=snapshots)


def run_sgd(problem, y_obs, config: SolverConfig, x0=None,
            collect_snapshots: bool = False) -> SGDRun:
    """Run the dual-coordinate SGD iteration with uniform block sampling.

    Deterministic given the config seed.  One epoch is N block draws
    (N = number of blocks).  The best iterate is tracked every iteration by
    relative l^2 error when the ground truth is known, and at record points
    by the residual product norm otherwise.
    """
    gen = np.random.Generator(np.random.Philox(config.seed))
    N = problem.n_blocks

    def sample():
        return min(int(gen.random() * N), N - 1)

    return _run_iteration_loop(problem, y_obs, config, x0, sample,
                               iters_per_epoch=N,
                               collect_snapshots=collect_snapshots)


def run_landweber(problem, y_obs, config: SolverConfig, x0=None,
                  collect_snapshots: bool = False) -> SGDRun:
    """Deterministic full-gradient baseline with the same dual-space update.

    One iteration uses the mean of all block gradients and counts as one
    epoch.
    """
    return _run_iteration_loop(problem, y_obs, config, x0, lambda: None,
                               iters_per_epoch=1,
                               collect_snapshots=collect_snapshots)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def history_to_csv(records, path, iters_per_epoch: int) -> None:
    """Write `epoch,iter,mu,batch,psi,residual,rel_l2_err,bregman` rows.

    Missing truth-dependent fields become empty cells.  Floats use shortest
    round-trip formatting, so identical histories serialize byte-identically.
    """
    lines = ["epoch,iter,mu,batch,psi,residual,rel_l2_err,bregman"]
    for rec in records:
        epoch = rec.k // iters_per_epoch
        lines.append(",".join([
            str(epoch), str(rec.k), _fmt(rec.mu), _fmt(rec.batch_index),
            _fmt(rec.psi), _fmt(rec.residual), _fmt(rec.rel_l2_error),
            _fmt(rec.bregman_to_truth),
        ]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
