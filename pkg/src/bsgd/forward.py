"""Block-decomposed nonlinear forward operators.

Two operators are provided: a discrete Schlieren operator (componentwise
square of parallel-beam line integrals) and a synthetic diagonal benchmark
with a quadratic nonlinearity whose derivative formulas are exact
polynomials, so finite-difference and rate checks are sharp.

Adjoints are plain matrix transposes: with the unit-cell duality pairing
<f, g> = sum f_j g_j the transpose is the exact adjoint between the discrete
L^r spaces and their duals.  A smoothed (Laplacian-preconditioned) adjoint
would be a preconditioner here, not an adjoint, and is not implemented.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import DualVector, GridVector, lr_norm
from .radon import RadonSystem

__all__ = [
    "StabilityParams",
    "ForwardProblem",
    "SchlierenProblem",
    "BenchmarkProblem",
    "schlieren_apply",
    "schlieren_derivative_apply",
    "schlieren_adjoint_apply",
    "make_interleaved_batches",
    "build_schlieren_problem",
    "build_benchmark",
    "estimate_tcc_gamma",
    "estimate_lipschitz_Lmax",
]

_DATA_CONSISTENCY_RTOL = 1e-10


@dataclass(frozen=True)
class StabilityParams:
    """Holder-type conditional stability: D(x, x~)^alpha <= ||F(x)-F(x~)||^p / C_alpha."""

    alpha: float
    C_alpha: float

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError(f"stability exponent must be >= 1, got {self.alpha}")
        if self.C_alpha <= 0:
            raise ValueError(f"stability constant must be positive, got {self.C_alpha}")


class ForwardProblem:
    """A nonlinear operator split into blocks F_1, ..., F_N.

    Subclasses implement the block actions; this base owns the batch map,
    exact data, optional ground truth, and the operator bounds ``L_max``
    (derivative norm) and ``gamma`` (tangential cone constant, exact where
    known and a sampled estimate otherwise).
    """

    kind = "abstract"

    def __init__(self, batches, y_exact, x_truth=None, L_max=None, gamma=None,
                 stability=None):
        batches = [list(map(int, b)) for b in batches]
        if not batches or any(len(b) == 0 for b in batches):
            raise ValueError("every batch must be nonempty")
        flat = sorted(i for b in batches for i in b)
        if flat != list(range(len(flat))):
            raise ValueError("batches must partition the full index set")
        self.batches = batches
        self.y_exact = list(y_exact)
        if len(self.y_exact) != len(batches):
            raise ValueError("need one exact data block per batch")
        self.x_truth = x_truth
        self.L_max = L_max
        self.gamma = gamma
        self.stability = stability
        if x_truth is not None:
            for i, y_i in enumerate(self.y_exact):
                diff = lr_norm(self.apply_block(i, x_truth) - y_i, 2.0)
                scale = max(lr_norm(y_i, 2.0), 1.0)
                if diff > _DATA_CONSISTENCY_RTOL * scale:
                    raise ValueError(
                        f"block {i}: operator at ground truth does not reproduce "
                        f"the exact data (relative mismatch {diff / scale:.3e})"
                    )

    @property
    def n_blocks(self) -> int:
        return len(self.batches)

    @property
    def domain_shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    def apply_block(self, i: int, x: GridVector) -> GridVector:
        raise NotImplementedError

    def derivative_apply(self, i: int, x: GridVector, h: GridVector) -> GridVector:
        raise NotImplementedError

    def adjoint_apply(self, i: int, x: GridVector, g) -> DualVector:
        raise NotImplementedError

    def apply_all(self, x: GridVector) -> list[GridVector]:
        return [self.apply_block(i, x) for i in range(self.n_blocks)]

    def _check_block(self, i: int) -> None:
        if not 0 <= i < self.n_blocks:
            raise IndexError(f"block index {i} out of range [0, {self.n_blocks})")


def schlieren_apply(system: RadonSystem, batch, x: GridVector) -> GridVector:
    """Componentwise square of the stacked line integrals over the batch."""
    _check_image(system, x)
    proj = np.stack([system.project(a, x.values) for a in batch])
    return GridVector(proj * proj)


def schlieren_derivative_apply(system: RadonSystem, batch, x: GridVector,
                               h: GridVector) -> GridVector:
    """Derivative action: 2 * (R x) * (R h), stacked over the batch."""
    _check_image(system, x)
    _check_image(system, h)
    px = np.stack([system.project(a, x.values) for a in batch])
    ph = np.stack([system.project(a, h.values) for a in batch])
    return GridVector(2.0 * px * ph)


def schlieren_adjoint_apply(system: RadonSystem, batch, x: GridVector, g) -> DualVector:
    """Adjoint of the derivative: R^T (2 * (R x) * g)."""
    _check_image(system, x)
    gv = g.values if hasattr(g, "values") else np.asarray(g, dtype=np.float64)
    if gv.shape != (len(batch), system.n_detectors):
        raise ValueError(
            f"data block shape {gv.shape} != {(len(batch), system.n_detectors)}"
        )
    out = np.zeros(system.image_shape[0] * system.image_shape[1])
    for row, a in enumerate(batch):
        px = system.project(a, x.values)
        out += system.back_project(a, 2.0 * px * gv[row])
    return DualVector(out.reshape(system.image_shape))


def _check_image(system: RadonSystem, x: GridVector) -> None:
    if x.shape != system.image_shape:
        raise ValueError(f"image shape {x.shape} != {system.image_shape}")


class SchlierenProblem(ForwardProblem):
    kind = "schlieren"

    def __init__(self, system: RadonSystem, batches, y_exact, x_truth=None,
                 L_max=None, gamma=None):
        self.system = system
        super().__init__(batches, y_exact, x_truth, L_max, gamma)

    @property
    def domain_shape(self):
        return self.system.image_shape

    def apply_block(self, i, x):
        self._check_block(i)
        return schlieren_apply(self.system, self.batches[i], x)

    def derivative_apply(self, i, x, h):
        self._check_block(i)
        return schlieren_derivative_apply(self.system, self.batches[i], x, h)

    def adjoint_apply(self, i, x, g):
        self._check_block(i)
        return schlieren_adjoint_apply(self.system, self.batches[i], x, g)


def make_interleaved_batches(n_indices: int, batch_size: int) -> list[list[int]]:
    """Every (n/b)-th index starting from each offset: batch k holds
    {k, k + n/b, k + 2n/b, ...}, giving n/b batches of b indices each."""
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    if n_indices % batch_size != 0:
        raise ValueError(f"batch size {batch_size} must divide {n_indices}")
    n_batches = n_indices // batch_size
    return [list(range(k, n_indices, n_batches)) for k in range(n_batches)]


def build_schlieren_problem(system: RadonSystem, batch_size: int,
                            x_truth: GridVector) -> SchlierenProblem:
    """Batch the angles, compute exact data from the ground truth."""
    batches = make_interleaved_batches(system.n_angles, batch_size)
    y_exact = [schlieren_apply(system, b, x_truth) for b in batches]
    return SchlierenProblem(system, batches, y_exact, x_truth=x_truth)


class BenchmarkProblem(ForwardProblem):
    """Componentwise F_j(x) = a_j x_j + beta a_j x_j^2 on coordinate blocks."""

    kind = "benchmark"

    def __init__(self, diag, beta, batches, y_exact, x_truth=None, L_max=None,
                 gamma=None, stability=None):
        self.diag = np.asarray(diag, dtype=np.float64)
        self.beta = float(beta)
        super().__init__(batches, y_exact, x_truth, L_max, gamma, stability)

    @property
    def dim(self) -> int:
        return self.diag.size

    @property
    def domain_shape(self):
        return (self.dim,)

    def apply_block(self, i, x):
        self._check_block(i)
        idx = self.batches[i]
        xv = x.values[idx]
        return GridVector(self.diag[idx] * (xv + self.beta * xv * xv))

    def derivative_apply(self, i, x, h):
        self._check_block(i)
        idx = self.batches[i]
        slope = self.diag[idx] * (1.0 + 2.0 * self.beta * x.values[idx])
        return GridVector(slope * h.values[idx])

    def adjoint_apply(self, i, x, g):
        self._check_block(i)
        idx = self.batches[i]
        gv = g.values if hasattr(g, "values") else np.asarray(g, dtype=np.float64)
        slope = self.diag[idx] * (1.0 + 2.0 * self.beta * x.values[idx])
        out = np.zeros(self.dim)
        out[idx] = slope * gv
        return DualVector(out)


def build_benchmark(dim: int, diag_min: float, diag_max: float,
                    nonlinearity_beta: float, *, n_blocks: int = 5,
                    seed: int = 0, truth_scale: float = 1.0,
                    gamma_ball_radius: float = 1.0,
                    gamma_samples: int = 50) -> BenchmarkProblem:
    """Synthetic diagonal benchmark with known constants.

    The diagonal is a linspace over [diag_min, diag_max] (so the extreme
    entries are exact), the ground truth is a seeded standard normal vector,
    and blocks are contiguous coordinate ranges.  For beta = 0 the
    tangential cone constant is exactly 0, the derivative bound is exactly
    diag_max, and (in the Hilbert setting r = p = q = 2) conditional
    stability holds with alpha = 1 and C_alpha = 2 diag_min^2.  For
    beta != 0 the constant gamma is estimated by sampling and construction
    fails if the estimate reaches 1/2.
    """
    if not (0 < diag_min <= diag_max):
        raise ValueError(f"need 0 < diag_min <= diag_max, got {diag_min}, {diag_max}")
    if dim < 1 or n_blocks < 1 or n_blocks > dim:
        raise ValueError(f"invalid dim={dim}, n_blocks={n_blocks}")
    diag = np.linspace(diag_min, diag_max, dim) if dim > 1 else np.array([diag_max])
    gen = np.random.Generator(np.random.Philox(seed))
    x_truth = GridVector(truth_scale * gen.standard_normal(dim))
    batches = [list(b) for b in np.array_split(np.arange(dim), n_blocks)]

    beta = float(nonlinearity_beta)
    probe = BenchmarkProblem(diag, beta, batches,
                             y_exact=[GridVector(diag[idx] * (x_truth.values[idx]
                                                              + beta * x_truth.values[idx] ** 2))
                                      for idx in batches],
                             x_truth=x_truth)
    if beta == 0.0:
        gamma = 0.0
        L_max = float(diag_max)
        stability = StabilityParams(alpha=1.0, C_alpha=2.0 * diag_min**2)
    else:
        gamma = estimate_tcc_gamma(probe, x_truth, gamma_ball_radius,
                                   gamma_samples, seed)
        if gamma >= 0.5:
            raise ValueError(
                f"benchmark nonlinearity too strong: estimated tangential cone "
                f"constant {gamma:.4f} >= 0.5 on the working ball"
            )
        reach = float(np.max(np.abs(x_truth.values))) + gamma_ball_radius
        L_max = float(diag_max) * (1.0 + 2.0 * abs(beta) * reach)
        stability = None
    return BenchmarkProblem(diag, beta, batches, probe.y_exact, x_truth=x_truth,
                            L_max=L_max, gamma=gamma, stability=stability)


def _ball_sample(gen, center: np.ndarray, radius: float) -> np.ndarray:
    """Uniform sample from the Euclidean ball of given radius around center."""
    direction = gen.standard_normal(center.shape)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return center.copy()
    scale = radius * gen.random() ** (1.0 / center.size)
    return center + (scale / norm) * direction


def estimate_tcc_gamma(problem: ForwardProblem, ball_center: GridVector,
                       ball_radius: float, n_samples: int, rng_seed: int,
                       *, r_Y: float = 2.0) -> float:
    """Largest observed ratio ||F_i(x)-F_i(x~)-F_i'(x)(x-x~)|| / ||F_i(x)-F_i(x~)||
    over sampled pairs in the ball; a lower bound on the true constant.

    Pairs with denominator below 1e-14 are skipped.  Deterministic given
    the seed.  Norms are taken with exponent ``r_Y`` (default 2).
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    gen = np.random.Generator(np.random.Philox(rng_seed))
    center = ball_center.values
    worst = 0.0
    for _ in range(n_samples):
        x = GridVector(_ball_sample(gen, center, ball_radius))
        xt = GridVector(_ball_sample(gen, center, ball_radius))
        step = x - xt
        for i in range(problem.n_blocks):
            fx = problem.apply_block(i, x)
            fxt = problem.apply_block(i, xt)
            den = lr_norm(fx - fxt, r_Y)
            if den < 1e-14:
                continue
            lin = problem.derivative_apply(i, x, step)
            num = lr_norm(fx - fxt - lin, r_Y)
            worst = max(worst, num / den)
    return worst


def estimate_lipschitz_Lmax(problem: ForwardProblem, ball_center: GridVector,
                            ball_radius: float, n_samples: int, rng_seed: int,
                            *, n_power_iter: int = 50) -> float:
    """Power-iteration estimate of max_i ||F_i'(x)|| over sampled x.

    Estimates the spectral (l^2 -> l^2) operator norm of each block
    derivative via power iteration on F'(x)* F'(x).  For solution-space
    exponents below 2 this upper-bounds the exponent-adapted operator norm,
    which keeps admissibility margins conservative.  Deterministic given
    the seed.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    gen = np.random.Generator(np.random.Philox(rng_seed))
    center = ball_center.values
    worst = 0.0
    for _ in range(n_samples):
        x = GridVector(_ball_sample(gen, center, ball_radius))
        for i in range(problem.n_blocks):
            v = gen.standard_normal(center.shape)
            vn = np.linalg.norm(v)
            if vn == 0.0:
                continue
            v /= vn
            sigma = 0.0
            for _ in range(n_power_iter):
                w = problem.derivative_apply(i, x, GridVector(v))
                back = problem.adjoint_apply(i, x, w)
                bn = np.linalg.norm(back.values)
                if bn < 1e-300:
                    sigma = 0.0
                    break
                sigma = np.sqrt(bn)
                v = back.values / bn
            worst = max(worst, float(sigma))
    return worst
