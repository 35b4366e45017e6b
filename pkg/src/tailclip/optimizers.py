"""Optimization loops with clipping, projection and iterate averaging.

Algorithms: plain and momentum SGD, globally clipped SGD (optionally
projected), coordinate-wise clipped SGD, adaptive coordinate-wise clipping,
and an RMSProp/Adam-style baseline.  Schedules include the constant
step/threshold pair prescribed for smooth nonconvex objectives and the
inverse-time step with power-growing threshold prescribed for strongly
convex objectives.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .clip import ACClipParams, ACClipState, acclip_factors, acclip_step
from .errors import ConfigurationError
from .noise import sample_noise_batch
from .problems import StochasticProblem, project

ALGORITHMS = ("sgd", "momentum_sgd", "gclip", "proj_gclip", "cclip", "acclip", "adamlike")

_NOISE_BLOCK = 4096


# ---------------------------------------------------------------------------
# Schedules


@dataclass
class Schedule:
    """Rule mapping 1-based iteration k to step size and clip threshold.

    eta_kind: "constant" (eta = eta_param) or "inverse_time"
    (eta_k = eta_param / (k+1)).  tau_kind: "constant", "power"
    (tau_k = tau_base * k^tau_exponent) or "vector_power" with tau_base a
    per-coordinate vector.
    """

    eta_kind: str = "constant"
    eta_param: float = 0.1
    tau_kind: str = "constant"
    tau_base: float | np.ndarray = math.inf
    tau_exponent: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.eta_kind not in ("constant", "inverse_time"):
            raise ConfigurationError(f"unknown eta_kind {self.eta_kind!r}")
        if self.tau_kind not in ("constant", "power", "vector_power"):
            raise ConfigurationError(f"unknown tau_kind {self.tau_kind!r}")
        if self.eta_param <= 0:
            raise ConfigurationError("step-size parameter must be positive")
        if self.tau_kind == "vector_power":
            self.tau_base = np.asarray(self.tau_base, dtype=float)
            if np.any(self.tau_base < 0):
                raise ConfigurationError("thresholds must be nonnegative")
        elif self.tau_base < 0:
            raise ConfigurationError("thresholds must be nonnegative")
        if not self.label:
            self.label = f"{self.eta_kind}/{self.tau_kind}"

    def eta(self, k: int) -> float:
        if self.eta_kind == "constant":
            return self.eta_param
        return self.eta_param / (k + 1)

    def tau(self, k: int):
        if self.tau_kind == "constant":
            return self.tau_base
        return self.tau_base * float(k) ** self.tau_exponent


def constant_schedule(eta: float, tau: float = math.inf) -> Schedule:
    return Schedule(eta_kind="constant", eta_param=eta, tau_kind="constant", tau_base=tau,
                    label=f"constant(eta={eta},tau={tau})")


def nonconvex_schedule(
    L: float, sigma: float, alpha: float, K: int, f0: float, variant: str = "full"
) -> Schedule:
    """Constant (eta, tau) pair for L-smooth nonconvex objectives.

    tau = max{2, 48^(1/(a-1)) s^(a/(a-1)), 8s, (f0/(s^2 K))^(a/(3a-2)) / L^((2a-2)/(3a-2))}
    eta = min{1/(4L), s^a/(L tau^a), 1/(24 L tau)}

    ``variant="simple"`` replaces the last term of the max by the simpler
    s * K^(1/(3a-2)) used in the rate derivation.  sigma = 0 degenerates to
    eta = 1/(4L), tau = 2 by convention.
    """
    if L <= 0 or K < 1 or f0 <= 0:
        raise ConfigurationError("L, K and f0 must be positive")
    if sigma < 0:
        raise ConfigurationError("sigma must be nonnegative")
    if not (1.0 < alpha <= 2.0):
        raise ConfigurationError("alpha must lie in (1, 2] (alpha=1 divides by zero)")
    if variant not in ("full", "simple"):
        raise ConfigurationError("variant must be 'full' or 'simple'")
    if sigma == 0.0:
        tau = 2.0
        eta = 1.0 / (4.0 * L)
    else:
        if variant == "full":
            last = (f0 / (sigma**2 * K)) ** (alpha / (3.0 * alpha - 2.0)) / L ** (
                (2.0 * alpha - 2.0) / (3.0 * alpha - 2.0)
            )
        else:
            last = sigma * K ** (1.0 / (3.0 * alpha - 2.0))
        tau = max(
            2.0,
            48.0 ** (1.0 / (alpha - 1.0)) * sigma ** (alpha / (alpha - 1.0)),
            8.0 * sigma,
            last,
        )
        eta = min(1.0 / (4.0 * L), sigma**alpha / (L * tau**alpha), 1.0 / (24.0 * L * tau))
    return Schedule(
        eta_kind="constant",
        eta_param=eta,
        tau_kind="constant",
        tau_base=tau,
        label=f"nonconvex(L={L},sigma={sigma:.4g},alpha={alpha},K={K},{variant})",
    )


def strongly_convex_schedule(
    mu: float, G: float, alpha: float, threshold_exponent: float | None = None
) -> Schedule:
    """eta_k = 4/(mu (k+1)) with tau_k = G k^(1/alpha) for strongly convex runs.

    The exponent 1/alpha is the one the rate derivation closes with; pass
    ``threshold_exponent`` to experiment with alternatives (e.g. alpha-1).
    """
    if mu <= 0 or G <= 0:
        raise ConfigurationError("mu and G must be positive")
    if not (1.0 < alpha <= 2.0):
        raise ConfigurationError("alpha must lie in (1, 2]")
    exponent = 1.0 / alpha if threshold_exponent is None else threshold_exponent
    return Schedule(
        eta_kind="inverse_time",
        eta_param=4.0 / mu,
        tau_kind="power",
        tau_base=G,
        tau_exponent=exponent,
        label=f"strongly_convex(mu={mu},G={G:.4g},alpha={alpha})",
    )


def cclip_thresholds(B: np.ndarray, alpha: float, k: int) -> np.ndarray:
    """Per-coordinate thresholds tau_i = B_i * k^(1/alpha)."""
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise ConfigurationError("B must be nonnegative elementwise")
    if not (1.0 < alpha <= 2.0):
        raise ConfigurationError("alpha must lie in (1, 2]")
    return B * float(k) ** (1.0 / alpha)


def cclip_schedule(mu: float, B: np.ndarray, alpha: float) -> Schedule:
    """Coordinate-wise analogue of the strongly convex schedule."""
    if mu <= 0:
        raise ConfigurationError("mu must be positive")
    B = np.asarray(B, dtype=float)
    if np.any(B < 0):
        raise ConfigurationError("B must be nonnegative elementwise")
    return Schedule(
        eta_kind="inverse_time",
        eta_param=4.0 / mu,
        tau_kind="vector_power",
        tau_base=B,
        tau_exponent=1.0 / alpha,
        label=f"cclip(mu={mu},alpha={alpha})",
    )


def weighted_average(iterates) -> np.ndarray:
    """j-weighted average of x_0..x_{k-1}: sum_j j*x_{j-1} / sum_j j.

    Single streaming pass over the sequence.
    """
    total = None
    weight = 0.0
    j = 0
    for x in iterates:
        j += 1
        x = np.asarray(x, dtype=float)
        total = j * x if total is None else total + j * x
        weight += j
    if total is None:
        raise ConfigurationError("weighted_average needs a nonempty sequence")
    return total / weight


# ---------------------------------------------------------------------------
# Trace and config


@dataclass
class OptimizerConfig:
    algorithm: str
    schedule: Schedule
    iterations: int
    x0: np.ndarray | float = 0.0
    beta1: float = 0.9
    beta2: float = 0.99
    acclip_alpha: float = 1.0
    epsilon: float = 1e-5
    averaging: bool = False
    project: bool = False
    acclip_warmup: int = 0
    record: str | int | list[int] = "log"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}"
            )
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if self.algorithm == "proj_gclip":
            self.project = True


@dataclass
class Trace:
    """Strided per-iteration records of one optimization run.

    ``suboptimality`` is measured at the weighted-average iterate when the
    run used iterate averaging, else at the current iterate.  The running
    means ``avg_grad_sq`` and ``avg_min_stat`` accumulate over every step,
    not just recorded ones.
    """

    ks: np.ndarray
    suboptimality: np.ndarray
    grad_norm: np.ndarray
    min_grad_stat: np.ndarray
    clip_frac: np.ndarray
    eff_step: np.ndarray
    avg_grad_sq: np.ndarray
    avg_min_stat: np.ndarray
    seed: int
    algorithm: str
    schedule: str
    problem: str

    def metric(self, name: str) -> np.ndarray:
        try:
            return getattr(self, name)
        except AttributeError:
            raise ConfigurationError(f"unknown trace metric {name!r}") from None


def average_traces(traces: list[Trace], stat: str = "mean") -> Trace:
    """Aggregate traces across seeds in metric space (mean or median)."""
    if not traces:
        raise ConfigurationError("no traces to average")
    ks = traces[0].ks
    for t in traces[1:]:
        if not np.array_equal(t.ks, ks):
            raise ConfigurationError("traces have mismatched record points")
    agg = np.mean if stat == "mean" else np.median
    fields = (
        "suboptimality", "grad_norm", "min_grad_stat",
        "clip_frac", "eff_step", "avg_grad_sq", "avg_min_stat",
    )
    stacked = {f: agg(np.stack([t.metric(f) for t in traces]), axis=0) for f in fields}
    t0 = traces[0]
    return Trace(ks=ks.copy(), seed=-1, algorithm=t0.algorithm,
                 schedule=t0.schedule, problem=t0.problem, **stacked)


def record_points(iterations: int, record: str | int | list[int]) -> np.ndarray:
    """Checkpoints at which a run is recorded.

    "log": geometric spacing (powers of 1.25) plus every power of ten,
    always including 1 and the final iteration.  An integer gives a fixed
    stride; an explicit list is used as given.
    """
    K = iterations
    if isinstance(record, str):
        if record != "log":
            raise ConfigurationError(f"unknown record mode {record!r}")
        pts = {1, K}
        k = 1.0
        while k <= K:
            pts.add(int(round(k)))
            k *= 1.25
        dec = 10
        while dec <= K:
            pts.add(dec)
            dec *= 10
        return np.array(sorted(p for p in pts if 1 <= p <= K), dtype=np.int64)
    if isinstance(record, int):
        if record < 1:
            raise ConfigurationError("record stride must be positive")
        pts = sorted(set(range(record, K + 1, record)) | {1, K})
        return np.array(pts, dtype=np.int64)
    pts = sorted(set(int(p) for p in record))
    if not pts or pts[0] < 1 or pts[-1] > K:
        raise ConfigurationError("explicit record points must lie in [1, iterations]")
    return np.array(pts, dtype=np.int64)


# ---------------------------------------------------------------------------
# The run loop


def _noise_stream(problem: StochasticProblem, rng: np.random.Generator, total: int):
    """Yield noise rows in pre-generated blocks (additive-noise problems)."""
    remaining = total
    while remaining > 0:
        chunk = min(_NOISE_BLOCK, remaining)
        block = sample_noise_batch(problem.noise, rng, chunk)
        for i in range(chunk):
            yield block[i]
        remaining -= chunk


def run(problem: StochasticProblem, config: OptimizerConfig, seed) -> Trace:
    """Execute one optimization run; deterministic given (problem, config, seed)."""
    alg = config.algorithm
    K = config.iterations
    sched = config.schedule
    d = problem.dimension
    rng = np.random.default_rng(seed)

    x = np.broadcast_to(np.asarray(config.x0, dtype=float), (d,)).astype(float).copy()
    domain = problem.domain
    if config.project and domain is None:
        raise ConfigurationError(f"{alg} requires a feasible domain on the problem")
    if sched.tau_kind == "vector_power" and alg not in ("cclip",):
        raise ConfigurationError("vector thresholds only apply to coordinate-wise clipping")

    # Pre-compute scalar step/threshold sequences.
    karr = np.arange(1, K + 1, dtype=float)
    if sched.eta_kind == "constant":
        etas = np.full(K, sched.eta_param)
    else:
        etas = sched.eta_param / (karr + 1.0)
    tau_powers = None
    taus = None
    if sched.tau_kind == "constant":
        taus = np.full(K, float(sched.tau_base))
    elif sched.tau_kind == "power":
        taus = float(sched.tau_base) * karr**sched.tau_exponent
    else:
        tau_powers = karr**sched.tau_exponent

    m = np.zeros(d)
    tau_alpha = np.zeros(d)
    v = np.zeros(d)
    acc_alpha = config.acclip_alpha
    eps = config.epsilon
    b1, b2 = config.beta1, config.beta2
    warmup = config.acclip_warmup

    averaging = config.averaging
    w_sum = np.zeros(d)
    w_total = 0.0

    rec = record_points(K, config.record)
    rec_set = set(int(r) for r in rec)
    rows = {name: [] for name in (
        "suboptimality", "grad_norm", "min_grad_stat",
        "clip_frac", "eff_step", "avg_grad_sq", "avg_min_stat")}

    x_star, f_star = (problem.optimum if problem.optimum is not None else (None, 0.0))
    value = problem.value
    exact_gradient = problem.exact_gradient
    additive = problem.noise is not None
    noise_rows = _noise_stream(problem, rng, K) if additive else None

    run_sq = 0.0
    run_min = 0.0
    eg = exact_gradient(x)

    for k in range(1, K + 1):
        if averaging:
            w_sum += k * x
            w_total += k

        g = eg + next(noise_rows) if additive else problem.noisy_gradient(x, rng)
        eta = etas[k - 1]
        clip_frac = 0.0
        eff_step = eta

        if alg == "sgd":
            x = x - eta * g
        elif alg == "momentum_sgd":
            m = b1 * m + (1.0 - b1) * g
            x = x - eta * m
        elif alg in ("gclip", "proj_gclip"):
            tau_k = taus[k - 1]
            norm = math.sqrt(float(g @ g))
            c = 1.0 if (norm == 0.0 or norm <= tau_k) else tau_k / norm
            x = x - (eta * c) * g
            clip_frac = 1.0 if c < 1.0 else 0.0
            eff_step = eta * c
        elif alg == "cclip":
            tau_k = taus[k - 1] if taus is not None else sched.tau_base * tau_powers[k - 1]
            clipped = np.clip(g, -tau_k, tau_k)
            x = x - eta * clipped
            if k in rec_set:
                absg = np.abs(g)
                factors = np.ones(d)
                np.divide(tau_k, absg, out=factors, where=absg > tau_k)
                clip_frac = float(np.mean(factors < 1.0))
                eff_step = eta * float(np.mean(factors))
        elif alg == "acclip":
            m = b1 * m + (1.0 - b1) * g
            tau_alpha = b2 * tau_alpha + (1.0 - b2) * np.abs(g) ** acc_alpha
            if k > warmup:
                tau_vec = tau_alpha ** (1.0 / acc_alpha)
                factors = acclip_factors(m, tau_vec, eps)
                x = x - eta * (factors * m)
                clip_frac = float(np.mean(factors < 1.0))
                eff_step = eta * float(np.mean(factors))
            else:
                eff_step = 0.0
        else:  # adamlike
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            denom = eps + np.sqrt(v)
            direction = m if b1 > 0.0 else g
            x = x - eta * direction / denom
            eff_step = eta * float(np.mean(1.0 / denom))

        if config.project:
            x = domain.project(x)

        eg = exact_gradient(x)
        gsq = float(eg @ eg)
        gnorm = math.sqrt(gsq)
        run_sq += gsq
        run_min += gsq if gnorm < 1.0 else gnorm

        if k in rec_set:
            if averaging:
                point = w_sum / w_total
                sub = value(point) - f_star
            else:
                sub = value(x) - f_star
            rows["suboptimality"].append(sub)
            rows["grad_norm"].append(gnorm)
            rows["min_grad_stat"].append(min(gnorm, gsq))
            rows["clip_frac"].append(clip_frac)
            rows["eff_step"].append(eff_step)
            rows["avg_grad_sq"].append(run_sq / k)
            rows["avg_min_stat"].append(run_min / k)

    seed_label = seed if isinstance(seed, (int, np.integer)) else -1
    return Trace(
        ks=rec,
        suboptimality=np.array(rows["suboptimality"]),
        grad_norm=np.array(rows["grad_norm"]),
        min_grad_stat=np.array(rows["min_grad_stat"]),
        clip_frac=np.array(rows["clip_frac"]),
        eff_step=np.array(rows["eff_step"]),
        avg_grad_sq=np.array(rows["avg_grad_sq"]),
        avg_min_stat=np.array(rows["avg_min_stat"]),
        seed=int(seed_label),
        algorithm=alg,
        schedule=sched.label,
        problem=problem.name,
    )


def seed_stream(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent per-run stream derived from (master seed, run index)."""
    return np.random.SeedSequence([int(master_seed), int(index)])


def _run_indexed(args):
    problem, config, master_seed, index = args
    trace = run(problem, config, seed_stream(master_seed, index))
    return index, replace(trace, seed=index)


def run_seeds(
    problem: StochasticProblem,
    config: OptimizerConfig,
    n_seeds: int,
    master_seed: int = 0,
    parallel: int | None = None,
) -> list[Trace]:
    """Run ``n_seeds`` independent replicas; replica i draws from a stream
    derived from (master_seed, i), so adding seeds never changes earlier ones."""
    jobs = [(problem, config, master_seed, i) for i in range(n_seeds)]
    if parallel is None:
        import os

        parallel = min(os.cpu_count() or 1, n_seeds)
    if parallel <= 1 or n_seeds == 1:
        results = [_run_indexed(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_indexed, jobs))
    results.sort(key=lambda pair: pair[0])
    return [t for _, t in results]


def acclip_reference_run(
    problem: StochasticProblem, config: OptimizerConfig, seed
) -> np.ndarray:
    """Final iterate from repeated acclip_step calls (cross-check for run)."""
    rng = np.random.default_rng(seed)
    d = problem.dimension
    x0 = np.broadcast_to(np.asarray(config.x0, dtype=float), (d,)).astype(float).copy()
    params = ACClipParams(
        beta1=config.beta1, beta2=config.beta2,
        alpha=config.acclip_alpha, epsilon=config.epsilon,
    )
    state = ACClipState(x=x0, params=params)
    stream = _noise_stream(problem, rng, config.iterations) if problem.noise is not None else None
    for k in range(1, config.iterations + 1):
        if stream is not None:
            g = problem.exact_gradient(state.x) + next(stream)
        else:
            g = problem.noisy_gradient(state.x, rng)
        state = acclip_step(state, g, config.schedule.eta(k))
    return state.x
