"""Gradient-free optimisers, control cost functions and a seeded restart harness.

All optimisers minimise a scalar function of a real vector.  Bounds, when
given, are a sequence of ``(low, high)`` pairs and every evaluated candidate
lies inside them.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gammaln

log = logging.getLogger(__name__)

Array = NDArray[np.float64]
Objective = Callable[[Array], float]
Bounds = Sequence[tuple[float, float]]

GOLDEN = 0.3819660112501051  # 2 - golden ratio
GROW = 1.618034


class NonFiniteCostError(FloatingPointError):
    """The objective returned NaN or infinity."""


@dataclass
class OptimizeResult:
    x: Array
    fun: float
    n_evals: int
    n_iter: int
    message: str = ""
    directions: list[Array] = field(default_factory=list)


class _Counted:
    """Objective wrapper: counts calls, rejects non-finite values, records candidates."""

    def __init__(self, f: Objective, bounds: Bounds | None = None,
                 record: Callable[[Array, float], None] | None = None) -> None:
        self.f = f
        self.n = 0
        self.bounds = None if bounds is None else np.asarray(bounds, dtype=float)
        self.record = record

    def __call__(self, x: ArrayLike) -> float:
        x = np.asarray(x, dtype=float)
        if self.bounds is not None:
            lo, hi = self.bounds[:, 0], self.bounds[:, 1]
            if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
                raise AssertionError(f"candidate {x} left the search bounds")
        self.n += 1
        val = float(self.f(x))
        if self.record is not None:
            self.record(x.copy(), val)
        if not math.isfinite(val):
            raise NonFiniteCostError(f"objective returned {val} at x={x.tolist()}")
        return val


def _as_bounds(bounds: Bounds | None, dim: int) -> Array | None:
    if bounds is None:
        return None
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    if b.shape[0] != dim:
        raise ValueError(f"need {dim} bound pairs, got {b.shape[0]}")
    if np.any(~np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
        raise ValueError("bounds must be finite with low < high")
    return b


# Nelder-Mead ------------------------------------------------------------

@dataclass(frozen=True)
class NelderMeadSpec:
    reflect: float = 1.0
    expand: float = 2.0
    contract: float = 0.5
    shrink: float = 0.5
    x_tol: float = 1e-10
    f_tol: float = 1e-12
    max_evals: int = 20000
    edge: float = 0.05


def nelder_mead(f: Objective, x0: ArrayLike, spec: NelderMeadSpec = NelderMeadSpec(),
                bounds: Bounds | None = None) -> OptimizeResult:
    """Downhill simplex with reflection, expansion, contraction and shrink."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    b = _as_bounds(bounds, n)
    clip = (lambda x: x) if b is None else (lambda x: np.clip(x, b[:, 0], b[:, 1]))
    fun = _Counted(f, b)
    simplex = [clip(x0)]
    for i in range(n):
        v = x0.copy()
        v[i] += spec.edge * max(1.0, abs(x0[i]))
        simplex.append(clip(v))
    pts = np.array(simplex)
    vals = np.array([fun(p) for p in pts])
    it = 0
    msg = "evaluation cap reached"
    while fun.n < spec.max_evals:
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        diam = np.max(np.abs(pts[1:] - pts[0]))
        if diam < spec.x_tol and vals[-1] - vals[0] < spec.f_tol:
            msg = "converged"
            break
        it += 1
        centroid = pts[:-1].mean(axis=0)
        xr = clip(centroid + spec.reflect * (centroid - pts[-1]))
        fr = fun(xr)
        if fr < vals[0]:
            xe = clip(centroid + spec.expand * (xr - centroid))
            fe = fun(xe)
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
        else:
            if fr < vals[-1]:
                xc = clip(centroid + spec.contract * (xr - centroid))
            else:
                xc = clip(centroid + spec.contract * (pts[-1] - centroid))
            fc = fun(xc)
            if fc < min(fr, vals[-1]):
                pts[-1], vals[-1] = xc, fc
            else:
                pts[1:] = clip(pts[0] + spec.shrink * (pts[1:] - pts[0]))
                vals[1:] = [fun(p) for p in pts[1:]]
    k = int(np.argmin(vals))
    return OptimizeResult(pts[k].copy(), float(vals[k]), fun.n, it, msg)


# Brent line minimisation ------------------------------------------------

def bracket(f: Callable[[float], float], a: float = 0.0, b: float = 1.0,
            max_steps: int = 100) -> tuple[float, float, float, float, float, float]:
    """Golden expansion until ``f(b) < f(a), f(c)``; returns ``(a, b, c, fa, fb, fc)``."""
    fa, fb = f(a), f(b)
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    c = b + GROW * (b - a)
    fc = f(c)
    steps = 0
    while fc < fb and steps < max_steps:
        a, b, fa, fb = b, c, fb, fc
        c = b + GROW * (b - a)
        fc = f(c)
        steps += 1
    return a, b, c, fa, fb, fc


def brent(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-8,
          max_iter: int = 500, start: tuple[float, float] | None = None) -> tuple[float, float]:
    """Brent's golden-section/parabolic minimiser on ``[lo, hi]``.

    ``start`` optionally seeds the best point ``(x, f(x))`` inside the interval.
    """
    a, b = min(lo, hi), max(lo, hi)
    if start is None:
        x = w = v = a + GOLDEN * (b - a)
        fx = f(x)
    else:
        x = w = v = start[0]
        fx = start[1]
    fw = fv = fx
    d = e = 0.0
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        tol1 = tol * abs(x) + 1e-11
        tol2 = 2 * tol1
        if abs(x - m) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2 * (q - r)
            if q > 0:
                p = -p
            q = abs(q)
            if abs(p) < abs(0.5 * q * e) and q * (a - x) < p < q * (b - x):
                e, d = d, p / q
                u = x + d
                if u - a < tol2 or b - u < tol2:
                    d = tol1 if m >= x else -tol1
                use_golden = False
        if use_golden:
            e = (b - x) if x < m else (a - x)
            d = GOLDEN * e
        u = x + (d if abs(d) >= tol1 else (tol1 if d > 0 else -tol1))
        u = min(max(u, a), b)
        fu = f(u)
        if fu <= fx:
            if u < x:
                b = x
            else:
                a = x
            v, w, x = w, x, u
            fv, fw, fx = fw, fx, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, w, fv, fw = w, u, fw, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx


def _parabolic_polish(phi: Callable[[float], float], beta: float, fbeta: float, lo: float,
                      hi: float, rel_step: float = 1e-3) -> tuple[float, float]:
    """One wide three-point parabolic step around Brent's answer.

    Brent stops once neighbouring values are indistinguishable in floating
    point, which leaves ``beta`` uncertain at roughly ``sqrt(eps)``.  A
    parabola through points spaced well above that resolution recovers the
    vertex of a quadratic to near machine precision.  Kept unless it raises
    the value by more than rounding noise.
    """
    h = rel_step * (1.0 + abs(beta))
    if beta - h < lo or beta + h > hi:
        return beta, fbeta
    f_minus, f_plus = phi(beta - h), phi(beta + h)
    curvature = f_plus - 2 * fbeta + f_minus
    if not curvature > 0:
        return beta, fbeta
    vertex = beta - 0.5 * h * (f_plus - f_minus) / curvature
    if not lo <= vertex <= hi or abs(vertex - beta) > h:
        return beta, fbeta
    f_vertex = phi(vertex)
    noise = 64 * np.finfo(float).eps * max(abs(fbeta), abs(f_minus), abs(f_plus))
    return (vertex, f_vertex) if f_vertex <= fbeta + noise else (beta, fbeta)


def line_minimize(f: Objective, x: Array, direction: Array, fx: float, bounds: Array | None,
                  tol: float = 1e-8) -> tuple[float, Array, float]:
    """Minimise ``f(x + beta d)`` over the feasible ``beta``; returns ``(beta, x_new, f_new)``."""
    if not np.any(direction):
        return 0.0, x, fx
    phi = lambda beta: f(x + beta * direction)  # noqa: E731
    lo, hi = -np.inf, np.inf
    if bounds is None:
        a, b, c, fa, fb, fc = bracket(phi, 0.0, 1.0)
        if not fb < min(fa, fc):
            beta, fbest = min(((a, fa), (b, fb), (c, fc)), key=lambda t: t[1])
        else:
            beta, fbest = brent(phi, a, c, tol, start=(b, fb))
    else:
        for d, xi, (bl, bh) in zip(direction, x, bounds):
            if d > 0:
                lo, hi = max(lo, (bl - xi) / d), min(hi, (bh - xi) / d)
            elif d < 0:
                lo, hi = max(lo, (bh - xi) / d), min(hi, (bl - xi) / d)
        lo, hi = min(lo, 0.0), max(hi, 0.0)
        if hi - lo <= 0:
            return 0.0, x, fx
        beta, fbest = brent(phi, lo, hi, tol)
    if np.isfinite(beta):
        beta, fbest = _parabolic_polish(phi, beta, fbest, lo, hi)
    if fbest > fx:
        return 0.0, x, fx
    new = x + beta * direction
    if bounds is not None:
        new = np.clip(new, bounds[:, 0], bounds[:, 1])
    return beta, new, fbest


# Powell ----------------------------------------------------------------------

@dataclass(frozen=True)
class PowellSpec:
    line_tol: float = 1e-8
    f_tol: float = 1e-10
    max_iter: int = 200
    max_evals: int = 50000


def powell(f: Objective, x0: ArrayLike, spec: PowellSpec = PowellSpec(), bounds: Bounds | None = None,
           directions: ArrayLike | None = None) -> OptimizeResult:
    """Conjugate-direction search.

    Each outer iteration line-minimises along every direction, drops the
    first direction, appends the net displacement and line-minimises along it.
    """
    u0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    m = u0.size
    b = _as_bounds(bounds, m)
    if b is not None:
        u0 = np.clip(u0, b[:, 0], b[:, 1])
    dirs = [row.astype(float) for row in (np.eye(m) if directions is None else np.atleast_2d(directions))]
    fun = _Counted(f, b)
    f0 = fun(u0)
    history = [np.array(dirs)]
    it = 0
    msg = "iteration cap reached"
    while it < spec.max_iter and fun.n < spec.max_evals:
        it += 1
        u, fu = u0, f0
        for d in dirs:
            _, u, fu = line_minimize(fun, u, d, fu, b, spec.line_tol)
        displacement = u - u0
        dirs = dirs[1:] + [displacement]
        history.append(np.array(dirs))
        if not np.any(displacement):
            msg = "no displacement"
            break
        _, u_new, f_new = line_minimize(fun, u0, displacement, f0, b, spec.line_tol)
        if fu < f_new:
            u_new, f_new = u, fu
        decrease = f0 - f_new
        u0, f_prev, f0 = u_new, f0, f_new
        if decrease <= spec.f_tol * (abs(f_prev) + 1e-300):
            msg = "converged"
            break
    return OptimizeResult(u0, f0, fun.n, it, msg, history)


# dual annealing ---------------------------------------------------------------

@dataclass(frozen=True)
class DualAnnealingSpec:
    bounds: tuple[tuple[float, float], ...]
    visit: float = 2.62
    initial_temp: float = 5230.0
    restart_temp_ratio: float = 2e-5
    max_iter: int = 1000
    acceptance_scale: float = 1.0
    local_search: bool = True
    max_evals: int = 10**7
    local: PowellSpec = PowellSpec(max_iter=50)


class _Visiting:
    """Tsallis visiting distribution with parameter ``q_v``."""

    def __init__(self, qv: float, rng: np.random.Generator) -> None:
        if not 1 < qv < 3:
            raise ValueError("visiting parameter must lie in (1, 3)")
        self.qv = qv
        self.rng = rng
        f2 = math.exp((4 - qv) * math.log(qv - 1))
        f3 = math.exp((2 - qv) * math.log(2) / (qv - 1))
        self.f4p = math.sqrt(math.pi) * f2 / (f3 * (3 - qv))
        f5 = 1 / (qv - 1) - 0.5
        self.f6 = math.pi * (1 - f5) / math.sin(math.pi * (1 - f5)) / math.exp(gammaln(2 - f5))

    def sample(self, temperature: float, size: int) -> Array:
        qv = self.qv
        x, y = self.rng.normal(size=(2, size))
        f4 = self.f4p * math.exp(math.log(temperature) / (qv - 1))
        x = x * math.exp(-(qv - 1) * math.log(self.f6 / f4) / (3 - qv))
        den = np.exp((qv - 1) * np.log(np.abs(y)) / (3 - qv))
        return np.clip(x / den, -1e8, 1e8)


def _wrap(x: Array, lo: Array, hi: Array) -> Array:
    span = hi - lo
    out = lo + np.mod(x - lo, span)
    return np.clip(out, lo, hi)


def annealing_temperature(k: int, t0: float, qv: float) -> float:
    """``T(k) = T0 (2^{qv-1} - 1) / ((1 + k)^{qv-1} - 1)``."""
    return t0 * (2 ** (qv - 1) - 1) / ((1 + k) ** (qv - 1) - 1)


def accept_move(delta: float, temperature: float, scale: float, rng: np.random.Generator) -> bool:
    """Metropolis rule: downhill always, uphill with ``exp(-delta / (scale T))``."""
    if delta < 0:
        return True
    if scale <= 0:
        return False
    return bool(rng.uniform() < math.exp(-delta / (scale * temperature)))


def dual_annealing(f: Objective, spec: DualAnnealingSpec, seed: int | np.random.SeedSequence | None = 0,
                   x0: ArrayLike | None = None,
                   record: Callable[[Array, float], None] | None = None) -> OptimizeResult:
    """Generalised simulated annealing with Powell refinement.

    Uphill moves are accepted with probability ``exp(-dC / (s T))`` where
    ``s`` is ``acceptance_scale``; ``s = 0`` gives greedy descent.  When the
    temperature falls below the restart threshold the best point is refined
    locally and the annealing restarts from a fresh random point.
    """
    b = _as_bounds(spec.bounds, len(spec.bounds))
    assert b is not None
    lo, hi = b[:, 0], b[:, 1]
    dim = len(lo)
    rng = np.random.default_rng(seed)
    visiting = _Visiting(spec.visit, rng)
    fun = _Counted(f, b, record)

    def propose_start() -> Array:
        return lo + rng.uniform(size=dim) * (hi - lo)

    current = np.clip(np.asarray(x0, dtype=float), lo, hi) if x0 is not None else propose_start()
    f_cur = fun(current)
    best, f_best = current.copy(), f_cur
    t_restart = spec.initial_temp * spec.restart_temp_ratio
    k = 0
    n_iter = 0

    def refine(x: Array, fx: float) -> tuple[Array, float]:
        if not spec.local_search:
            return x, fx
        res = powell(fun, x, spec.local, bounds=b)
        return (res.x, res.fun) if res.fun < fx else (x, fx)

    while n_iter < spec.max_iter and fun.n < spec.max_evals:
        n_iter += 1
        k += 1
        temp = annealing_temperature(k, spec.initial_temp, spec.visit)
        if temp < t_restart:
            best, f_best = refine(best, f_best)
            current = propose_start()
            f_cur = fun(current)
            k = 0
            continue
        for step in range(2 * dim):
            cand = current.copy()
            if step < dim:
                cand = cand + visiting.sample(temp, dim)
            else:
                i = step - dim
                cand[i] += visiting.sample(temp, 1)[0]
            cand = _wrap(cand, lo, hi)
            try:
                f_new = fun(cand)
            except NonFiniteCostError:
                continue
            if accept_move(f_new - f_cur, temp, spec.acceptance_scale, rng):
                current, f_cur = cand, f_new
                if f_cur < f_best:
                    best, f_best = current.copy(), f_cur
    best, f_best = refine(best, f_best)
    return OptimizeResult(best, f_best, fun.n, n_iter, "done")


OptimizerSpec = Union[NelderMeadSpec, PowellSpec, DualAnnealingSpec]


def minimize(spec: OptimizerSpec, f: Objective, x0: ArrayLike, rng_seed: np.random.SeedSequence | int | None = None,
             bounds: Bounds | None = None) -> OptimizeResult:
    if isinstance(spec, NelderMeadSpec):
        return nelder_mead(f, x0, spec, bounds)
    if isinstance(spec, PowellSpec):
        return powell(f, x0, spec, bounds)
    if isinstance(spec, DualAnnealingSpec):
        return dual_annealing(f, spec, rng_seed, x0)
    raise TypeError(f"unknown optimizer settings {spec!r}")


# cost functions -------------------------------------------------------------------

class CostContext(Protocol):
    """What a control problem exposes to the cost library."""

    tau: float

    def final_state(self, params: Array) -> tuple[NDArray[np.complex128], NDArray[np.complex128], NDArray[np.complex128]]:
        """``(psi_final, target, H_final)``."""

    def coefficients(self, params: Array, grid: Array) -> tuple[tuple[str, ...], Array]:
        """Names and values (shape (L, k)) of the LCD coefficients on ``grid``."""

    def amplitudes(self, params: Array) -> dict[str, float]:
        """Peak drive amplitudes by name."""


@dataclass(frozen=True)
class Fidelity:
    pass


@dataclass(frozen=True)
class Energy:
    pass


@dataclass(frozen=True)
class ThreeTangle:
    pass


@dataclass(frozen=True)
class CoeffIntegral:
    subset: tuple[str, ...] | None = None
    n_grid: int = 501


@dataclass(frozen=True)
class CoeffMaxAmplitude:
    subset: tuple[str, ...] | None = None
    n_grid: int = 501


@dataclass(frozen=True)
class Constrained:
    base: "CostSpec"
    caps: tuple[tuple[str, float], ...] = ()
    penalty: float = 1e3


CostSpec = Union[Fidelity, Energy, ThreeTangle, CoeffIntegral, CoeffMaxAmplitude, Constrained]


def _subset(names: tuple[str, ...], values: Array, subset: tuple[str, ...] | None) -> Array:
    if subset is None:
        return values
    missing = [s for s in subset if s not in names]
    if missing:
        raise KeyError(f"coefficients {missing} not in {names}")
    return values[:, [names.index(s) for s in subset]]


def penalty_term(amplitudes: dict[str, float], caps: Sequence[tuple[str, float]], penalty: float) -> float:
    """``penalty`` if any monitored amplitude exceeds its cap, else 0."""
    for name, cap in caps:
        if name not in amplitudes:
            raise KeyError(f"no amplitude named {name!r}")
        if amplitudes[name] > cap:
            return penalty
    return 0.0


def evaluate_cost(cost: CostSpec, context: CostContext, params: ArrayLike) -> float:
    from .dynamics import energy_expectation, fidelity, three_tangle

    params = np.atleast_1d(np.asarray(params, dtype=float))
    if isinstance(cost, Fidelity):
        psi, target, _ = context.final_state(params)
        return 1.0 - fidelity(psi, target)
    if isinstance(cost, Energy):
        psi, _, H = context.final_state(params)
        return energy_expectation(psi, H)
    if isinstance(cost, ThreeTangle):
        psi, _, _ = context.final_state(params)
        return 1.0 - three_tangle(psi)
    if isinstance(cost, CoeffIntegral):
        grid = np.linspace(0.0, 1.0, cost.n_grid)
        names, vals = context.coefficients(params, grid)
        vals = _subset(names, vals, cost.subset)
        # dt = tau ds
        return float(context.tau * np.trapezoid(np.abs(vals), grid, axis=0).sum())
    if isinstance(cost, CoeffMaxAmplitude):
        grid = np.linspace(0.0, 1.0, cost.n_grid)
        names, vals = context.coefficients(params, grid)
        return float(np.abs(_subset(names, vals, cost.subset)).sum(axis=1).max())
    if isinstance(cost, Constrained):
        base = evaluate_cost(cost.base, context, params)
        if not cost.caps:
            return base
        return base + penalty_term(context.amplitudes(params), cost.caps, cost.penalty)
    raise TypeError(f"unknown cost {cost!r}")


# restart harness -------------------------------------------------------------------

@dataclass
class RestartProblem:
    """One restart: objective, start point, optional bounds and problem context."""

    objective: Objective
    x0: Array
    bounds: Bounds | None = None
    context: object = None


@dataclass
class RestartRecord:
    index: int
    seed: int
    cost: float
    n_evals: int
    x: Array
    error: str = ""


@dataclass
class RunResult:
    best_x: Array
    best_cost: float
    best_index: int
    best_context: object
    records: list[RestartRecord]
    wall_time: float


def restart_seeds(master_seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(master_seed).spawn(n)


def seed_value(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def run_restarts(build: Callable[[int, np.random.SeedSequence], RestartProblem], optimizer: OptimizerSpec,
                 n_restarts: int, master_seed: int = 0, threads: int = 1) -> RunResult:
    """Run ``n_restarts`` independent optimisations and keep the best.

    Restart ``i`` receives the ``i``-th child of ``SeedSequence(master_seed)``,
    so results do not depend on ``threads``.  Ties go to the lowest index.
    """
    if n_restarts < 1:
        raise ValueError("need at least one restart")
    seeds = restart_seeds(master_seed, n_restarts)
    start = time.perf_counter()

    def one(i: int) -> tuple[RestartRecord, object]:
        seq = seeds[i]
        try:
            prob = build(i, seq)
            res = minimize(optimizer, prob.objective, prob.x0, seq.spawn(1)[0], prob.bounds)
            return RestartRecord(i, seed_value(seq), res.fun, res.n_evals, res.x), prob.context
        except Exception as exc:  # a failed restart is recorded, the run continues
            log.warning("restart %d failed: %s", i, exc)
            return RestartRecord(i, seed_value(seq), math.inf, 0, np.array([]), repr(exc)), None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, range(n_restarts)))
    else:
        outcomes = [one(i) for i in range(n_restarts)]
    records = [o[0] for o in outcomes]
    best = min(range(n_restarts), key=lambda i: (records[i].cost, i))
    if not math.isfinite(records[best].cost):
        raise RuntimeError("every restart failed: " + "; ".join(r.error for r in records))
    return RunResult(records[best].x, records[best].cost, best, outcomes[best][1], records,
                     time.perf_counter() - start)
