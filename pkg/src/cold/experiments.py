"""Pre-wired benchmark protocols swept over the driving time ``tau``.

An :class:`ExperimentSpec` names a system (``two-spin``, ``ising-chain``,
``lattice-arp``, ``ghz``) and a method.  Methods combine three choices:
whether a control pulse is optimised, which CD term is added, and which
optimiser searches the pulse coefficients.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from . import dynamics, lcd
from . import optimize as opt
from .models import LatticeModel, SpinModel, frustrated_triangle, ising_chain, two_spin
from .pulses import BarePulse, GrapePulse, Pulse, randomize_crab, split_params

log = logging.getLogger(__name__)

Array = NDArray[np.float64]
CArray = NDArray[np.complex128]

EXPERIMENTS = ("two-spin", "ising-chain", "lattice-arp", "ghz")
CSV_COLUMNS = ("experiment", "method", "N", "N_k", "tau", "cost", "fidelity", "t3",
               "max_cd_amp", "max_ctrl_amp", "restarts", "seed")
COST_NAMES = ("fidelity", "energy", "tangle", "coeff-integral", "coeff-max")
OPTIMIZERS = ("powell", "nelder-mead", "dual-annealing")
DEFAULT_TAUS = tuple(float(t) for t in np.logspace(-3, 1, 5))


@dataclass(frozen=True)
class Recipe:
    """What a method does: pulse family, CD term and default optimiser."""

    pulse: Literal["bare", "crab", "grape"] | None
    cd: Literal["none", "fo", "so", "exact"]
    optimizer: str | None


RECIPES: dict[str, Recipe] = {
    "bare": Recipe(None, "none", None),
    "lcd-fo": Recipe(None, "fo", None),
    "lcd-so": Recipe(None, "so", None),
    "lcd-exact": Recipe(None, "exact", None),
    "bpo": Recipe("bare", "none", "powell"),
    "bda": Recipe("bare", "none", "dual-annealing"),
    "cold-fo": Recipe("bare", "fo", "powell"),
    "cold-so": Recipe("bare", "so", "powell"),
    "crab": Recipe("crab", "none", "powell"),
    "cold-crab": Recipe("crab", "fo", "powell"),
    "cold-grape": Recipe("grape", "so", "dual-annealing"),
}
METHODS = tuple(RECIPES)
LATTICE_METHODS = ("bare", "lcd-fo", "bpo", "bda", "cold-fo", "crab", "cold-crab")


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark protocol.

    ``pulse`` and ``optimizer`` override the method's defaults (the GHZ
    experiment defaults to GRAPE pulses under dual annealing).  ``bound``
    confines every pulse coefficient to ``[-bound, bound]``; dual annealing
    requires it.  Restart 0 always starts from the all-zero pulse.
    """

    name: str
    method: str
    taus: tuple[float, ...] = DEFAULT_TAUS
    n_sites: int | None = None
    n_k: int = 1
    restarts: int = 1
    seed: int = 0
    cost: str = "fidelity"
    cost_subset: tuple[str, ...] | None = None
    caps: tuple[tuple[str, float], ...] = ()
    penalty: float = 1e3
    optimizer: str | None = None
    pulse: str | None = None
    pulse_mode: str | None = None
    bound: float | None = None
    init_scale: float = 10.0
    n_steps: int = dynamics.DEFAULT_STEPS
    max_iter: int | None = None
    corners: bool = False
    model_params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        if self.name not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.name!r}; choose from {EXPERIMENTS}")
        if self.method not in RECIPES:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.taus or any(not t > 0 for t in self.taus):
            raise ValueError("tau values must be positive")
        if self.method == "cold-grape" and self.name != "ghz":
            raise ValueError("cold-grape is only defined for the ghz experiment")
        if self.name == "lattice-arp" and self.method not in LATTICE_METHODS:
            raise ValueError(f"method {self.method!r} has no lattice version; choose from {LATTICE_METHODS}")
        if self.cost not in COST_NAMES:
            raise ValueError(f"unknown cost {self.cost!r}; choose from {COST_NAMES}")
        if self.cost == "tangle" and self.resolved_sites != 3:
            raise ValueError("the three-tangle cost needs exactly three spins")
        if self.cost == "energy" and self.name == "lattice-arp":
            raise ValueError("the lattice experiment has no energy cost")
        if self.optimizer is not None and self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}; choose from {OPTIMIZERS}")
        if self.pulse is not None and self.pulse not in ("bare", "crab", "grape"):
            raise ValueError(f"unknown pulse {self.pulse!r}")
        if self.pulse_mode is not None and self.pulse_mode not in ("half", "full"):
            raise ValueError(f"unknown pulse mode {self.pulse_mode!r}")
        if self.n_k < 1 or self.restarts < 1 or self.n_steps < 1:
            raise ValueError("n_k, restarts and n_steps must be at least 1")
        if self.bound is not None and not self.bound > 0:
            raise ValueError("bound must be positive")
        if self.resolved_optimizer == "dual-annealing" and self.bound is None and self.has_pulse:
            raise ValueError("dual annealing needs a finite bound")
        if self.corners and self.name != "ghz":
            raise ValueError("corner pulses exist only for the ghz experiment")

    @property
    def recipe(self) -> Recipe:
        return RECIPES[self.method]

    @property
    def has_pulse(self) -> bool:
        return self.recipe.pulse is not None

    @property
    def resolved_pulse(self) -> str | None:
        if not self.has_pulse:
            return None
        if self.pulse is not None:
            return self.pulse
        if self.name == "ghz" and self.recipe.pulse == "bare":
            return "grape"
        return self.recipe.pulse

    @property
    def resolved_optimizer(self) -> str | None:
        if not self.has_pulse:
            return None
        if self.optimizer is not None:
            return self.optimizer
        if self.name == "ghz":
            return "dual-annealing"
        return self.recipe.optimizer

    @property
    def resolved_mode(self) -> str:
        if self.pulse_mode is not None:
            return self.pulse_mode
        return "half" if self.name == "two-spin" else "full"

    @property
    def resolved_sites(self) -> int:
        defaults = {"two-spin": 2, "ising-chain": 5, "lattice-arp": 7, "ghz": 3}
        return defaults[self.name] if self.n_sites is None else self.n_sites


@dataclass(frozen=True)
class Row:
    experiment: str
    method: str
    N: int
    N_k: int
    tau: float
    cost: float
    fidelity: float
    t3: float | None
    max_cd_amp: float
    max_ctrl_amp: float
    restarts: int
    seed: int


# problem contexts ------------------------------------------------------------------

def build_model(spec: ExperimentSpec) -> SpinModel | LatticeModel:
    params = dict(spec.model_params)
    n = spec.resolved_sites
    if spec.name == "two-spin":
        if n != 2:
            raise ValueError("the two-spin experiment has exactly two spins")
        return two_spin(**params)
    if spec.name == "ising-chain":
        return ising_chain(n, **params)
    if spec.name == "ghz":
        return frustrated_triangle(n, corners=spec.corners, **params)
    return LatticeModel(n_sites=n, **params)


def cd_ansatz(spec: ExperimentSpec, order: str) -> lcd.Ansatz:
    """The FO (or FO plus SO) ansatz used for a spin experiment."""
    n = spec.resolved_sites
    if spec.name == "two-spin":
        return lcd.two_spin_ansatz("fo" if order == "fo" else "fo+so")
    fo = lcd.first_order(n)
    if order == "fo":
        return fo
    if spec.name == "ghz":
        return fo + lcd.ghz_second_order(n)
    return fo + lcd.second_order_chain(n)


def pulse_templates(spec: ExperimentSpec, model: SpinModel | LatticeModel,
                    seed: np.random.SeedSequence | int) -> tuple[Pulse, ...]:
    """Zero-amplitude pulses, one per control slot; CRAB offsets drawn from ``seed``."""
    kind = spec.resolved_pulse
    if kind is None:
        return ()
    slots = 1 if isinstance(model, LatticeModel) else model.n_controls
    zeros = (0.0,) * spec.n_k
    seqs = np.random.SeedSequence(seed).spawn(slots) if isinstance(seed, int) else seed.spawn(slots)
    out: list[Pulse] = []
    for k in range(slots):
        if kind == "bare":
            out.append(BarePulse(zeros, mode=spec.resolved_mode))  # type: ignore[arg-type]
        elif kind == "crab":
            out.append(randomize_crab(BarePulse(zeros), seqs[k]))
        else:
            out.append(GrapePulse(zeros))
    return tuple(out)


@dataclass
class SpinProblem:
    """A spin protocol exposed to the cost library."""

    model: SpinModel
    tau: float
    templates: tuple[Pulse, ...]
    cd: str
    ansatz: lcd.Ansatz | None
    coeff_ansatz: lcd.Ansatz
    target: CArray
    psi0: CArray
    n_steps: int = dynamics.DEFAULT_STEPS
    converge: bool = False
    last_steps: int = 0
    _solvers: dict[int, lcd.CoefficientSolver] = field(default_factory=dict, repr=False)

    def _solver(self, ansatz: lcd.Ansatz) -> lcd.CoefficientSolver:
        key = id(ansatz)
        if key not in self._solvers:
            self._solvers[key] = lcd.CoefficientSolver(self.model.basis, ansatz)
        return self._solvers[key]

    def pulses(self, params: Array) -> list[Pulse]:
        return split_params(self.templates, params) if self.templates else []

    def protocol(self, params: Array) -> dynamics.Protocol:
        mode = {"none": "none", "exact": "exact"}.get(self.cd, "lcd")
        solver = self._solver(self.ansatz) if mode == "lcd" and self.ansatz is not None else None
        return dynamics.spin_protocol(self.model, self.tau, self.pulses(params) or None, mode,  # type: ignore[arg-type]
                                      self.ansatz, solver)

    def final_state(self, params: Array) -> tuple[CArray, CArray, CArray]:
        proto = self.protocol(params)
        if self.converge:
            evo = dynamics.evolve_converged(self.psi0, proto, self.target, max(self.n_steps, dynamics.DEFAULT_STEPS))
        else:
            evo = dynamics.evolve(self.psi0, proto, self.n_steps)
        self.last_steps = evo.n_steps
        _, h_final = dynamics.spin_endpoints(self.model)
        return evo.state, self.target, h_final

    def coefficients(self, params: Array, grid: Array) -> tuple[tuple[str, ...], Array]:
        vals, ders = self.model.coefficients(self.model.lam_final * np.asarray(grid), self.pulses(params) or None)
        return self.coeff_ansatz.names, self._solver(self.coeff_ansatz).solve(vals, ders)

    def amplitudes(self, params: Array) -> dict[str, float]:
        proto = self.protocol(params)
        return {"cd": dynamics.peak(proto.cd_amplitude), "control": dynamics.peak(proto.control_amplitude)}


@dataclass
class LatticeProblem:
    """The tilted-lattice transfer exposed to the cost library."""

    model: LatticeModel
    tau: float
    templates: tuple[Pulse, ...]
    cd: bool
    n_steps: int = dynamics.DEFAULT_STEPS
    converge: bool = False
    last_steps: int = 0

    @property
    def target(self) -> CArray:
        out = np.zeros(self.model.n_sites, dtype=complex)
        out[-1] = 1.0
        return out

    def pulse(self, params: Array) -> Pulse | None:
        return split_params(self.templates, params)[0] if self.templates else None

    def protocol(self, params: Array) -> dynamics.Protocol:
        return dynamics.lattice_protocol(self.model, self.tau, self.pulse(params), self.cd)

    def final_state(self, params: Array) -> tuple[CArray, CArray, CArray]:
        proto = self.protocol(params)
        psi0 = dynamics.lattice_initial_state(self.model)
        if self.converge:
            evo = dynamics.evolve_converged(psi0, proto, self.target, max(self.n_steps, dynamics.DEFAULT_STEPS))
        else:
            evo = dynamics.evolve(psi0, proto, self.n_steps)
        self.last_steps = evo.n_steps
        return evo.state, self.target, proto.hamiltonians(np.array([1.0]))[0]

    def coefficients(self, params: Array, grid: Array) -> tuple[tuple[str, ...], Array]:
        grid = np.asarray(grid, dtype=float)
        j = self.model.tunneling(grid)
        dj = self.model.tunneling_derivative(grid)
        pulse = self.pulse(params)
        if pulse is not None:
            j = j + pulse.value(grid)[:, None]
            dj = dj + pulse.derivative(grid)[:, None]
        v, dv = self.model.tilt(grid), self.model.tilt_derivative(grid)
        alpha = lcd.lattice_lcd_alpha(j, dj, v, dv)
        return tuple(f"alpha_{n + 1}" for n in range(self.model.n_bonds)), alpha

    def amplitudes(self, params: Array) -> dict[str, float]:
        proto = self.protocol(params)
        return {"cd": dynamics.peak(proto.cd_amplitude), "control": dynamics.peak(proto.control_amplitude)}


Problem = SpinProblem | LatticeProblem


def build_problem(spec: ExperimentSpec, tau: float, templates: tuple[Pulse, ...],
                  model: SpinModel | LatticeModel | None = None) -> Problem:
    model = model or build_model(spec)
    cd = spec.recipe.cd
    if isinstance(model, LatticeModel):
        return LatticeProblem(model, tau, templates, cd != "none", spec.n_steps)
    ansatz = cd_ansatz(spec, cd) if cd in ("fo", "so") else None
    coeff_ansatz = ansatz if ansatz is not None else cd_ansatz(spec, "so")
    h0, h1 = dynamics.spin_endpoints(model)
    psi0 = dynamics.ground_state(h0).vector
    target = dynamics.ghz_state(model.n_sites) if spec.name == "ghz" else dynamics.ground_state(h1).vector
    return SpinProblem(model, tau, templates, cd, ansatz, coeff_ansatz, target, psi0, spec.n_steps)


def cost_spec(spec: ExperimentSpec) -> opt.CostSpec:
    base: opt.CostSpec = {
        "fidelity": opt.Fidelity(),
        "energy": opt.Energy(),
        "tangle": opt.ThreeTangle(),
        "coeff-integral": opt.CoeffIntegral(spec.cost_subset),
        "coeff-max": opt.CoeffMaxAmplitude(spec.cost_subset),
    }[spec.cost]
    if spec.caps:
        return opt.Constrained(base, spec.caps, spec.penalty)
    return base


def optimizer_spec(spec: ExperimentSpec, dim: int) -> opt.OptimizerSpec:
    name = spec.resolved_optimizer
    extra = {} if spec.max_iter is None else {"max_iter": spec.max_iter}
    if name == "powell":
        return opt.PowellSpec(**extra)
    if name == "nelder-mead":
        return opt.NelderMeadSpec(**extra)
    assert spec.bound is not None
    return opt.DualAnnealingSpec(bounds=((-spec.bound, spec.bound),) * dim, **extra)


# running ----------------------------------------------------------------------------

def measure(problem: Problem, params: Array, cost: opt.CostSpec) -> dict[str, float | None]:
    """Report quantities with the step count refined until converged."""
    problem.converge = True
    psi, target, _ = problem.final_state(params)
    amps = problem.amplitudes(params)
    t3 = dynamics.three_tangle(psi) if isinstance(problem, SpinProblem) and problem.model.n_sites == 3 else None
    return {
        "cost": opt.evaluate_cost(cost, problem, params),
        "fidelity": dynamics.fidelity(psi, target),
        "t3": t3,
        "max_cd_amp": amps["cd"],
        "max_ctrl_amp": amps["control"],
    }


def pulse_dimension(spec: ExperimentSpec, model: SpinModel | LatticeModel) -> int:
    slots = 1 if isinstance(model, LatticeModel) else model.n_controls
    return spec.n_k * slots if spec.has_pulse else 0


def restart_builder(spec: ExperimentSpec, tau: float, model: SpinModel | LatticeModel,
                    cost: opt.CostSpec):
    """Per-restart problem factory: fresh CRAB offsets and start point from the restart seed."""
    dim = pulse_dimension(spec, model)
    bounds = None if spec.bound is None else [(-spec.bound, spec.bound)] * dim

    def build(i: int, seq: np.random.SeedSequence) -> opt.RestartProblem:
        pulse_seq, start_seq = seq.spawn(2)
        problem = build_problem(spec, tau, pulse_templates(spec, model, pulse_seq), model)
        if i == 0:
            x0 = np.zeros(dim)
        else:
            scale = spec.init_scale if spec.bound is None else min(spec.init_scale, spec.bound)
            x0 = np.random.default_rng(start_seq).uniform(-scale, scale, dim)
        return opt.RestartProblem(lambda x: opt.evaluate_cost(cost, problem, x), x0, bounds, problem)

    return build


def run_tau(spec: ExperimentSpec, tau: float, seed: int, threads: int = 1) -> Row:
    """Optimise (if the method has a pulse) and measure at one driving time."""
    model = build_model(spec)
    cost = cost_spec(spec)
    if not spec.has_pulse:
        problem = build_problem(spec, tau, (), model)
        measured = measure(problem, np.zeros(0), cost)
        return Row(spec.name, spec.method, spec.resolved_sites, 0, tau, restarts=1, seed=spec.seed, **measured)
    build = restart_builder(spec, tau, model, cost)
    optimizer = optimizer_spec(spec, pulse_dimension(spec, model))
    result = opt.run_restarts(build, optimizer, spec.restarts, seed, threads)
    measured = measure(result.best_context, result.best_x, cost)  # type: ignore[arg-type]
    return Row(spec.name, spec.method, spec.resolved_sites, spec.n_k, tau, restarts=spec.restarts,
               seed=spec.seed, **measured)


def tau_seeds(master_seed: int, n: int) -> list[int]:
    """One restart master seed per ``tau`` point."""
    return [opt.seed_value(s) for s in np.random.SeedSequence(master_seed).spawn(n)]


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> list[Row]:
    """One row per ``tau``, in the order given."""
    seeds = tau_seeds(spec.seed, len(spec.taus))
    return [run_tau(spec, tau, s, threads) for tau, s in zip(spec.taus, seeds)]


def sweep_tau(specs: Sequence[ExperimentSpec], threads: int = 1) -> list[Row]:
    """Rows for several methods, ordered by ``tau`` and then by method order."""
    rows = [(k, row) for k, spec in enumerate(specs) for row in run_experiment(spec, threads)]
    rows.sort(key=lambda kr: (kr[1].tau, kr[0]))
    return [row for _, row in rows]


def with_method(spec: ExperimentSpec, method: str) -> ExperimentSpec:
    return replace(spec, method=method)


# CSV -------------------------------------------------------------------------------------

def format_value(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


def rows_to_csv(rows: Sequence[Row]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([format_value(getattr(row, f.name)) for f in fields(Row)])
    return buf.getvalue()


def write_csv(rows: Sequence[Row], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))
