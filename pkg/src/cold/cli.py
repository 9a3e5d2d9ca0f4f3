"""Command-line entry point.

Every subcommand reads an optional JSON config, applies flag overrides,
validates the result before doing any work and writes CSV to ``--out`` (or
standard output).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from typing import Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import dynamics, lcd, models
from . import experiments as ex
from . import optimize as opt
from .pauli import PauliSum
from .pulses import BarePulse, split_params

log = logging.getLogger("cold")

SUBCOMMANDS = ("coeffs", "evolve", "optimize", "sweep", "experiment", "landscape")
COEFF_MODELS = ("rotating-spin", "two-spin", "ising-chain", "ghz")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ExperimentBlock(_Strict):
    name: Literal["two-spin", "ising-chain", "lattice-arp", "ghz"] = "two-spin"
    methods: list[str] = Field(default_factory=lambda: ["bare"], min_length=1)
    tau: list[float] = Field(default_factory=lambda: list(ex.DEFAULT_TAUS), min_length=1)
    n_sites: int | None = Field(default=None, ge=2, le=12)
    cost: Literal["fidelity", "energy", "tangle", "coeff-integral", "coeff-max"] = "fidelity"
    cost_subset: list[str] | None = None
    caps: dict[str, float] = Field(default_factory=dict)
    penalty: float = Field(default=1e3, gt=0)
    n_steps: int = Field(default=dynamics.DEFAULT_STEPS, ge=1)
    corners: bool = False
    model_params: dict[str, float] = Field(default_factory=dict)

    @field_validator("tau")
    @classmethod
    def _positive_tau(cls, v: list[float]) -> list[float]:
        if any(not t > 0 for t in v):
            raise ValueError("every tau must be positive")
        return v

    @field_validator("methods")
    @classmethod
    def _known_methods(cls, v: list[str]) -> list[str]:
        bad = [m for m in v if m not in ex.METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {list(ex.METHODS)}")
        return v


class PulseBlock(_Strict):
    kind: Literal["bare", "crab", "grape"] | None = None
    mode: Literal["half", "full"] | None = None
    n_k: int = Field(default=1, ge=1)
    bound: float | None = Field(default=None, gt=0)
    init_scale: float = Field(default=10.0, gt=0)
    params: list[float] | None = None


class OptimizerBlock(_Strict):
    name: Literal["powell", "nelder-mead", "dual-annealing"] | None = None
    max_iter: int | None = Field(default=None, ge=1)


class LandscapeBlock(_Strict):
    low: float = -10.0
    high: float = 10.0
    points: int = Field(default=21, ge=2)


class CoeffsBlock(_Strict):
    model: Literal["rotating-spin", "two-spin", "ising-chain", "ghz"] = "rotating-spin"
    order: Literal["fo", "so"] = "fo"
    n_sites: int | None = Field(default=None, ge=2, le=12)
    points: int = Field(default=101, ge=2)


class Config(_Strict):
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)
    pulse: PulseBlock = Field(default_factory=PulseBlock)
    optimizer: OptimizerBlock = Field(default_factory=OptimizerBlock)
    landscape: LandscapeBlock = Field(default_factory=LandscapeBlock)
    coeffs: CoeffsBlock = Field(default_factory=CoeffsBlock)
    output: str | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)
    threads: int | None = Field(default=None, ge=1)
    restarts: int = Field(default=1, ge=1)


class ConfigError(ValueError):
    """Every schema problem in a config, each prefixed by its key path."""

    def __init__(self, problems: list[str]) -> None:
        super().__init__("; ".join(problems))
        self.problems = problems


def _validate(data: Any) -> Config:
    try:
        return Config.model_validate(data)
    except ValidationError as exc:
        raise ConfigError([f"{'.'.join(str(p) for p in e['loc']) or '<root>'}: {e['msg']}"
                           for e in exc.errors()]) from None


def parse_config(text: str) -> Config:
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<syntax>: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from None
    return _validate(data)


def serialize_config(config: Config) -> str:
    return config.model_dump_json(indent=2)


# building specs -------------------------------------------------------------------

def experiment_specs(config: Config) -> list[ex.ExperimentSpec]:
    e, p, o = config.experiment, config.pulse, config.optimizer
    return [ex.ExperimentSpec(
        name=e.name, method=method, taus=tuple(e.tau), n_sites=e.n_sites, n_k=p.n_k,
        restarts=config.restarts, seed=config.seed, cost=e.cost,
        cost_subset=None if e.cost_subset is None else tuple(e.cost_subset),
        caps=tuple(sorted(e.caps.items())), penalty=e.penalty, optimizer=o.name, pulse=p.kind,
        pulse_mode=p.mode, bound=p.bound, init_scale=p.init_scale, n_steps=e.n_steps,
        max_iter=o.max_iter, corners=e.corners, model_params=tuple(sorted(e.model_params.items())),
    ) for method in e.methods]


def resolve_threads(flag: int | None, config: Config) -> int:
    """``--threads``, then ``COLD_THREADS``, then the config, then 1."""
    if flag is not None:
        return flag
    env = os.environ.get("COLD_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError([f"COLD_THREADS: not an integer: {env!r}"]) from None
        if value < 1:
            raise ConfigError(["COLD_THREADS: must be at least 1"])
        return value
    return config.threads or 1


def _fixed_problem(spec: ex.ExperimentSpec, tau: float, seed: int) -> ex.Problem:
    model = ex.build_model(spec)
    templates = ex.pulse_templates(spec, model, seed)
    return ex.build_problem(spec, tau, templates, model)


def _param_vector(problem: ex.Problem, params: Sequence[float] | None) -> np.ndarray:
    dim = sum(t.n_params for t in problem.templates)
    if params is None:
        return np.zeros(dim)
    if len(params) != dim:
        raise ConfigError([f"pulse.params: expected {dim} values, got {len(params)}"])
    return np.asarray(params, dtype=float)


# subcommands ------------------------------------------------------------------------

def _csv(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([ex.format_value(v) for v in row])
    return buf.getvalue()


def run_coeffs(config: Config) -> str:
    c = config.coeffs
    builders = {
        "rotating-spin": lambda: (models.rotating_spin(), lcd.Ansatz((PauliSum.from_word("Y"),), ("alpha",))),
        "two-spin": lambda: (models.two_spin(), lcd.two_spin_ansatz("fo" if c.order == "fo" else "fo+so")),
        "ising-chain": lambda: (models.ising_chain(c.n_sites or 5), _chain_ansatz(c.n_sites or 5, c.order)),
        "ghz": lambda: (models.frustrated_triangle(c.n_sites or 3), _ghz_ansatz(c.n_sites or 3, c.order)),
    }
    model, ansatz = builders[c.model]()
    pulses = None
    if config.pulse.params is not None:
        if not model.n_controls:
            raise ConfigError([f"pulse.params: model {c.model!r} has no control slot"])
        mode = config.pulse.mode or ("half" if c.model == "two-spin" else "full")
        templates = (BarePulse((0.0,) * config.pulse.n_k, mode=mode),) * model.n_controls
        try:
            pulses = split_params(templates, config.pulse.params)
        except ValueError as exc:
            raise ConfigError([f"pulse.params: {exc}"]) from None
    sol = lcd.solve_lcd(model, ansatz, pulses)
    lam = np.linspace(0.0, model.lam_final, c.points)
    alpha = sol(lam)
    header = ["lambda"] + [f"alpha_{k + 1}" for k in range(alpha.shape[1])]
    return _csv(header, [[float(l), *map(float, a)] for l, a in zip(lam, alpha)])


def _chain_ansatz(n: int, order: str) -> lcd.Ansatz:
    fo = lcd.first_order(n)
    return fo if order == "fo" else fo + lcd.second_order_chain(n)


def _ghz_ansatz(n: int, order: str) -> lcd.Ansatz:
    fo = lcd.first_order(n)
    return fo if order == "fo" else fo + lcd.ghz_second_order(n)


def run_evolve(config: Config) -> str:
    """Evolve with fixed pulse coefficients (zeros unless ``pulse.params``)."""
    rows = []
    for spec in experiment_specs(config):
        cost = ex.cost_spec(spec)
        for tau in spec.taus:
            problem = _fixed_problem(spec, tau, config.seed)
            m = ex.measure(problem, _param_vector(problem, config.pulse.params), cost)
            rows.append([spec.method, tau, m["fidelity"], m["t3"], m["max_cd_amp"], problem.last_steps])
    rows.sort(key=lambda r: r[1])
    return _csv(["method", "tau", "fidelity", "t3", "max_cd_amplitude", "n_steps_used"], rows)


def run_experiment_cmd(config: Config, threads: int) -> str:
    return ex.rows_to_csv(ex.sweep_tau(experiment_specs(config), threads))


def run_optimize(config: Config, threads: int) -> str:
    """Per-restart rows for the first method at the first ``tau``, then a summary row."""
    spec = experiment_specs(config)[0]
    if not spec.has_pulse:
        raise ConfigError([f"experiment.methods: {spec.method!r} has nothing to optimise"])
    tau = spec.taus[0]
    model = ex.build_model(spec)
    cost = ex.cost_spec(spec)
    build = ex.restart_builder(spec, tau, model, cost)
    dim = ex.pulse_dimension(spec, model)
    result = opt.run_restarts(build, ex.optimizer_spec(spec, dim), spec.restarts, spec.seed, threads)
    header = ["restart", "seed", "tau", "cost", "n_evals", "params", "error"]
    rows: list[list[object]] = [
        [r.index, r.seed, tau, r.cost, r.n_evals, " ".join(ex.format_value(float(v)) for v in r.x), r.error]
        for r in result.records]
    best = result.records[result.best_index]
    rows.append(["best", best.seed, tau, best.cost, sum(r.n_evals for r in result.records),
                 " ".join(ex.format_value(float(v)) for v in best.x), ""])
    return _csv(header, rows)


def run_landscape(config: Config) -> str:
    """Cost on a grid over the first two pulse coefficients (others zero)."""
    spec = experiment_specs(config)[0]
    if not spec.has_pulse:
        raise ConfigError([f"experiment.methods: {spec.method!r} has no pulse coefficients"])
    problem = _fixed_problem(spec, spec.taus[0], config.seed)
    base = _param_vector(problem, config.pulse.params)
    if base.size < 2:
        raise ConfigError([f"pulse.n_k: the landscape needs two coefficients, the pulse has {base.size}"])
    cost = ex.cost_spec(spec)
    grid = np.linspace(config.landscape.low, config.landscape.high, config.landscape.points)
    rows = []
    for c1 in grid:
        for c2 in grid:
            x = base.copy()
            x[0], x[1] = c1, c2
            rows.append([float(c1), float(c2), opt.evaluate_cost(cost, problem, x)])
    return _csv(["c1", "c2", "cost"], rows)


# argument parsing ----------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--out", help="CSV output path (default: standard output)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="worker threads (fallback: COLD_THREADS)")
    p.add_argument("--restarts", type=int, help="optimisation restarts per tau")


def _experiment_flags(p: argparse.ArgumentParser, multi_method: bool = True) -> None:
    p.add_argument("--tau", type=float, nargs="+", help="driving times")
    p.add_argument("--method", nargs="+" if multi_method else None, help="method name(s)")
    p.add_argument("--n-sites", type=int)
    p.add_argument("--n-k", type=int, help="pulse coefficients per control slot")
    p.add_argument("--pulse", choices=["bare", "crab", "grape"])
    p.add_argument("--optimizer", choices=list(ex.OPTIMIZERS))
    p.add_argument("--max-iter", type=int)
    p.add_argument("--cost", choices=list(ex.COST_NAMES))
    p.add_argument("--cost-subset", nargs="+")
    p.add_argument("--bounds", type=float, help="half-width of the box on every pulse coefficient")
    p.add_argument("--n-steps", type=int)
    p.add_argument("--params", type=float, nargs="+", help="fixed pulse coefficients")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cold", description="Counterdiabatic optimised local driving.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("coeffs", help="LCD coefficients on a lambda grid")
    _common(p)
    p.add_argument("model", nargs="?", choices=list(COEFF_MODELS))
    p.add_argument("--order", choices=["fo", "so"])
    p.add_argument("--points", type=int)
    p.add_argument("--n-sites", type=int)
    p.add_argument("--params", type=float, nargs="+")

    for name, text in (("evolve", "evolve with fixed pulse coefficients"),
                       ("optimize", "optimise one method at one tau, one row per restart"),
                       ("sweep", "sweep tau for one or more methods"),
                       ("experiment", "run a named benchmark protocol"),
                       ("landscape", "cost over two pulse coefficients")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("name", nargs="?", choices=list(ex.EXPERIMENTS))
        _experiment_flags(p)
        if name == "landscape":
            p.add_argument("--range", type=float, nargs=2, metavar=("LOW", "HIGH"))
            p.add_argument("--points", type=int)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Flag values as a nested config fragment."""
    out: dict[str, Any] = {}

    def put(path: str, value: Any) -> None:
        if value is None:
            return
        node = out
        *head, last = path.split(".")
        for key in head:
            node = node.setdefault(key, {})
        node[last] = value

    get = lambda name: getattr(args, name, None)  # noqa: E731
    put("seed", get("seed"))
    put("restarts", get("restarts"))
    put("output", get("out"))
    if args.command == "coeffs":
        put("coeffs.model", get("model"))
        put("coeffs.order", get("order"))
        put("coeffs.points", get("points"))
        put("coeffs.n_sites", get("n_sites"))
        put("pulse.params", get("params"))
        return out
    put("experiment.name", get("name"))
    method = get("method")
    put("experiment.methods", [method] if isinstance(method, str) else method)
    put("experiment.tau", get("tau"))
    put("experiment.n_sites", get("n_sites"))
    put("experiment.cost", get("cost"))
    put("experiment.cost_subset", get("cost_subset"))
    put("experiment.n_steps", get("n_steps"))
    put("pulse.n_k", get("n_k"))
    put("pulse.kind", get("pulse"))
    put("pulse.bound", get("bounds"))
    put("pulse.params", get("params"))
    put("optimizer.name", get("optimizer"))
    put("optimizer.max_iter", get("max_iter"))
    if get("range") is not None:
        put("landscape.low", args.range[0])
        put("landscape.high", args.range[1])
    put("landscape.points", get("points"))
    return out


def _merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(args: argparse.Namespace) -> Config:
    base: dict[str, Any] = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        parse_config(text)  # report file errors before merging flags
        base = json.loads(text) if text.strip() else {}
    return _validate(_merge(base, _overrides(args)))


def dispatch(command: str, config: Config, threads: int = 1) -> str:
    if command == "coeffs":
        return run_coeffs(config)
    if command == "evolve":
        return run_evolve(config)
    if command == "optimize":
        return run_optimize(config, threads)
    if command in ("sweep", "experiment"):
        return run_experiment_cmd(config, threads)
    if command == "landscape":
        return run_landscape(config)
    raise ConfigError([f"<command>: unknown subcommand {command!r}"])


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        threads = resolve_threads(args.threads, config)
        # constructing the specs validates method/model compatibility up front
        if args.command != "coeffs":
            experiment_specs(config)
        text = dispatch(args.command, config, threads)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if config.output:
        with open(config.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
