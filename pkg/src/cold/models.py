"""Time-dependent model Hamiltonians with control-pulse slots.

A spin model is a list of fixed Pauli operators, each weighted by a
schedule ``h_i(lam)``, plus control operators weighted by pulses.  The
synthetic lattice is a single-particle tight-binding chain and is handled
with explicit tridiagonal matrices instead of Pauli sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .pauli import PauliSum, pair_operator, site_operator, total
from .pulses import Pulse

Array = NDArray[np.float64]


# schedules ---------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """A scalar drive ``h(lam)`` with its derivative per unit ``lam``."""

    value: Callable[[Array], Array]
    derivative: Callable[[Array], Array]
    label: str = ""

    def __call__(self, lam: ArrayLike) -> Array:
        lam = np.asarray(lam, dtype=float)
        return np.broadcast_to(self.value(lam), lam.shape).astype(float)

    def d(self, lam: ArrayLike) -> Array:
        lam = np.asarray(lam, dtype=float)
        return np.broadcast_to(self.derivative(lam), lam.shape).astype(float)

    def scaled(self, factor: float, offset: float = 0.0) -> Schedule:
        """``offset + factor * h(lam)``."""
        return Schedule(lambda x: offset + factor * self.value(x),
                        lambda x: factor * self.derivative(x),
                        f"{offset}+{factor}*{self.label}")


def constant(c: float) -> Schedule:
    return Schedule(lambda x: np.full(np.shape(x), float(c)), lambda x: np.zeros(np.shape(x)), f"{c}")


def linear(start: float, slope: float) -> Schedule:
    return Schedule(lambda x: start + slope * x, lambda x: np.full(np.shape(x), float(slope)),
                    f"{start}+{slope}*lam")


def _check_unit(lam: Array) -> Array:
    if np.any(lam < -1e-12) or np.any(lam > 1 + 1e-12):
        raise ValueError("smooth_ramp is defined on lam in [0, 1]")
    return lam


def smooth_ramp(lam: ArrayLike) -> Array:
    """``sin^2((pi/2) sin^2((pi/2) lam))``: 0 to 1 with flat ends."""
    lam = _check_unit(np.asarray(lam, dtype=float))
    return np.sin(0.5 * np.pi * np.sin(0.5 * np.pi * lam) ** 2) ** 2


def smooth_ramp_derivative(lam: ArrayLike) -> Array:
    lam = _check_unit(np.asarray(lam, dtype=float))
    u = 0.5 * np.pi * np.sin(0.5 * np.pi * lam) ** 2
    return np.sin(2 * u) * (np.pi**2 / 4) * np.sin(np.pi * lam)


RAMP = Schedule(smooth_ramp, smooth_ramp_derivative, "ramp")


# spin models --------------------------------------------------------------

@dataclass(frozen=True)
class SpinModel:
    """``H(lam) = sum_i h_i(lam) O_i + sum_k f_k(lam) C_k``.

    ``lam_final`` is the end of the protocol axis (1 for every model except
    the rotating spin, whose natural parameter is an angle).
    """

    name: str
    n_sites: int
    operators: tuple[PauliSum, ...]
    schedules: tuple[Schedule, ...]
    control_operators: tuple[PauliSum, ...] = ()
    lam_final: float = 1.0
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.operators) != len(self.schedules):
            raise ValueError("one schedule per operator is required")
        for op in (*self.operators, *self.control_operators):
            if op.n_sites != self.n_sites:
                raise ValueError("operator size does not match the model")
            if not op.is_hermitian():
                raise ValueError("model operators must have real coefficients")

    @property
    def basis(self) -> tuple[PauliSum, ...]:
        """Fixed operators followed by control operators."""
        return self.operators + self.control_operators

    @property
    def n_controls(self) -> int:
        return len(self.control_operators)

    def check_lam(self, lam: ArrayLike) -> Array:
        arr = np.asarray(lam, dtype=float)
        if np.any(arr < -1e-12) or np.any(arr > self.lam_final + 1e-12):
            raise ValueError(f"lam outside [0, {self.lam_final}] for model {self.name}")
        return arr

    def _check_pulses(self, pulses: Sequence[Pulse] | None) -> Sequence[Pulse]:
        pulses = () if pulses is None else tuple(pulses)
        if pulses and len(pulses) != self.n_controls:
            raise ValueError(f"model {self.name} has {self.n_controls} control slots, got {len(pulses)} pulses")
        return pulses

    def coefficients(self, lam: ArrayLike, pulses: Sequence[Pulse] | None = None) -> tuple[Array, Array]:
        """Weights of :attr:`basis` and their ``lam``-derivatives, shape (G, L)."""
        lam = np.atleast_1d(self.check_lam(lam))
        pulses = self._check_pulses(pulses)
        vals = [s(lam) for s in self.schedules]
        ders = [s.d(lam) for s in self.schedules]
        for k in range(self.n_controls):
            if pulses:
                vals.append(pulses[k].value(lam))
                ders.append(pulses[k].derivative(lam))
            else:
                vals.append(np.zeros_like(lam))
                ders.append(np.zeros_like(lam))
        return np.array(vals), np.array(ders)


def _combine(ops: Sequence[PauliSum], weights: Sequence[float], n: int) -> PauliSum:
    out = PauliSum.zero(n)
    for op, w in zip(ops, weights):
        out = out + float(w) * op
    return out


def hamiltonian_at(model: SpinModel, lam: float, pulses: Sequence[Pulse] | None = None) -> PauliSum:
    vals, _ = model.coefficients([lam], pulses)
    return _combine(model.basis, vals[:, 0], model.n_sites)


def d_lambda_hamiltonian(model: SpinModel, lam: float, pulses: Sequence[Pulse] | None = None) -> PauliSum:
    _, ders = model.coefficients([lam], pulses)
    return _combine(model.basis, ders[:, 0], model.n_sites)


def rotating_spin() -> SpinModel:
    """``H = -cos(lam) X - sin(lam) Z`` for ``lam`` in [0, pi/2]."""
    return SpinModel(
        name="rotating-spin",
        n_sites=1,
        operators=(PauliSum.from_word("X"), PauliSum.from_word("Z")),
        schedules=(Schedule(lambda x: -np.cos(x), np.sin, "-cos"),
                   Schedule(lambda x: -np.sin(x), lambda x: -np.cos(x), "-sin")),
        lam_final=np.pi / 2,
    )


def two_spin(j0: float = 0.5, h0: float = 1.0) -> SpinModel:
    """Two-spin annealing: ``J zz + Z (z1 + z2) + X(lam) (x1 + x2)``."""
    n = 2
    return SpinModel(
        name="two-spin",
        n_sites=n,
        operators=(pair_operator(n, 0, "Z", 1, "Z"), total(n, "Z"), total(n, "X")),
        schedules=(constant(-2 * j0), constant(-h0), RAMP.scaled(2 * h0)),
        control_operators=(total(n, "Z"),),
        params={"J0": j0, "h0": h0},
    )


def chain_bonds(n: int) -> PauliSum:
    out = PauliSum.zero(n)
    for j in range(n - 1):
        out = out + pair_operator(n, j, "Z", j + 1, "Z")
    return out


def ising_chain(n: int = 5, j0: float = 1.0, z0: float = 0.02, x0: float = 10.0) -> SpinModel:
    """Open Ising chain with constant coupling ``-J0`` and field ``Z0``."""
    if n < 2:
        raise ValueError("an Ising chain needs at least two sites")
    return SpinModel(
        name="ising-chain",
        n_sites=n,
        operators=(chain_bonds(n), total(n, "Z"), total(n, "X")),
        schedules=(constant(-j0), constant(z0), RAMP.scaled(x0)),
        control_operators=(total(n, "Z"),),
        params={"J0": j0, "Z0": z0, "X0": x0},
    )


def ising_graph(
    n: int,
    couplings: Mapping[tuple[int, int], Schedule | float],
    fields_x: Sequence[Schedule | float],
    fields_z: Sequence[Schedule | float],
) -> SpinModel:
    """``sum_{i<j} J_ij zz + sum_i (X_i x_i + Z_i z_i)`` on an arbitrary graph."""
    if len(fields_x) != n or len(fields_z) != n:
        raise ValueError("one X and one Z field per site are required")
    as_sched = lambda v: v if isinstance(v, Schedule) else constant(float(v))  # noqa: E731
    ops, scheds = [], []
    seen = set()
    for (i, j), jij in sorted(couplings.items()):
        if i == j:
            raise ValueError(f"self-coupling J_{i}{i} is not allowed")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ValueError(f"coupling {key} given twice")
        seen.add(key)
        ops.append(pair_operator(n, key[0], "Z", key[1], "Z"))
        scheds.append(as_sched(jij))
    for i in range(n):
        ops += [site_operator(n, i, "X"), site_operator(n, i, "Z")]
        scheds += [as_sched(fields_x[i]), as_sched(fields_z[i])]
    return SpinModel("ising-graph", n, tuple(ops), tuple(scheds))


def triangle_bonds(n: int) -> PauliSum:
    out = chain_bonds(n)
    for j in range(n - 2):
        out = out + pair_operator(n, j, "Z", j + 2, "Z")
    return out


def frustrated_triangle(n: int = 3, j0: float = 1.0, h0: float = 10.0, corners: bool = False) -> SpinModel:
    """Triangular strip with nearest and next-nearest ``zz`` couplings.

    ``h(lam) = -h0 (1 - ramp(lam))`` multiplies ``sum_j (z_j + x_j)``.  With
    ``corners`` the two end spins get their own control slots and the bulk
    spins share a third.
    """
    if n < 3 or n % 2 == 0:
        raise ValueError("the frustrated triangle needs an odd number of sites >= 3")
    field_op = total(n, "Z") + total(n, "X")
    if corners:
        bulk = PauliSum.zero(n)
        for j in range(1, n - 1):
            bulk = bulk + site_operator(n, j, "Z")
        controls = (site_operator(n, 0, "Z"), site_operator(n, n - 1, "Z"), bulk)
    else:
        controls = (total(n, "Z"),)
    return SpinModel(
        name="ghz",
        n_sites=n,
        operators=(triangle_bonds(n), field_op),
        schedules=(constant(-j0), RAMP.scaled(h0, -h0)),
        control_operators=controls,
        params={"J0": j0, "h0": h0},
    )


# synthetic lattice ---------------------------------------------------------

@dataclass(frozen=True)
class LatticeModel:
    """Tilted tight-binding chain with ``J_n = J0 (0.1 + lam)``, ``V_n = n V0 (1 - 2 lam)``."""

    n_sites: int = 7
    j0: float = 1.0
    v0: float = 4.0

    def __post_init__(self) -> None:
        if self.n_sites < 2:
            raise ValueError("the lattice needs at least two sites")

    @property
    def n_bonds(self) -> int:
        return self.n_sites - 1

    def tunneling(self, lam: ArrayLike) -> Array:
        """Bond amplitudes, shape (..., N-1)."""
        lam = np.asarray(lam, dtype=float)[..., None]
        return np.broadcast_to(self.j0 * (0.1 + lam), lam.shape[:-1] + (self.n_bonds,)).copy()

    def tunneling_derivative(self, lam: ArrayLike) -> Array:
        lam = np.asarray(lam, dtype=float)
        return np.full(lam.shape + (self.n_bonds,), self.j0)

    def tilt(self, lam: ArrayLike) -> Array:
        """On-site energies, shape (..., N)."""
        lam = np.asarray(lam, dtype=float)[..., None]
        n = np.arange(1, self.n_sites + 1)
        return n * self.v0 * (1 - 2 * lam)

    def tilt_derivative(self, lam: ArrayLike) -> Array:
        lam = np.asarray(lam, dtype=float)[..., None]
        n = np.arange(1, self.n_sites + 1)
        return np.broadcast_to(-2 * n * self.v0, lam.shape[:-1] + (self.n_sites,)).copy()


def cd_phase(j: ArrayLike, alpha: ArrayLike, tau: float) -> tuple[Array, Array]:
    """Magnitude and phase of a counterdiabatically dressed bond.

    The phase uses ``arctan2(-J tau, alpha)`` so it is continuous through
    ``alpha = 0`` (where it equals ``-pi/2`` for positive ``J``).
    """
    j = np.asarray(j, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    mag = np.sqrt(j**2 + (alpha / tau) ** 2)
    phi = np.arctan2(-j * tau, alpha)
    return mag, phi


def lattice_matrix_at(
    model: LatticeModel,
    lam: float,
    pulse: Pulse | None = None,
    cd: tuple[ArrayLike, float] | None = None,
) -> NDArray[np.complex128]:
    """Single-particle Hamiltonian matrix at ``lam``.

    ``pulse`` adds ``f(lam)`` to every bond.  ``cd = (alpha, tau)`` replaces
    each hopping ``-J`` by ``-J_cd exp(-i phi_cd)``.
    """
    if not -1e-12 <= lam <= 1 + 1e-12:
        raise ValueError("lam outside [0, 1]")
    j = model.tunneling(lam)
    if pulse is not None:
        j = j + float(pulse.value([lam])[0])
    hop: NDArray[np.complex128] = -j.astype(complex)
    if cd is not None:
        alpha, tau = cd
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), j.shape)
        mag, phi = cd_phase(j, alpha, tau)
        hop = -mag * np.exp(-1j * phi)
    h = np.diag(model.tilt(lam).astype(complex))
    idx = np.arange(model.n_bonds)
    h[idx, idx + 1] = hop
    h[idx + 1, idx] = np.conj(hop)
    return h
