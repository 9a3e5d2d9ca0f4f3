"""State-vector evolution under time-dependent (and CD-dressed) Hamiltonians.

Each protocol is evaluated on the normalised axis ``s = t / tau`` in [0, 1].
The propagator is a product of exact slice exponentials
``exp(-i H(s_mid) dt)`` built from Hermitian eigendecompositions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import lcd
from .models import LatticeModel, SpinModel, cd_phase
from .pauli import PauliSum, to_dense
from .pulses import Pulse

log = logging.getLogger(__name__)

DEFAULT_STEPS = 1000
MAX_STEPS = 16000
CONVERGENCE_TOL = 1e-8
NORM_TOL = 1e-10
_CHUNK = 2048

CdMode = Literal["none", "lcd", "exact"]
Array = NDArray[np.float64]
CArray = NDArray[np.complex128]


@dataclass(frozen=True)
class GroundState:
    vector: CArray
    energy: float
    gap: float
    rank: int = 1

    @property
    def degenerate(self) -> bool:
        return self.rank > 1


def fix_phase(vec: CArray) -> CArray:
    """Rotate so the largest-magnitude component is real and positive."""
    k = int(np.argmax(np.abs(vec)))
    return vec * (abs(vec[k]) / vec[k])


def ground_state(H: ArrayLike, degeneracy_tol: float = 1e-10) -> GroundState:
    """Lowest eigenvector of a Hermitian matrix, with the gap above it.

    A degenerate ground space is reported through ``rank``; the returned
    vector is then the phase-fixed lowest eigenvector from ``eigh``.
    """
    H = np.asarray(H, dtype=complex)
    if not np.allclose(H, H.conj().T, atol=1e-12):
        raise ValueError("ground_state needs a Hermitian matrix")
    E, V = np.linalg.eigh(H)
    rank = int(np.sum(E - E[0] < degeneracy_tol))
    if rank > 1:
        log.warning("ground space is %d-fold degenerate", rank)
    gap = float(E[rank] - E[0]) if rank < len(E) else 0.0
    return GroundState(fix_phase(V[:, 0]), float(E[0]), gap, rank)


def fidelity(psi: ArrayLike, phi: ArrayLike) -> float:
    psi = np.asarray(psi, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    if psi.shape != phi.shape:
        raise ValueError("states have different dimensions")
    return float(min(1.0, abs(np.vdot(phi, psi)) ** 2))


def energy_expectation(psi: ArrayLike, H: ArrayLike) -> float:
    psi = np.asarray(psi, dtype=complex)
    return float(np.vdot(psi, np.asarray(H) @ psi).real)


def three_tangle(psi: ArrayLike) -> float:
    """Three-tangle ``4 |d1 - 2 d2 + 4 d3|`` of a three-spin state."""
    psi = np.asarray(psi, dtype=complex)
    if psi.shape != (8,):
        raise ValueError("the three-tangle needs an 8-component state")
    c = {format(k, "03b"): psi[k] for k in range(8)}
    d1 = (c["000"] ** 2 * c["111"] ** 2 + c["001"] ** 2 * c["110"] ** 2
          + c["010"] ** 2 * c["101"] ** 2 + c["011"] ** 2 * c["100"] ** 2)
    d2 = (c["000"] * c["001"] * c["110"] * c["111"] + c["000"] * c["010"] * c["101"] * c["111"]
          + c["000"] * c["011"] * c["100"] * c["111"] + c["001"] * c["010"] * c["101"] * c["110"]
          + c["001"] * c["011"] * c["100"] * c["110"] + c["010"] * c["011"] * c["100"] * c["101"])
    d3 = c["000"] * c["110"] * c["101"] * c["011"] + c["100"] * c["010"] * c["001"] * c["111"]
    return float(4 * abs(d1 - 2 * d2 + 4 * d3))


def ghz_state(n: int) -> CArray:
    out = np.zeros(2**n, dtype=complex)
    out[0] = out[-1] = 1 / np.sqrt(2)
    return out


def w_state() -> CArray:
    out = np.zeros(8, dtype=complex)
    out[[1, 2, 4]] = 1 / np.sqrt(3)
    return out


# propagation -------------------------------------------------------------------

@dataclass(frozen=True)
class Protocol:
    """A Hamiltonian path ``s -> H(s)`` of total duration ``tau``.

    ``hamiltonians`` maps an array of ``s`` values to a stack of matrices.
    ``cd_amplitude`` and ``control_amplitude`` map ``s`` to the summed
    magnitude of the CD and control drives (physical units).  An optional
    ``step_density`` (positive, any scale) concentrates slices where it is
    large; without it slices are equal.
    """

    dim: int
    tau: float
    hamiltonians: Callable[[Array], CArray]
    cd_amplitude: Callable[[Array], Array] | None = None
    control_amplitude: Callable[[Array], Array] | None = None
    step_density: Callable[[Array], Array] | None = None

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class Evolution:
    state: CArray
    n_steps: int
    converged: bool = True


def slice_edges(n_steps: int, density: Callable[[Array], Array] | None = None,
                oversample: int = 8) -> Array:
    """Slice boundaries on [0, 1] carrying equal integrated ``density``."""
    if density is None:
        return np.linspace(0.0, 1.0, n_steps + 1)
    fine = np.linspace(0.0, 1.0, oversample * n_steps + 1)
    w = np.asarray(density(fine), dtype=float)
    if w.shape != fine.shape or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("step density must be finite and positive")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(fine))])
    edges = np.interp(np.linspace(0.0, cum[-1], n_steps + 1), cum, fine)
    edges[0], edges[-1] = 0.0, 1.0
    return edges


def evolve(psi0: ArrayLike, protocol: Protocol, n_steps: int = DEFAULT_STEPS) -> Evolution:
    """Midpoint slice propagation with ``n_steps`` slices."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    psi = np.asarray(psi0, dtype=complex).copy()
    if psi.shape != (protocol.dim,):
        raise ValueError(f"state has dimension {psi.size}, protocol needs {protocol.dim}")
    if abs(np.linalg.norm(psi) - 1) > NORM_TOL:
        raise ValueError("initial state is not normalised")
    edges = slice_edges(n_steps, protocol.step_density)
    mids = 0.5 * (edges[1:] + edges[:-1])
    dts = protocol.tau * np.diff(edges)
    for start in range(0, n_steps, _CHUNK):
        stack = protocol.hamiltonians(mids[start:start + _CHUNK])
        E, V = np.linalg.eigh(stack)
        phases = np.exp(-1j * E * dts[start:start + _CHUNK, None])
        Vh = np.conj(np.swapaxes(V, 1, 2))
        for k in range(stack.shape[0]):
            psi = V[k] @ (phases[k] * (Vh[k] @ psi))
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > NORM_TOL:
        raise RuntimeError(f"norm drifted to {norm:.12f}")
    return Evolution(psi, n_steps)


def evolve_converged(psi0: ArrayLike, protocol: Protocol, target: ArrayLike | None = None,
                     n_steps: int = DEFAULT_STEPS, max_steps: int = MAX_STEPS,
                     tol: float = CONVERGENCE_TOL) -> Evolution:
    """Double ``n_steps`` until the target fidelity moves by less than ``tol``.

    Without a target the monitor uses ``1 - |<psi_n|psi_2n>|^2``.
    """
    prev = evolve(psi0, protocol, n_steps)
    while n_steps < max_steps:
        n_steps = min(2 * n_steps, max_steps)
        cur = evolve(psi0, protocol, n_steps)
        if target is None:
            shift = 1 - fidelity(cur.state, prev.state)
        else:
            shift = abs(fidelity(cur.state, target) - fidelity(prev.state, target))
        if shift < tol:
            return cur
        prev = cur
    log.warning("evolution not converged at %d steps", n_steps)
    return Evolution(prev.state, n_steps, converged=False)


def peak(fn: Callable[[Array], Array] | None, n_grid: int = 1001) -> float:
    """Maximum of an amplitude profile on a uniform ``s`` grid."""
    if fn is None:
        return 0.0
    return float(np.max(fn(np.linspace(0.0, 1.0, n_grid))))


# spin protocols ----------------------------------------------------------------------

def _dense_stack(ops: Sequence[PauliSum]) -> CArray:
    if not ops:
        return np.zeros((0, 1, 1), dtype=complex)
    return np.array([to_dense(op) for op in ops])


def spin_protocol(model: SpinModel, tau: float, pulses: Sequence[Pulse] | None = None,
                  cd: CdMode = "none", ansatz: lcd.Ansatz | None = None,
                  solver: lcd.CoefficientSolver | None = None) -> Protocol:
    """``H(lam) + lam_dot * A(lam)`` along ``lam = lam_final * s``.

    ``cd="lcd"`` uses the variational coefficients of ``ansatz``;
    ``cd="exact"`` diagonalises at every slice.
    """
    pulses = tuple(pulses or ())
    basis = _dense_stack(model.basis)
    lam_dot = model.lam_final / tau
    n_fixed = len(model.operators)

    def weights(s: Array) -> tuple[Array, Array]:
        return model.coefficients(model.lam_final * s, pulses or None)

    if cd == "lcd":
        if ansatz is None:
            raise ValueError("cd='lcd' needs an ansatz")
        solver = solver or lcd.CoefficientSolver(model.basis, ansatz)
        groups = _dense_stack(ansatz.groups)
    elif cd not in ("none", "exact"):
        raise ValueError(f"unknown cd mode {cd!r}")

    def hamiltonians(s: Array) -> CArray:
        vals, ders = weights(s)
        H = np.einsum("gl,gij->lij", vals, basis)
        if cd == "lcd":
            alpha = solver.solve(vals, ders)
            H = H + lam_dot * np.einsum("lj,jab->lab", alpha, groups)
        elif cd == "exact":
            dH = np.einsum("gl,gij->lij", ders, basis)
            H = H + lam_dot * np.array([lcd.exact_agp_dense(h, d, skip_uncoupled=True) for h, d in zip(H, dH)])
        return H

    cd_amp = None
    if cd == "lcd":
        def cd_amp(s: Array) -> Array:
            vals, ders = weights(s)
            return lam_dot * np.abs(solver.solve(vals, ders)).sum(axis=1)

    ctrl_amp = None
    if model.n_controls and pulses:
        def ctrl_amp(s: Array) -> Array:
            vals, _ = weights(s)
            return np.abs(vals[n_fixed:]).sum(axis=0)

    return Protocol(basis.shape[1], tau, hamiltonians, cd_amp, ctrl_amp)


def spin_endpoints(model: SpinModel) -> tuple[CArray, NDArray[np.complex128]]:
    """Dense ``H`` at the start and end of the protocol (pulses vanish there)."""
    basis = _dense_stack(model.basis)
    vals, _ = model.coefficients(np.array([0.0, model.lam_final]))
    H = np.einsum("gl,gij->lij", vals, basis)
    return H[0], H[1]


# synthetic lattice --------------------------------------------------------------------

def lattice_protocol(model: LatticeModel, tau: float, pulse: Pulse | None = None,
                     cd: bool = False, include_tilt_rate: bool = True) -> Protocol:
    """Tilted-lattice ARP, optionally with pulse-shifted bonds and CD phases.

    With ``cd`` the bond coefficients come from :func:`cold.lcd.lattice_lcd_alpha`
    evaluated on the pulse-shifted tunnelling.  ``include_tilt_rate`` keeps
    the bond term driven by the changing tilt (see that function).
    """
    n = model.n_sites
    idx = np.arange(model.n_bonds)

    def bonds(s: Array) -> tuple[Array, Array, Array | None]:
        j = model.tunneling(s)
        dj = model.tunneling_derivative(s)
        if pulse is not None:
            j = j + pulse.value(s)[:, None]
            dj = dj + pulse.derivative(s)[:, None]
        alpha = None
        if cd:
            v = model.tilt(s)
            dv = model.tilt_derivative(s) if include_tilt_rate else None
            alpha = lcd.lattice_lcd_alpha(j, dj, v, dv)
        return j, dj, alpha

    def hamiltonians(s: Array) -> CArray:
        j, _, alpha = bonds(s)
        H = np.zeros((len(s), n, n), dtype=complex)
        H[:, np.arange(n), np.arange(n)] = model.tilt(s)
        if alpha is None:
            hop = -j.astype(complex)
        else:
            mag, phi = cd_phase(j, alpha, tau)
            hop = -mag * np.exp(-1j * phi)
        H[:, idx, idx + 1] = hop
        H[:, idx + 1, idx] = np.conj(hop)
        return H

    def bond_amp(s: Array) -> Array:
        j, _, alpha = bonds(s)
        mag = np.abs(j) if alpha is None else cd_phase(j, alpha, tau)[0]
        return mag.max(axis=1)

    cd_amp = None
    if cd:
        def cd_amp(s: Array) -> Array:
            _, _, alpha = bonds(s)
            return np.abs(alpha / tau).sum(axis=1)

    def density(s: Array) -> Array:
        # slices follow the fastest-varying bond phase
        return 1.0 + tau * bond_amp(s)

    return Protocol(n, tau, hamiltonians, cd_amp, bond_amp, density if cd else None)


def lattice_initial_state(model: LatticeModel) -> CArray:
    out = np.zeros(model.n_sites, dtype=complex)
    out[0] = 1.0
    return out


def lattice_transfer_fidelity(psi: ArrayLike) -> float:
    """Population on the last lattice site."""
    psi = np.asarray(psi, dtype=complex)
    return float(abs(psi[-1]) ** 2)
