"""Variational local counterdiabatic (LCD) coefficients.

For a Hamiltonian ``H(lam)`` and an ansatz ``A = sum_j alpha_j A_j`` the
operator ``G = dH + i[A, H]`` is minimised in Hilbert-Schmidt norm.  The
action is quadratic in ``alpha``, so stationarity is the linear system
``M alpha = b`` with ``M_jk = <iC_j, iC_k>``, ``b_j = -<dH, iC_j>`` and
``C_j = [A_j, H]``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .models import SpinModel
from .pauli import PauliSum, PauliWord, commutator, pair_operator, site_operator, total, trace_inner
from .pulses import Pulse

COND_LIMIT = 1e12
GAP_TOL = 1e-10
MAX_NESTED_TERMS = 100_000


class DegenerateSpectrumError(ValueError):
    """Two levels closer than the gap tolerance; carries the offending pair."""

    def __init__(self, pair: tuple[int, int], gap: float, lam: float | None = None) -> None:
        where = "" if lam is None else f" at lam={lam:.6g}"
        super().__init__(f"levels {pair[0]} and {pair[1]} are degenerate (gap {gap:.3e}){where}")
        self.pair = pair
        self.gap = gap
        self.lam = lam


# ansatz --------------------------------------------------------------------

def _y_count(word: PauliWord) -> int:
    return (word.x_mask & word.z_mask).bit_count()


@dataclass(frozen=True)
class Ansatz:
    """Operator groups, each scaled by one coefficient."""

    groups: tuple[PauliSum, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        groups = tuple(self.groups)
        object.__setattr__(self, "groups", groups)
        names = tuple(self.names) or tuple(f"alpha_{j + 1}" for j in range(len(groups)))
        if len(names) != len(groups):
            raise ValueError("one name per ansatz group is required")
        object.__setattr__(self, "names", names)
        if groups:
            n = groups[0].n_sites
            if any(g.n_sites != n for g in groups):
                raise ValueError("ansatz groups act on different numbers of sites")
        for g in groups:
            if not g.is_hermitian():
                raise ValueError("ansatz groups must be Hermitian (real coefficients)")
            if any(_y_count(w) % 2 == 0 for w, _ in g.items()):
                warnings.warn("ansatz word with an even number of Y factors cannot be a CD term "
                              "for a real Hamiltonian", stacklevel=2)
        for a, b in itertools.combinations(groups, 2):
            if a == b:
                raise ValueError("ansatz groups must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.groups)

    @property
    def n_sites(self) -> int:
        return self.groups[0].n_sites

    def operator(self, coeffs: ArrayLike) -> PauliSum:
        coeffs = np.asarray(coeffs, dtype=float)
        out = PauliSum.zero(self.n_sites)
        for c, g in zip(coeffs, self.groups):
            out = out + float(c) * g
        return out

    def __add__(self, other: Ansatz) -> Ansatz:
        return Ansatz(self.groups + other.groups, self.names + other.names)

    def select(self, names: Sequence[str]) -> Ansatz:
        idx = [self.names.index(n) for n in names]
        return Ansatz(tuple(self.groups[i] for i in idx), tuple(names))


def first_order(n: int) -> Ansatz:
    """Global ``alpha sum_j y_j``."""
    return Ansatz((total(n, "Y"),), ("alpha",))


def first_order_local(n: int) -> Ansatz:
    """One ``y_i`` per site."""
    return Ansatz(tuple(site_operator(n, i, "Y") for i in range(n)), tuple(f"alpha_{i + 1}" for i in range(n)))


def _pairs_sum(n: int, pairs: Sequence[tuple[int, str, int, str]]) -> PauliSum:
    out = PauliSum.zero(n)
    for i, a, j, b in pairs:
        out = out + pair_operator(n, i, a, j, b)
    return out


def second_order_chain(n: int) -> Ansatz:
    """Nearest-neighbour ``gamma (xy + yx)`` and ``zeta (zy + yz)``."""
    bonds = [(j, j + 1) for j in range(n - 1)]
    gamma = _pairs_sum(n, [p for i, j in bonds for p in ((i, "X", j, "Y"), (i, "Y", j, "X"))])
    zeta = _pairs_sum(n, [p for i, j in bonds for p in ((i, "Z", j, "Y"), (i, "Y", j, "Z"))])
    return Ansatz((gamma, zeta), ("gamma", "zeta"))


def two_spin_ansatz(order: str = "fo+so") -> Ansatz:
    """The symmetric two-spin groups ``alpha``, ``gamma``, ``zeta``."""
    full = first_order(2) + second_order_chain(2)
    picks = {"fo": ["alpha"], "so": ["gamma", "zeta"], "fo+so": ["alpha", "gamma", "zeta"]}
    return full.select(picks[order])


def ghz_second_order(n: int) -> Ansatz:
    """``gamma (sum x_j y_{j+1} + sum y_j x_{j+2}) + zeta (sum z_j y_{j+1} + sum y_j z_{j+2})``."""
    gamma = _pairs_sum(n, [(j, "X", j + 1, "Y") for j in range(n - 1)]
                       + [(j, "Y", j + 2, "X") for j in range(n - 2)])
    zeta = _pairs_sum(n, [(j, "Z", j + 1, "Y") for j in range(n - 1)]
                      + [(j, "Y", j + 2, "Z") for j in range(n - 2)])
    return Ansatz((gamma, zeta), ("gamma", "zeta"))


def graph_ansatz(n: int, second_order: bool = True) -> Ansatz:
    """Fully local FO/SO groups for an Ising graph.

    Order: ``y_i`` for each site, then ``x_p y_c`` for each ordered pair,
    then ``z_p y_c`` for each ordered pair.  Ordered pairs ``(p, c)`` run over
    ``p != c`` lexicographically.
    """
    groups = [site_operator(n, i, "Y") for i in range(n)]
    names = [f"alpha_{i}" for i in range(n)]
    if second_order:
        ordered = [(p, c) for p in range(n) for c in range(n) if p != c]
        groups += [pair_operator(n, p, "X", c, "Y") for p, c in ordered]
        names += [f"xy_{p}{c}" for p, c in ordered]
        groups += [pair_operator(n, p, "Z", c, "Y") for p, c in ordered]
        names += [f"zy_{p}{c}" for p, c in ordered]
    return Ansatz(tuple(groups), tuple(names))


def complete_imaginary(n: int) -> Ansatz:
    """Every Pauli word with an odd number of ``Y`` factors, one group each."""
    groups, names = [], []
    for letters in itertools.product("IXYZ", repeat=n):
        label = "".join(letters)
        if label.count("Y") % 2 == 1:
            groups.append(PauliSum.from_word(label))
            names.append(label)
    return Ansatz(tuple(groups), tuple(names))


# G operator, action, linear system ------------------------------------------

def build_G(H: PauliSum, dH: PauliSum, ansatz: Ansatz, coeffs: ArrayLike) -> PauliSum:
    """``dH + i [sum_j alpha_j A_j, H]``."""
    if H.n_sites != dH.n_sites or (len(ansatz) and ansatz.n_sites != H.n_sites):
        raise ValueError("H, dH and the ansatz act on different numbers of sites")
    if not len(ansatz):
        return dH
    return dH + 1j * commutator(ansatz.operator(coeffs), H)


def action(G: PauliSum) -> float:
    """Normalised ``Tr[G^2] / 2^N``."""
    return float(trace_inner(G, G).real)


@dataclass(frozen=True)
class LcdLinearSystem:
    M: NDArray[np.float64]
    b: NDArray[np.float64]
    lam: float | None = None

    def solve(self) -> NDArray[np.float64]:
        return solve_min_norm(self.M[None], self.b[None])[0]


def build_linear_system(H: PauliSum, dH: PauliSum, ansatz: Ansatz, lam: float | None = None) -> LcdLinearSystem:
    if not (H.is_hermitian(1e-14) and dH.is_hermitian(1e-14)):
        raise ValueError("build_linear_system needs Hermitian H and dH")
    ic = [1j * commutator(g, H) for g in ansatz.groups]
    k = len(ic)
    M = np.empty((k, k))
    for a in range(k):
        for c in range(a, k):
            M[a, c] = M[c, a] = trace_inner(ic[a], ic[c]).real
    b = np.array([-trace_inner(dH, x).real for x in ic])
    return LcdLinearSystem(M, b, lam)


def solve_min_norm(M: NDArray[np.float64], b: NDArray[np.float64], cond_limit: float = COND_LIMIT) -> NDArray[np.float64]:
    """Batched solve of ``M x = b``; minimum-norm when ``cond(M) > cond_limit``.

    ``M`` has shape (L, k, k) and ``b`` shape (L, k).
    """
    L, k = b.shape
    if k == 0:
        return np.zeros((L, 0))
    out = np.zeros((L, k))
    scale = np.abs(M).max(axis=(1, 2))
    live = scale > 0
    if not np.any(live):
        return out
    Ml, bl = M[live], b[live]
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(Ml)
    good = np.isfinite(cond) & (cond <= cond_limit)
    res = np.zeros((Ml.shape[0], k))
    if np.any(good):
        res[good] = np.linalg.solve(Ml[good], bl[good][..., None])[..., 0]
    for i in np.flatnonzero(~good):
        res[i] = np.linalg.lstsq(Ml[i], bl[i], rcond=1.0 / cond_limit)[0]
    out[live] = res
    return out


class CoefficientSolver:
    """Vectorised LCD solver for ``H = sum_g h_g(lam) O_g``.

    The operator products are contracted once, so each ``lam`` costs an
    einsum plus a ``k x k`` solve.
    """

    def __init__(self, basis: Sequence[PauliSum], ansatz: Ansatz) -> None:
        self.basis = tuple(basis)
        self.ansatz = ansatz
        k, g = len(ansatz), len(self.basis)
        ic = [[1j * commutator(a, o) for o in self.basis] for a in ansatz.groups]
        self.T = np.zeros((k, k, g, g))
        self.R = np.zeros((k, g, g))
        for j in range(k):
            for m in range(k):
                for a in range(g):
                    for c in range(g):
                        self.T[j, m, a, c] = trace_inner(ic[j][a], ic[m][c]).real
            for a in range(g):
                for c in range(g):
                    self.R[j, a, c] = trace_inner(self.basis[a], ic[j][c]).real

    def system(self, values: ArrayLike, derivs: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        h = np.asarray(values, dtype=float)
        dh = np.asarray(derivs, dtype=float)
        M = np.einsum("jmac,al,cl->ljm", self.T, h, h)
        b = -np.einsum("jac,al,cl->lj", self.R, dh, h)
        return M, b

    def solve(self, values: ArrayLike, derivs: ArrayLike) -> NDArray[np.float64]:
        """Coefficients, shape (L, k), for weights of shape (G, L)."""
        M, b = self.system(values, derivs)
        return solve_min_norm(M, b)

    def action(self, values: ArrayLike, derivs: ArrayLike, coeffs: ArrayLike) -> NDArray[np.float64]:
        """Normalised action at given coefficients (shape (L, k))."""
        dh = np.asarray(derivs, dtype=float)
        h = np.asarray(values, dtype=float)
        M, b = self.system(h, dh)
        x = np.asarray(coeffs, dtype=float)
        gram = np.array([[trace_inner(p, q).real for q in self.basis] for p in self.basis])
        s0 = np.einsum("al,ac,cl->l", dh, gram, dh)
        return s0 - 2 * np.einsum("lj,lj->l", b, x) + np.einsum("lj,ljm,lm->l", x, M, x)


@dataclass(frozen=True)
class LcdSolution:
    """``lam``-resolved LCD coefficients, evaluated pointwise on demand."""

    model: SpinModel
    ansatz: Ansatz
    pulses: tuple[Pulse, ...] = ()
    solver: CoefficientSolver | None = None

    def __call__(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
        vals, ders = self.model.coefficients(lam_arr, self.pulses or None)
        solver = self.solver or CoefficientSolver(self.model.basis, self.ansatz)
        out = solver.solve(vals, ders)
        return out[0] if np.ndim(lam) == 0 else out


def solve_lcd(model: SpinModel, ansatz: Ansatz, pulses: Sequence[Pulse] | None = None,
              solver: CoefficientSolver | None = None) -> LcdSolution:
    if any(not op.is_hermitian() for op in model.basis):
        raise ValueError("solve_lcd needs a real model")
    solver = solver or CoefficientSolver(model.basis, ansatz)
    return LcdSolution(model, ansatz, tuple(pulses or ()), solver)


# closed forms -----------------------------------------------------------------

def two_spin_fo_alpha(x: ArrayLike, z: ArrayLike, j: ArrayLike, dx: ArrayLike,
                      dz: ArrayLike = 0.0) -> NDArray[np.float64]:
    """Two-spin FO coefficient ``(Z dX - X dZ) / (2 (X^2 + Z^2 + J^2))``."""
    x, z, j, dx, dz = (np.asarray(v, dtype=float) for v in (x, z, j, dx, dz))
    return 0.5 * (z * dx - x * dz) / (x**2 + z**2 + j**2)


def cold_fo_alpha_twospin(lam: ArrayLike, f: ArrayLike, df: ArrayLike,
                          j0: float = 0.5, h0: float = 1.0) -> NDArray[np.float64]:
    """FO coefficient of the two-spin model with a pulse ``f`` on ``z1 + z2``."""
    from .models import smooth_ramp, smooth_ramp_derivative

    lam = np.asarray(lam, dtype=float)
    x = 2 * h0 * smooth_ramp(lam)
    dx = 2 * h0 * smooth_ramp_derivative(lam)
    zf = -h0 + np.asarray(f, dtype=float)
    return 0.5 * (zf * dx - np.asarray(df, dtype=float) * x) / (zf**2 + x**2 + (2 * j0) ** 2)


def ising_chain_fo_alpha(x: ArrayLike, z: ArrayLike, j: ArrayLike, dx: ArrayLike, n: int) -> NDArray[np.float64]:
    x, z, j, dx = (np.asarray(v, dtype=float) for v in (x, z, j, dx))
    return 0.5 * z * dx / (x**2 + z**2 + 2 * (1 - 1 / n) * j**2)


def two_spin_coupled_system(x: float, z: float, j: float, dx: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Hand-written 3x3 stationarity system for ``(alpha, gamma, zeta)``."""
    M = np.array([
        [2 * (x**2 + z**2 + j**2), -2 * j * x, 4 * j * z],
        [-x * j, x**2 + 4 * z**2, -3 * x * z],
        [4 * j * z, -6 * z * x, 2 * j**2 + 2 * z**2 + 8 * x**2],
    ])
    b = np.array([z * dx, 0.0, j * dx])
    return M, b


# dense oracles -----------------------------------------------------------------

def exact_agp_dense(H: ArrayLike, dH: ArrayLike, gap_tol: float = GAP_TOL,
                    skip_uncoupled: bool = False) -> NDArray[np.complex128]:
    """``i sum_{m != n} |m><m|dH|n><n| / (E_n - E_m)`` with zero diagonal.

    With ``skip_uncoupled`` a degenerate pair is tolerated when its matrix
    element of ``dH`` also vanishes.
    """
    H = np.asarray(H, dtype=complex)
    dH = np.asarray(dH, dtype=complex)
    E, V = np.linalg.eigh(H)
    d = V.conj().T @ dH @ V
    gaps = E[None, :] - E[:, None]  # E_n - E_m at [m, n]
    off = ~np.eye(len(E), dtype=bool)
    tiny = off & (np.abs(gaps) < gap_tol)
    if skip_uncoupled:
        tiny &= np.abs(d) >= gap_tol
    if np.any(tiny):
        m, n = map(int, np.argwhere(tiny)[0])
        raise DegenerateSpectrumError((m, n), float(abs(gaps[m, n])))
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(off & (np.abs(gaps) >= gap_tol), 1j * d / gaps, 0.0)
    return V @ a @ V.conj().T


def dense_lcd_coefficients(H: ArrayLike, dH: ArrayLike, groups: Sequence[ArrayLike]) -> NDArray[np.float64]:
    """Brute-force minimiser of ``Tr[G^2]`` by least squares on dense matrices."""
    H = np.asarray(H, dtype=complex)
    dH = np.asarray(dH, dtype=complex)
    cols = [(1j * (np.asarray(a) @ H - H @ np.asarray(a))).ravel() for a in groups]
    A = np.stack(cols, axis=1)
    # G = dH + A x is Hermitian for real x; stack real and imaginary parts
    A_r = np.concatenate([A.real, A.imag])
    y = -np.concatenate([dH.ravel().real, dH.ravel().imag])
    return np.linalg.lstsq(A_r, y, rcond=None)[0]


def adiabatic_criterion(hamiltonians: Sequence[ArrayLike], derivatives: Sequence[ArrayLike],
                        lam_dot: float, gap_tol: float = GAP_TOL) -> float:
    """``max |lam_dot <m|dH|n> / (E_m - E_n)^2|`` over a grid and all level pairs."""
    worst = 0.0
    for H, dH in zip(hamiltonians, derivatives):
        E, V = np.linalg.eigh(np.asarray(H, dtype=complex))
        d = V.conj().T @ np.asarray(dH, dtype=complex) @ V
        for m, n in itertools.combinations(range(len(E)), 2):
            gap = E[m] - E[n]
            if abs(gap) < gap_tol:
                raise DegenerateSpectrumError((m, n), abs(gap))
            worst = max(worst, abs(lam_dot * d[m, n] / gap**2))
    return worst


# nested commutators ------------------------------------------------------------

def nested_commutator_ansatz(H: PauliSum, dH: PauliSum, order: int,
                             max_terms: int = MAX_NESTED_TERMS) -> Ansatz:
    """Groups ``i [H, [H, ... [H, dH]]]`` with ``2k - 1`` commutators, ``k = 1..order``."""
    if order < 1:
        raise ValueError("order must be at least 1")
    groups, names = [], []
    current = dH
    for depth in range(1, 2 * order):
        current = commutator(H, current)
        if len(current) > max_terms:
            raise OverflowError(f"nested commutator of depth {depth} has {len(current)} words")
        # keep the phase such that odd depths are Hermitian
        if depth % 2 == 1:
            op = 1j ** depth * current
            op = PauliSum(op.n_sites, {k: v.real for k, v in op.terms.items()})
            if op and all(op != g for g in groups):
                groups.append(op)
                names.append(f"nc_{(depth + 1) // 2}")
    return Ansatz(tuple(groups), tuple(names))


# synthetic lattice --------------------------------------------------------------

def lattice_lcd_alpha(j: ArrayLike, dj: ArrayLike, v: ArrayLike, dv: ArrayLike | None = None) -> NDArray[np.float64]:
    """Bond coefficients of the tilted-lattice LCD linear system.

    ``j``, ``dj`` have one entry per bond (N-1), ``v`` one per site (N);
    leading axes are batch axes.  The bond operator is
    ``i(|n><n+1| - |n+1><n|)``.  Without ``dv`` the right-hand side is
    ``-dJ_n (V_{n+1} - V_n)`` alone; with ``dv`` it gains the
    ``J_n d(V_{n+1} - V_n)`` term that the full variational minimum carries
    when the tilt itself is ramped.
    """
    j = np.asarray(j, dtype=float)
    dj = np.asarray(dj, dtype=float)
    v = np.asarray(v, dtype=float)
    nb = j.shape[-1]
    if dj.shape != j.shape or v.shape[-1] != nb + 1:
        raise ValueError("need N-1 bond values and N site energies")
    batch = j.shape[:-1]
    j2, dj2 = j.reshape(-1, nb), dj.reshape(-1, nb)
    gap = np.diff(v.reshape(-1, nb + 1), axis=-1)
    pad = np.zeros((j2.shape[0], 1))
    jp = np.concatenate([pad, j2, pad], axis=-1)  # jp[:, n+1] = J_n, zero out of range
    diag = jp[:, :-2] ** 2 + 4 * j2**2 + jp[:, 2:] ** 2 + gap**2
    idx = np.arange(nb)
    M = np.zeros((j2.shape[0], nb, nb))
    M[:, idx, idx] = diag
    off = -3 * j2[:, :-1] * j2[:, 1:]
    M[:, idx[:-1], idx[1:]] = off
    M[:, idx[1:], idx[:-1]] = off
    b = -dj2 * gap
    if dv is not None:
        b = b + j2 * np.diff(np.asarray(dv, dtype=float).reshape(-1, nb + 1), axis=-1)
    return solve_min_norm(M, b).reshape(batch + (nb,))
