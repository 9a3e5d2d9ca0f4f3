"""Hand-expanded LCD equations for an Ising graph.

``H = sum_{i<j} J_ij z_i z_j + sum_i (X_i x_i + Z_i z_i)`` with the local
ansatz of :func:`cold.lcd.graph_ansatz`.  Every commutator ``i[A, H]`` is
written out by hand as a table of Pauli words, so this module shares no
code with the generic Pauli-algebra solver and serves as its regression
oracle.

Unknowns are ordered ``alpha_i`` (``y_i``), then ``mu_pc`` (``x_p y_c``),
then ``eta_pc`` (``z_p y_c``), pairs ``(p, c)`` running over ``p != c``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .models import SpinModel

Word = tuple[tuple[int, str], ...]


def _word(*letters: tuple[int, str]) -> Word:
    return tuple(sorted(letters))


@dataclass(frozen=True)
class GraphFields:
    """Couplings and fields of an Ising graph and their ``lam``-derivatives."""

    J: NDArray[np.float64]
    X: NDArray[np.float64]
    Z: NDArray[np.float64]
    dJ: NDArray[np.float64]
    dX: NDArray[np.float64]
    dZ: NDArray[np.float64]

    @property
    def n_sites(self) -> int:
        return self.X.size

    @classmethod
    def from_arrays(cls, J: ArrayLike, X: ArrayLike, Z: ArrayLike, dJ: ArrayLike | None = None,
                    dX: ArrayLike | None = None, dZ: ArrayLike | None = None) -> GraphFields:
        J = np.asarray(J, dtype=float)
        X = np.asarray(X, dtype=float)
        Z = np.asarray(Z, dtype=float)
        zero_j, zero_f = np.zeros_like(J), np.zeros_like(X)
        dJ = zero_j if dJ is None else np.asarray(dJ, dtype=float)
        dX = zero_f if dX is None else np.asarray(dX, dtype=float)
        dZ = zero_f if dZ is None else np.asarray(dZ, dtype=float)
        for m in (J, dJ):
            if not np.allclose(m, m.T) or np.any(np.diag(m) != 0):
                raise ValueError("couplings must be symmetric with zero diagonal")
        return cls(J, X, Z, dJ, dX, dZ)


def fields_from_model(model: SpinModel, lam: float) -> GraphFields:
    """Read couplings and fields off an :func:`cold.models.ising_graph` model."""
    n = model.n_sites
    vals, ders = model.coefficients([lam])
    J, dJ = np.zeros((n, n)), np.zeros((n, n))
    X, dX, Z, dZ = (np.zeros(n) for _ in range(4))
    for op, v, d in zip(model.basis, vals[:, 0], ders[:, 0]):
        ((word, _),) = op.items()
        sites = [(k, ch) for k, ch in enumerate(word.label) if ch != "I"]
        if len(sites) == 2:
            (i, _), (j, _) = sites
            J[i, j] = J[j, i] = v
            dJ[i, j] = dJ[j, i] = d
        elif sites[0][1] == "X":
            X[sites[0][0]], dX[sites[0][0]] = v, d
        else:
            Z[sites[0][0]], dZ[sites[0][0]] = v, d
    return GraphFields(J, X, Z, dJ, dX, dZ)


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    return [(p, c) for p in range(n) for c in range(n) if p != c]


def g_expansion(fields: GraphFields, second_order: bool = True) -> tuple[dict[Word, NDArray[np.float64]], dict[Word, float]]:
    """Linear map from the unknowns to the Pauli coefficients of ``G``.

    Returns ``(rows, offset)``: ``G_w = rows[w] @ unknowns + offset[w]``.
    """
    f = fields
    n = f.n_sites
    pairs = ordered_pairs(n) if second_order else []
    k = n + 2 * len(pairs)
    rows: dict[Word, NDArray[np.float64]] = defaultdict(lambda: np.zeros(k))
    offset: dict[Word, float] = defaultdict(float)

    for i in range(n):
        offset[_word((i, "X"))] += f.dX[i]
        offset[_word((i, "Z"))] += f.dZ[i]
        for j in range(i + 1, n):
            if f.dJ[i, j]:
                offset[_word((i, "Z"), (j, "Z"))] += f.dJ[i, j]

    # i[y_i, H]
    for i in range(n):
        rows[_word((i, "Z"))][i] += 2 * f.X[i]
        rows[_word((i, "X"))][i] += -2 * f.Z[i]
        for j in range(n):
            if j != i and f.J[i, j]:
                rows[_word((i, "X"), (j, "Z"))][i] += -2 * f.J[i, j]

    for idx, (p, c) in enumerate(pairs):
        mu, eta = n + idx, n + len(pairs) + idx
        # i[x_p y_c, H]
        rows[_word((p, "Y"), (c, "Y"))][mu] += 2 * f.Z[p]
        rows[_word((p, "X"), (c, "Z"))][mu] += 2 * f.X[c]
        rows[_word((p, "X"), (c, "X"))][mu] += -2 * f.Z[c]
        # i[z_p y_c, H]
        rows[_word((p, "Y"), (c, "Y"))][eta] += -2 * f.X[p]
        rows[_word((p, "Z"), (c, "Z"))][eta] += 2 * f.X[c]
        rows[_word((p, "Z"), (c, "X"))][eta] += -2 * f.Z[c]
        rows[_word((c, "X"))][eta] += -2 * f.J[p, c]
        for q in range(n):
            if q in (p, c):
                continue
            if f.J[p, q]:
                rows[_word((p, "Y"), (c, "Y"), (q, "Z"))][mu] += 2 * f.J[p, q]
            if f.J[c, q]:
                rows[_word((p, "X"), (c, "X"), (q, "Z"))][mu] += -2 * f.J[c, q]
                rows[_word((p, "Z"), (c, "X"), (q, "Z"))][eta] += -2 * f.J[c, q]
    return dict(rows), dict(offset)


def normal_equations(fields: GraphFields, second_order: bool = True) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Stationarity of ``sum_w G_w^2`` as ``M x = b``."""
    rows, offset = g_expansion(fields, second_order)
    n = fields.n_sites
    k = n + (2 * n * (n - 1) if second_order else 0)
    words = sorted(set(rows) | set(offset))
    A = np.array([rows.get(w, np.zeros(k)) for w in words])
    g0 = np.array([offset.get(w, 0.0) for w in words])
    return A.T @ A, -A.T @ g0


def solve(fields: GraphFields, second_order: bool = True) -> NDArray[np.float64]:
    M, b = normal_equations(fields, second_order)
    return np.linalg.lstsq(M, b, rcond=1e-12)[0]
