"""Control waveforms on the normalised protocol axis ``lam`` in [0, 1].

Every pulse is linear in its coefficient vector and vanishes at both ends of
the protocol, so adding it never changes the initial or final Hamiltonian.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline

DEFAULT_KAPPA = 30.0
_DOMAIN_TOL = 1e-12


def _check_domain(lam: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(lam, dtype=float)
    if np.any(arr < -_DOMAIN_TOL) or np.any(arr > 1 + _DOMAIN_TOL):
        raise ValueError("pulse evaluated outside lam in [0, 1]")
    return arr


def _as_coeffs(values: ArrayLike) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(np.asarray(values, dtype=float)))


class Pulse(ABC):
    """A waveform ``f(lam)`` with an analytic or spline derivative."""

    coeffs: tuple[float, ...]

    @property
    def n_params(self) -> int:
        return len(self.coeffs)

    @abstractmethod
    def value(self, lam: ArrayLike) -> NDArray[np.float64]: ...

    @abstractmethod
    def derivative(self, lam: ArrayLike) -> NDArray[np.float64]: ...

    def with_coeffs(self, coeffs: ArrayLike) -> Pulse:
        new = _as_coeffs(coeffs)
        if len(new) != self.n_params:
            raise ValueError(f"expected {self.n_params} coefficients, got {len(new)}")
        return replace(self, coeffs=new)

    def __call__(self, lam: ArrayLike) -> NDArray[np.float64]:
        return self.value(lam)


def _pin_ends(lam: NDArray[np.float64], out: NDArray[np.float64]) -> NDArray[np.float64]:
    # sin(k*pi) is ~1e-16, not zero; the boundary constraint is exact
    out = np.where((lam == 0.0) | (lam == 1.0), 0.0, out)
    return out


@dataclass(frozen=True)
class BarePulse(Pulse):
    """Fourier sine series ``sum_k c_k sin(w k lam)``.

    ``mode="full"`` uses ``w = 2 pi``; ``mode="half"`` uses ``w = pi``.
    """

    coeffs: tuple[float, ...]
    mode: Literal["full", "half"] = "full"

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))
        if self.mode not in ("full", "half"):
            raise ValueError(f"unknown frequency mode {self.mode!r}")

    @property
    def _omega(self) -> NDArray[np.float64]:
        base = 2 * np.pi if self.mode == "full" else np.pi
        return base * np.arange(1, self.n_params + 1)

    def value(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = _check_domain(lam)
        c = np.asarray(self.coeffs)
        out = np.sin(np.multiply.outer(lam, self._omega)) @ c
        return _pin_ends(lam, out)

    def derivative(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = _check_domain(lam)
        w = self._omega
        return np.cos(np.multiply.outer(lam, w)) @ (np.asarray(self.coeffs) * w)


@dataclass(frozen=True)
class CrabPulse(Pulse):
    """Sine series with randomised frequencies ``2 pi k (1 + r_k)``.

    A shifted frequency leaves ``sin`` nonzero at ``lam = 1``; the linear
    term ``lam * sin(w_k)`` is subtracted to close the pulse there.
    """

    coeffs: tuple[float, ...]
    offsets: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))
        offsets = self.offsets or (0.0,) * len(self.coeffs)
        object.__setattr__(self, "offsets", _as_coeffs(offsets))
        if len(self.offsets) != len(self.coeffs):
            raise ValueError("one frequency offset per coefficient is required")

    @property
    def _omega(self) -> NDArray[np.float64]:
        k = np.arange(1, self.n_params + 1)
        return 2 * np.pi * k * (1 + np.asarray(self.offsets))

    def value(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = _check_domain(lam)
        w = self._omega
        basis = np.sin(np.multiply.outer(lam, w)) - np.multiply.outer(lam, np.sin(w))
        return _pin_ends(lam, basis @ np.asarray(self.coeffs))

    def derivative(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = _check_domain(lam)
        w = self._omega
        basis = np.cos(np.multiply.outer(lam, w)) * w - np.sin(w)
        return basis @ np.asarray(self.coeffs)


def randomize_crab(template: BarePulse | CrabPulse, seed: int | np.random.SeedSequence) -> CrabPulse:
    """Draw ``r_k ~ U[-0.5, 0.5]`` deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-0.5, 0.5, size=template.n_params)
    return CrabPulse(template.coeffs, tuple(offsets))


def _theta(lam: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.sin(0.5 * np.pi * lam)


def shape(lam: ArrayLike, kappa: float = DEFAULT_KAPPA) -> NDArray[np.float64]:
    """Envelope ``tanh(kappa theta(lam)) tanh(-kappa theta(lam - 1))``."""
    lam = np.asarray(lam, dtype=float)
    return np.tanh(kappa * _theta(lam)) * np.tanh(-kappa * _theta(lam - 1.0))


def shape_derivative(lam: ArrayLike, kappa: float = DEFAULT_KAPPA) -> NDArray[np.float64]:
    lam = np.asarray(lam, dtype=float)
    dtheta = lambda x: 0.5 * np.pi * np.cos(0.5 * np.pi * x)  # noqa: E731
    a = np.tanh(kappa * _theta(lam))
    b = np.tanh(-kappa * _theta(lam - 1.0))
    da = kappa * dtheta(lam) * (1 - a**2)
    db = -kappa * dtheta(lam - 1.0) * (1 - b**2)
    return da * b + a * db


@dataclass(frozen=True)
class GrapePulse(Pulse):
    """Piecewise slice amplitudes, splined and multiplied by the envelope.

    The amplitudes ``c_k`` sit at the slice midpoints ``(k - 1/2)/N_k``.  A
    natural cubic spline through them (linear beyond the outer midpoints)
    times :func:`shape` is the waveform, so the derivative is analytic.
    """

    coeffs: tuple[float, ...]
    kappa: float = DEFAULT_KAPPA
    _spline: CubicSpline | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", _as_coeffs(self.coeffs))
        if self.n_params >= 2:
            spline = CubicSpline(self.knots, np.asarray(self.coeffs), bc_type="natural")
            object.__setattr__(self, "_spline", spline)

    @property
    def knots(self) -> NDArray[np.float64]:
        return (np.arange(self.n_params) + 0.5) / self.n_params

    def amplitude(self, lam: ArrayLike) -> NDArray[np.float64]:
        """Splined slice amplitudes before the envelope is applied."""
        lam = np.asarray(lam, dtype=float)
        if self._spline is None:
            return np.full(lam.shape, self.coeffs[0])
        lo, hi = self.knots[0], self.knots[-1]
        s = self._spline
        inner = s(np.clip(lam, lo, hi))
        below = s(lo) + s(lo, 1) * (lam - lo)
        above = s(hi) + s(hi, 1) * (lam - hi)
        return np.where(lam < lo, below, np.where(lam > hi, above, inner))

    def amplitude_derivative(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = np.asarray(lam, dtype=float)
        if self._spline is None:
            return np.zeros(lam.shape)
        lo, hi = self.knots[0], self.knots[-1]
        return self._spline(np.clip(lam, lo, hi), 1)

    def value(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = _check_domain(lam)
        return shape(lam, self.kappa) * self.amplitude(lam)

    def derivative(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = _check_domain(lam)
        return (shape_derivative(lam, self.kappa) * self.amplitude(lam)
                + shape(lam, self.kappa) * self.amplitude_derivative(lam))


def zero_like(pulse: Pulse) -> Pulse:
    return pulse.with_coeffs(np.zeros(pulse.n_params))


def split_params(pulses: tuple[Pulse, ...] | list[Pulse], params: ArrayLike) -> list[Pulse]:
    """Distribute a flat parameter vector over several pulse slots."""
    params = np.atleast_1d(np.asarray(params, dtype=float))
    need = sum(p.n_params for p in pulses)
    if params.size != need:
        raise ValueError(f"expected {need} pulse parameters, got {params.size}")
    out, start = [], 0
    for p in pulses:
        out.append(p.with_coeffs(params[start:start + p.n_params]))
        start += p.n_params
    return out


def pulse_from_spec(kind: str, n_k: int, *, mode: str = "full", kappa: float = DEFAULT_KAPPA,
                    seed: int | None = None) -> Pulse:
    """Zero-amplitude pulse template from a config-style description."""
    zeros = (0.0,) * n_k
    if n_k < 1:
        raise ValueError("a pulse needs at least one coefficient")
    if kind == "bare":
        return BarePulse(zeros, mode=mode)  # type: ignore[arg-type]
    if kind == "crab":
        return randomize_crab(BarePulse(zeros), 0 if seed is None else seed)
    if kind == "grape":
        return GrapePulse(zeros, kappa=kappa)
    raise ValueError(f"unknown pulse kind {kind!r}")
