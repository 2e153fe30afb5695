"""Single-temporal-mode Fock algebra for the N-arm NOON-state projector.

Two-mode states are stored over the basis ``|k>_H |N-k>_V`` (index ``k``).
The NOON state is fixed as ``(|N,0> - |0,N>)/sqrt(2)``.

Rates are absolute normally-ordered moments: the vacuum inputs of the beam
splitters annihilate on the vacuum and are dropped.
"""
from dataclasses import dataclass
from math import factorial, sqrt

import numpy as np

from .errors import InvalidArgument

NORM_TOL = 1e-12
UNNORMALIZED_TOL = 1e-9


def _frozen(arr):
    arr = np.array(arr, dtype=np.complex128)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FockStateHV:
    """Pure N-photon state ``sum_k c_k |k>_H |N-k>_V``."""

    n_total: int
    amps: np.ndarray

    def __post_init__(self):
        if int(self.n_total) < 1:
            raise InvalidArgument(f"photon number must be positive, got {self.n_total}")
        amps = _frozen(self.amps)
        if amps.shape != (self.n_total + 1,):
            raise InvalidArgument(f"expected {self.n_total + 1} amplitudes, got shape {amps.shape}")
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amps(cls, amps, normalize=True):
        amps = np.asarray(amps, dtype=np.complex128)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm == 0:
                raise InvalidArgument("zero state cannot be normalized")
            amps = amps / norm
        return cls(len(amps) - 1, amps)

    @classmethod
    def basis(cls, n_h, n_v):
        """Number state ``|n_h>_H |n_v>_V``."""
        amps = np.zeros(n_h + n_v + 1, dtype=np.complex128)
        amps[n_h] = 1.0
        return cls(n_h + n_v, amps)

    @classmethod
    def noon(cls, n, sign=-1):
        """``(|n,0> + sign |0,n>)/sqrt(2)``; the default sign gives the projector's NOON state."""
        amps = np.zeros(n + 1, dtype=np.complex128)
        amps[n] = 1 / sqrt(2)
        amps[0] = sign / sqrt(2)
        return cls(n, amps)

    @property
    def norm(self):
        return float(np.linalg.norm(self.amps))

    def is_normalized(self, tol=NORM_TOL):
        return abs(self.norm ** 2 - 1.0) <= tol

    def phase_shifted(self, delta):
        """Apply a relative H/V phase ``delta``: ``|k,N-k> -> e^{i k delta} |k,N-k>``."""
        k = np.arange(self.n_total + 1)
        return FockStateHV(self.n_total, self.amps * np.exp(1j * k * delta))


@dataclass(frozen=True)
class ProjectorNetwork:
    """Detector-mode amplitudes of the N-arm projector.

    ``amp_h[k]`` and ``amp_v[k]`` are the coefficients of ``a_H`` and ``a_V``
    in the field reaching detector ``k+1``. The rejected polarization of each
    arm is the orthogonal loss mode, see :meth:`loss_amplitudes`.
    """

    n_arms: int
    amp_h: np.ndarray
    amp_v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "amp_h", _frozen(self.amp_h))
        object.__setattr__(self, "amp_v", _frozen(self.amp_v))
        if self.amp_h.shape != (self.n_arms,) or self.amp_v.shape != (self.n_arms,):
            raise InvalidArgument("amplitude arrays must have one entry per arm")

    @property
    def phases(self):
        """Wave-plate phase of each arm, ``2 pi (k-1)/N``."""
        return 2 * np.pi * np.arange(self.n_arms) / self.n_arms

    def matrix(self, include_loss=False):
        """Single-photon transfer matrix, columns ``(H, V)``.

        Rows ``0..N-1`` are the detectors. With ``include_loss`` rows
        ``N..2N-1`` are the polarizer-rejected loss modes of each arm; the
        full ``(2N, 2)`` matrix is then an isometry.
        """
        det = np.stack([self.amp_h, self.amp_v], axis=1)
        if not include_loss:
            return det
        return np.vstack([det, self.loss_amplitudes()])

    def loss_amplitudes(self):
        # 45-degree port of each arm's polarizer: (a_H + e^{i delta} a_V)/sqrt(2N)
        return np.stack([self.amp_h, -self.amp_v], axis=1)


def build_projector(n):
    """Return the N-arm network: ``b_k = (a_H - a_V e^{i delta_k})/sqrt(2N)``."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"projector needs n >= 2 arms, got {n}")
    n = int(n)
    scale = 1 / sqrt(2 * n)
    delta = 2 * np.pi * np.arange(n) / n
    amp_h = np.full(n, scale, dtype=np.complex128)
    amp_v = -np.exp(1j * delta) * scale
    return ProjectorNetwork(n, amp_h, amp_v)


def product_identity_residual(n):
    """Max-norm gap between ``prod_k (x - y e^{i delta_k})/sqrt(2N)`` and ``(x^N - y^N)/(2N)^{N/2}``.

    Polynomials are homogeneous of degree ``n``; coefficient ``j`` multiplies
    ``x^{n-j} y^j``.
    """
    net = build_projector(n)
    poly = np.array([1.0 + 0j])
    for h, v in zip(net.amp_h, net.amp_v):
        poly = np.convolve(poly, [h, v])
    target = np.zeros(n + 1, dtype=np.complex128)
    target[0] = (2 * n) ** (-n / 2)
    target[n] = -(2 * n) ** (-n / 2)
    return float(np.max(np.abs(poly - target)))


def apply_detector(amps, h, v):
    """Apply ``h a_H + v a_V`` to a two-mode state over ``|k>_H |m-k>_V``."""
    m = len(amps) - 1
    if m == 0:
        return np.zeros(0, dtype=np.complex128)
    k = np.arange(m)
    # a_H lowers k+1 -> k; a_V lowers the V count at fixed k
    return h * np.sqrt(k + 1) * amps[1:] + v * np.sqrt(m - k) * amps[:-1]


def n_fold_rate(state, net):
    """``<prod b^dagger prod b>`` by direct Fock-basis expansion."""
    if state.n_total != net.n_arms:
        raise InvalidArgument(
            f"state has {state.n_total} photons but network has {net.n_arms} arms")
    amps = state.amps
    for h, v in zip(net.amp_h, net.amp_v):
        amps = apply_detector(amps, h, v)
    return float(abs(amps[0]) ** 2)


def noon_overlap(state):
    """``<Phi_N | NOON>`` for the minus-sign NOON state."""
    return (np.conj(state.amps[-1]) - np.conj(state.amps[0])) / sqrt(2)


def noon_projection_rate(state):
    """``2 N! |<Phi_N|NOON>|^2 / (2N)^N`` for a normalized state."""
    if abs(state.norm ** 2 - 1.0) > UNNORMALIZED_TOL:
        raise InvalidArgument(f"state is not normalized (|psi|^2 = {state.norm ** 2:.12g})")
    n = state.n_total
    return float(2 * factorial(n) * abs(noon_overlap(state)) ** 2 / (2 * n) ** n)


@dataclass(frozen=True)
class FringeModel:
    """Parameters of the N-photon de Broglie fringe."""

    c0: complex
    cN: complex
    delta0: float
    n: int

    @classmethod
    def from_state(cls, state):
        c0 = complex(state.amps[0])
        cN = complex(state.amps[-1])
        delta0 = float(np.angle(cN) - np.angle(c0)) if c0 and cN else 0.0
        return cls(c0, cN, delta0, state.n_total)

    @classmethod
    def from_amplitudes(cls, c0, cN, n):
        delta0 = float(np.angle(cN) - np.angle(c0)) if c0 and cN else 0.0
        return cls(complex(c0), complex(cN), delta0, int(n))


def fringe_scan(model, deltas):
    """``|c0|^2 + |cN|^2 - 2|c0 cN| cos(N delta + delta0)`` at each phase."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        raise InvalidArgument("fringe scan needs at least one phase")
    a0, aN = abs(model.c0), abs(model.cN)
    y = a0 ** 2 + aN ** 2 - 2 * a0 * aN * np.cos(model.n * deltas + model.delta0)
    # |a0 - aN|^2 >= 0 bounds the minimum; only roundoff can go negative
    return np.clip(y, 0.0, None)
