"""Coincidence engine for partially distinguishable photons.

Each photon carries a polarization (routed by the projector) and a Gaussian
temporal wavepacket. Distinguishability enters only through the Gram matrix
``S[i, j] = mu_ij <phi_i|phi_j>``. Rates are permutation-pair sums over the
unnormalized product state ``prod_i A_i^dagger |0>``; for photons sharing a
mode this keeps the bosonic enhancement that pulsed down-conversion
produces, so rates are per emitted photon set rather than per normalized
state.

Delays and widths are micrometers of optical path (``c*T``).
"""
from dataclasses import dataclass
from itertools import product
from math import factorial, log, sqrt

import numpy as np

from . import _accel
from .errors import InvalidArgument
from .fock import ProjectorNetwork, build_projector

POLARIZATIONS = ("H", "V")
PSD_FLOOR = -1e-10
CLAMP_LIMIT = 1e-10


@dataclass(frozen=True)
class WavePacket:
    """Gaussian amplitude ``exp(-(t - center)^2 / (4 width_sigma^2))``."""

    center: float
    width_sigma: float

    def __post_init__(self):
        if not self.width_sigma > 0:
            raise InvalidArgument(f"wavepacket width must be positive, got {self.width_sigma}")


def overlap(a, b):
    """Temporal overlap ``<a|b>`` of two Gaussian packets (real, no carrier phase)."""
    sa, sb = a.width_sigma, b.width_sigma
    var = sa * sa + sb * sb
    dt = a.center - b.center
    return sqrt(2 * sa * sb / var) * np.exp(-dt * dt / (4 * var))


def overlap_matrix(centers, sigma):
    """Vectorized equal-width overlaps; ``centers`` may carry leading batch axes."""
    c = np.asarray(centers, dtype=float)
    dt = c[..., :, None] - c[..., None, :]
    return np.exp(-dt * dt / (8 * sigma * sigma))


def fwhh_to_sigma_hom(fwhh):
    """Packet width whose two-photon dip (``exp(-dt^2/4 sigma^2)``) has the given FWHH."""
    return fwhh / (4 * sqrt(log(2)))


@dataclass(frozen=True)
class Photon:
    polarization: str
    packet: WavePacket
    origin: int = 1

    def __post_init__(self):
        if self.polarization not in POLARIZATIONS:
            raise InvalidArgument(f"polarization must be H or V, got {self.polarization!r}")
        if self.origin not in (1, 2):
            raise InvalidArgument(f"origin must be crystal 1 or 2, got {self.origin}")


def spatial_mask(pols, mismatch="cross-polarization"):
    """Boolean mask of Gram entries scaled by the spatial-match factor.

    ``"cross-polarization"`` scales only H-V pairs (the photons arrive through
    different fibers); ``"all"`` scales every off-diagonal entry.
    """
    pols = list(pols)
    n = len(pols)
    if mismatch == "all":
        return ~np.eye(n, dtype=bool)
    if mismatch == "cross-polarization":
        p = np.array([POLARIZATIONS.index(x) if isinstance(x, str) else int(x) for x in pols])
        return p[:, None] != p[None, :]
    raise InvalidArgument(f"unknown mismatch scope {mismatch!r}")


@dataclass(frozen=True)
class PhotonEnsemble:
    """Photons plus their Gram matrix ``S[i, j] = mu_ij <phi_i|phi_j>``."""

    photons: tuple
    gram: np.ndarray

    def __post_init__(self):
        photons = tuple(self.photons)
        gram = np.array(self.gram, dtype=np.complex128)
        n = len(photons)
        if gram.shape != (n, n):
            raise InvalidArgument(f"Gram matrix shape {gram.shape} does not match {n} photons")
        if not np.allclose(gram, gram.conj().T, atol=1e-12, rtol=0):
            raise InvalidArgument("Gram matrix is not Hermitian")
        if not np.allclose(np.diag(gram), 1.0, atol=1e-12, rtol=0):
            raise InvalidArgument("Gram matrix must have unit diagonal")
        if np.any(np.abs(gram) > 1 + 1e-12):
            raise InvalidArgument("Gram entries must satisfy |S_ij| <= 1")
        if n and np.linalg.eigvalsh(gram).min() < PSD_FLOOR:
            raise InvalidArgument("Gram matrix is not positive semidefinite")
        gram.flags.writeable = False
        object.__setattr__(self, "photons", photons)
        object.__setattr__(self, "gram", gram)

    @classmethod
    def build(cls, photons, mu=1.0, mismatch="cross-polarization"):
        if not 0.0 <= mu <= 1.0:
            raise InvalidArgument(f"spatial match must lie in [0, 1], got {mu}")
        photons = tuple(photons)
        n = len(photons)
        gram = np.eye(n)
        for i in range(n):
            for j in range(i + 1, n):
                gram[i, j] = gram[j, i] = overlap(photons[i].packet, photons[j].packet)
        mask = spatial_mask([p.polarization for p in photons], mismatch)
        gram = np.where(mask, mu * gram, gram)
        return cls(photons, gram)

    @property
    def polarizations(self):
        return tuple(p.polarization for p in self.photons)

    def __len__(self):
        return len(self.photons)

    def permuted(self, order):
        order = list(order)
        return PhotonEnsemble(tuple(self.photons[i] for i in order), self.gram[np.ix_(order, order)])


@dataclass(frozen=True)
class DetectionPattern:
    """Multiset of 1-based detector indices, one per detected photon."""

    detectors: tuple

    def __post_init__(self):
        object.__setattr__(self, "detectors", tuple(int(d) for d in self.detectors))

    def validate(self, n_arms):
        bad = [d for d in self.detectors if not 1 <= d <= n_arms]
        if bad:
            raise InvalidArgument(f"detector indices {bad} outside 1..{n_arms}")


def _pol_index(pols):
    return [POLARIZATIONS.index(p) for p in pols]


def amplitude_matrix(transfer, pols, modes):
    """``A[k, i]``: amplitude of photon ``i`` reaching output mode ``modes[k]`` (0-based)."""
    cols = _pol_index(pols)
    return np.asarray(transfer)[np.ix_(list(modes), cols)]


def pattern_weights(net, pols, pattern, use_numba=None):
    """Permutation weights ``W(pi)`` for one detection pattern; reusable across Gram matrices."""
    amp = amplitude_matrix(net.matrix(), pols, [d - 1 for d in pattern.detectors])
    return _accel.pair_weights(amp, use_numba=use_numba)


def contract(grams, weights, use_numba=None):
    """Real rates from a Gram batch; checks and clamps roundoff (see :func:`coincidence_rate`)."""
    raw = _accel.gram_contract(grams, weights, use_numba=use_numba)
    return _clamp(raw)


def _clamp(raw):
    scale = max(1.0, float(np.max(np.abs(raw), initial=0.0)))
    if np.any(np.abs(raw.imag) > CLAMP_LIMIT * scale):
        raise ArithmeticError("permutation-pair sum has a non-negligible imaginary part")
    re = raw.real
    if np.any(re < -CLAMP_LIMIT * scale):
        raise ArithmeticError(f"permutation-pair sum is negative ({re.min():.3g})")
    return np.clip(re, 0.0, None)


def raw_coincidence_sum(ens, net, pattern, use_numba=None):
    """Unclamped complex value of the permutation-pair sum."""
    _check_sizes(ens, net, pattern)
    w = pattern_weights(net, ens.polarizations, pattern, use_numba)
    return complex(_accel.gram_contract(ens.gram, w, use_numba=use_numba)[0])


def coincidence_rate(ens, net, pattern, use_numba=None):
    """Normally-ordered N-fold moment for a detection pattern.

    ``sum_{s,t} prod_k U[d_k, pol(s(k))] conj(U[d_k, pol(t(k))]) S[t(k), s(k)]``,
    evaluated as ``sum_pi W(pi) prod_i S[pi(i), i]``. For a pattern with
    repeated detectors this is ``prod_d n_d!`` times the detection probability.
    """
    _check_sizes(ens, net, pattern)
    w = pattern_weights(net, ens.polarizations, pattern, use_numba)
    return float(contract(ens.gram, w, use_numba)[0])


def _check_sizes(ens, net, pattern):
    n = len(ens)
    if len(pattern.detectors) != n or net.n_arms != n:
        raise InvalidArgument(
            f"size mismatch: {n} photons, {len(pattern.detectors)} detections, {net.n_arms} arms")
    pattern.validate(net.n_arms)


def full_pattern(n):
    return DetectionPattern(tuple(range(1, n + 1)))


def nfold_projector_rate(ens, net, use_numba=None):
    """One photon in each of the N arms."""
    return coincidence_rate(ens, net, full_pattern(net.n_arms), use_numba)


def inclusive_weights(net, pols, j, k, use_numba=None):
    """Summed permutation weights for 'arms j and k both fire', over all completions.

    Output modes are the N detectors and N loss ports. Every ordered
    assignment of photons to modes that hits both ``j`` and ``k`` contributes
    its N-fold moment with weight ``1/n!``; each multiset pattern appears
    ``n!/prod n_m!`` times, which cancels the moment's ``prod n_m!``.
    """
    if j == k:
        raise InvalidArgument("two-fold rate needs two distinct arms")
    for a in (j, k):
        if not 1 <= a <= net.n_arms:
            raise InvalidArgument(f"arm {a} outside 1..{net.n_arms}")
    transfer = net.matrix(include_loss=True)
    n = len(pols)
    if n < 2:
        raise InvalidArgument("two-fold rate needs at least two photons")
    total = np.zeros(factorial(n), dtype=np.complex128)
    for modes in product(range(transfer.shape[0]), repeat=n):
        if (j - 1) in modes and (k - 1) in modes:
            amp = amplitude_matrix(transfer, pols, modes)
            total += _accel.pair_weights(amp, use_numba=use_numba)
    return total / factorial(n)


def two_fold_inclusive_rate(ens, net, j, k, use_numba=None):
    """Probability that arms ``j`` and ``k`` each register at least one photon."""
    w = inclusive_weights(net, ens.polarizations, j, k, use_numba)
    return float(contract(ens.gram, w, use_numba)[0])


def _hv_pair(overlap_value, mu, mismatch="cross-polarization"):
    packet = WavePacket(0.0, 1.0)
    photons = (Photon("H", packet, 2), Photon("V", packet, 2))
    mask = spatial_mask(("H", "V"), mismatch)
    gram = np.array([[1.0, overlap_value], [overlap_value, 1.0]])
    return PhotonEnsemble(photons, np.where(mask, mu * gram, gram))


def two_fold_visibility(mu, net=None, arms=(1, 2)):
    """Two-fold dip visibility of one H and one V photon through the projector."""
    net = net or build_projector(3)
    j, k = arms
    far = two_fold_inclusive_rate(_hv_pair(0.0, mu), net, j, k)
    dip = two_fold_inclusive_rate(_hv_pair(1.0, mu), net, j, k)
    return 1.0 - dip / far


def spatial_match_calibration(mu, net=None):
    """Reduction factor beta: two-fold visibility at spatial match ``mu`` over its ideal value."""
    if not 0.0 <= mu <= 1.0:
        raise InvalidArgument(f"spatial match must lie in [0, 1], got {mu}")
    net = net or build_projector(3)
    return two_fold_visibility(mu, net) / two_fold_visibility(1.0, net)


def mu_for_beta(beta, net=None, tol=1e-12):
    """Invert :func:`spatial_match_calibration` by bisection."""
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgument(f"beta must lie in [0, 1], got {beta}")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if spatial_match_calibration(mid, net) < beta:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
