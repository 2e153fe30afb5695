"""Two-crystal pulsed down-conversion source feeding the three-photon projector.

Crystal 1 emits (H1, V1): V1 is the trigger at detector D, H1 is injected
into crystal 2's H mode. Crystal 2 emits (H2, V2). The projector sees
H1 at ``t_h + tau1``, H2 at ``tau2`` and V2 at ``t_v + tau2``, where
``tau1, tau2`` are per-pair timing offsets drawn from ``Normal(0, jitter_s^2)``.
Shared jitter inside a pair and independent jitter between pairs is what
makes the two pairs partially distinguishable (E/A < 1).

Monte Carlo uses common random numbers: one block of standard normals per
seed, reused at every delay, so scan curves are smooth in ``t_v`` and in
``jitter_s``, and serial and threaded evaluation give identical values.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import temporal
from .analysis import ScanCurve, fit_dips, infer_ea_wings, wings_mask
from .errors import InvalidArgument, UnstableEstimate
from .fock import build_projector
from .temporal import Photon, PhotonEnsemble, WavePacket

log = logging.getLogger(__name__)

UM_PER_FS = 0.299792458
ARM_LABELS = "ABC"
TRIPLE_POLS = ("H", "H", "V")
PAIR_POLS = ("H", "V")


@dataclass(frozen=True)
class SourceConfig:
    sigma: float = 52.0
    jitter_s: float = 0.0
    mu_spatial: float = 1.0
    t_h: float = 0.0
    t_v: float = 0.0
    mc_samples: int = 20000
    seed: int = 20070101
    mismatch: str = "cross-polarization"

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma}")
        if not self.jitter_s >= 0:
            raise InvalidArgument(f"jitter_s must be >= 0, got {self.jitter_s}")
        if not 0.0 <= self.mu_spatial <= 1.0:
            raise InvalidArgument(f"mu_spatial must lie in [0, 1], got {self.mu_spatial}")
        if int(self.mc_samples) != self.mc_samples or self.mc_samples < 1:
            raise InvalidArgument(f"mc_samples must be a positive integer, got {self.mc_samples}")
        if self.mismatch not in ("cross-polarization", "all"):
            raise InvalidArgument(f"unknown mismatch scope {self.mismatch!r}")

    def scaled(self, factor):
        """Rescale every length (width, jitter, delays) by ``factor``."""
        return replace(self, sigma=self.sigma * factor, jitter_s=self.jitter_s * factor,
                       t_h=self.t_h * factor, t_v=self.t_v * factor)


@dataclass(frozen=True)
class GatedEvent:
    pair1_offset: float
    pair2_offset: float
    ensemble: PhotonEnsemble
    trigger: Photon


@dataclass(frozen=True)
class RateEstimate:
    value: float
    stderr: float


@dataclass(frozen=True)
class EAEstimate:
    value: float
    method: str
    stderr: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise InvalidArgument(f"E/A must lie in [0, 1], got {self.value}")
        if self.method not in ("wings", "dip2", "v3"):
            raise InvalidArgument(f"unknown E/A method {self.method!r}")


@dataclass(frozen=True)
class TVScan:
    """Result of a ``t_v`` scan: gated four-fold, its 2x2 accidental estimate, two-folds."""

    fourfold: ScanCurve
    accidental: ScanCurve
    two_fold: dict
    samples: np.ndarray = None


def build_event(cfg, tau1, tau2):
    """Gated event for given per-pair offsets; the trigger's offset stays out of the Gram matrix."""
    packet = lambda t: WavePacket(float(t), cfg.sigma)  # noqa: E731
    photons = (
        Photon("H", packet(cfg.t_h + tau1), 1),
        Photon("H", packet(tau2), 2),
        Photon("V", packet(cfg.t_v + tau2), 2),
    )
    ens = PhotonEnsemble.build(photons, cfg.mu_spatial, cfg.mismatch)
    return GatedEvent(float(tau1), float(tau2), ens, Photon("V", packet(tau1), 1))


def standard_offsets(cfg):
    """Standard-normal block ``(mc_samples, 2)`` for (crystal 1, crystal 2); seed-determined."""
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed) & (2 ** 64 - 1)))
    return rng.standard_normal((int(cfg.mc_samples), 2))


def sample_offsets(cfg):
    """Per-event pair offsets; a single zero row when there is no jitter."""
    if cfg.jitter_s == 0:
        return np.zeros((1, 2))
    return cfg.jitter_s * standard_offsets(cfg)


def triple_grams(cfg, offsets, t_v):
    """Gram batch ``(B, 3, 3)`` for photons (H1, H2, V2) at one ``t_v``."""
    tau1, tau2 = offsets[:, 0], offsets[:, 1]
    centers = np.stack([cfg.t_h + tau1, tau2, t_v + tau2], axis=1)
    gram = temporal.overlap_matrix(centers, cfg.sigma)
    mask = temporal.spatial_mask(TRIPLE_POLS, cfg.mismatch)
    return np.where(mask, cfg.mu_spatial * gram, gram)


class _Kernels:
    """Network weights reused for every point of a scan."""

    def __init__(self):
        net = build_projector(3)
        self.net = net
        self.nfold = temporal.pattern_weights(net, TRIPLE_POLS, temporal.full_pattern(3))
        self.pair = {
            a + b: temporal.inclusive_weights(net, PAIR_POLS, j + 1, k + 1)
            for (j, a), (k, b) in _arm_pairs()
        }
        self.single_h = np.abs(net.matrix()[:, 0]) ** 2


def _arm_pairs():
    labels = list(enumerate(ARM_LABELS))
    return [(labels[j], labels[k]) for j in range(3) for k in range(j + 1, 3)]


_KERNELS = None


def _kernels():
    global _KERNELS
    if _KERNELS is None:
        _KERNELS = _Kernels()
    return _KERNELS


def fourfold_samples(cfg, t_v, offsets=None):
    """Per-event gated four-fold rates at one delay."""
    if offsets is None:
        offsets = sample_offsets(cfg)
    grams = triple_grams(cfg, offsets, t_v)
    return temporal.contract(grams, _kernels().nfold)


def _estimate(samples):
    n = samples.size
    se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return RateEstimate(float(np.mean(samples)), se)


def fourfold_rate(cfg):
    """Gated four-fold rate at ``cfg.t_v`` averaged over pair jitter, with standard error."""
    return _estimate(fourfold_samples(cfg, cfg.t_v))


def pair_two_fold(cfg, t_v):
    """Two-fold rates of the crystal-2 pair (H2, V2) for arm pairs AB, AC, BC."""
    gram = np.eye(2)
    gram[0, 1] = gram[1, 0] = cfg.mu_spatial * np.exp(-t_v * t_v / (8 * cfg.sigma ** 2))
    return {k: float(temporal.contract(gram, w)[0]) for k, w in _kernels().pair.items()}


def gate_two_fold():
    """Two-fold rates between projector arm and gate D: H1 reaches the arm, V1 always fires D."""
    p = _kernels().single_h
    return {a + "D": float(p[i]) for i, a in enumerate(ARM_LABELS)}


def accidental_fourfold(rates, r0=1.0):
    """Four-fold rate assuming independent pairs: ``(R_AB R_CD + R_AC R_BD + R_AD R_BC) / R_0``."""
    if not r0 > 0:
        raise InvalidArgument(f"repetition rate must be positive, got {r0}")
    keys = ("AB", "CD", "AC", "BD", "AD", "BC")
    missing = [k for k in keys if k not in rates]
    if missing:
        raise InvalidArgument(f"missing two-fold rates {missing}")
    if any(rates[k] < 0 for k in keys):
        raise InvalidArgument("two-fold rates must be nonnegative")
    r = rates
    return (r["AB"] * r["CD"] + r["AC"] * r["BD"] + r["AD"] * r["BC"]) / r0


def scan_tv(cfg, tv_grid, workers=None, keep_samples=False):
    """Scan the V-photon delay.

    Returns the gated four-fold curve (with Monte Carlo standard errors), the
    accidental 2x2 estimate and the three pair two-fold curves. ``workers``
    evaluates grid points on a thread pool; values do not depend on it.
    """
    grid = np.asarray(tv_grid, dtype=float)
    if grid.size == 0:
        raise InvalidArgument("scan grid is empty")
    offsets = sample_offsets(cfg)
    _kernels()

    def point(tv):
        samples = fourfold_samples(cfg, tv, offsets)
        pair = pair_two_fold(cfg, tv)
        rates = {**pair, **gate_two_fold()}
        return samples, pair, accidental_fourfold(rates)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(point, grid))
    else:
        results = [point(tv) for tv in grid]

    est = [_estimate(s) for s, _, _ in results]
    fourfold = ScanCurve(grid, [e.value for e in est], [e.stderr for e in est])
    accidental = ScanCurve(grid, [acc for _, _, acc in results], np.zeros(grid.size))
    two_fold = {k: ScanCurve(grid, [p[k] for _, p, _ in results], np.zeros(grid.size))
                for k in results[0][1]}
    samples = np.stack([s for s, _, _ in results], axis=0) if keep_samples else None
    return TVScan(fourfold, accidental, two_fold, samples)


def default_ea_grid(cfg):
    """``t_v`` grid for the wings estimate: +-12 sigma in steps of sigma/2."""
    return cfg.sigma * np.arange(-24, 25) / 2.0


def effective_ea(cfg, tv_grid=None, max_se=0.01):
    """E/A from the wings ratio of a ``t_h = 0`` scan.

    Raises :class:`UnstableEstimate` when the Monte Carlo standard error of
    the wings mean exceeds ``max_se``.
    """
    cfg0 = replace(cfg, t_h=0.0)
    grid = default_ea_grid(cfg0) if tv_grid is None else np.asarray(tv_grid, dtype=float)
    scan = scan_tv(cfg0, grid, keep_samples=True)
    fit = fit_dips(scan.fourfold, 1)
    value = infer_ea_wings(scan.fourfold, scan.accidental, fit=fit)
    mask = wings_mask(grid, fit)
    per_event = np.mean(scan.samples[mask] / scan.accidental.y[mask][:, None], axis=0)
    n = per_event.size
    if n > 1:
        se = float(np.std(per_event, ddof=1) / np.sqrt(n))
    elif cfg.jitter_s == 0:
        se = 0.0
    else:
        se = float("inf")
    if se > max_se:
        raise UnstableEstimate(
            f"wings E/A = {value:.4f} has standard error {se:.3g} > {max_se}; increase mc_samples",
            value=value, stderr=se)
    return EAEstimate(float(min(max(value, 0.0), 1.0)), "wings", se)


def calibrate_jitter(cfg, target_ea, tol=1e-5, max_se=0.01):
    """Jitter (same units as sigma) whose wings E/A equals ``target_ea``; bisection."""
    if not 0.0 < target_ea <= 1.0:
        raise InvalidArgument(f"target E/A must lie in (0, 1], got {target_ea}")
    ea = lambda j: effective_ea(replace(cfg, jitter_s=j), max_se=max_se).value  # noqa: E731
    if target_ea >= ea(0.0):
        return 0.0
    lo, hi = 0.0, cfg.sigma
    while ea(hi) > target_ea:
        lo, hi = hi, 2 * hi
        if hi > 1e3 * cfg.sigma:
            raise InvalidArgument(f"cannot reach E/A = {target_ea} with the jitter model")
    while hi - lo > tol * cfg.sigma:
        mid = 0.5 * (lo + hi)
        if ea(mid) > target_ea:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate_sigma(cfg, target_fwhh, tv_grid=None):
    """Rescale all lengths so the ``t_h = 0`` four-fold dip has the target FWHH.

    The model has no intrinsic length scale, so one scan and one fit fix it.
    """
    cfg0 = replace(cfg, t_h=0.0)
    grid = default_ea_grid(cfg0) if tv_grid is None else np.asarray(tv_grid, dtype=float)
    fit = fit_dips(scan_tv(cfg0, grid).fourfold, 1)
    return cfg.scaled(target_fwhh / fit.dips[0].fwhh)


def inject_poisson_noise(curve, max_counts, floor=0.0, seed=0):
    """Counts-level noise: scale to ``max_counts`` at the curve maximum, add a flat floor,
    draw Poisson counts, then subtract the floor and rescale."""
    if not max_counts > 0:
        raise InvalidArgument(f"max_counts must be positive, got {max_counts}")
    if floor < 0:
        raise InvalidArgument(f"floor must be >= 0, got {floor}")
    scale = max_counts / float(np.max(curve.y))
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    counts = rng.poisson(curve.y * scale + floor)
    y = (counts - floor) / scale
    yerr = np.sqrt(np.maximum(counts, 1)) / scale
    return ScanCurve(curve.x, y, yerr)
