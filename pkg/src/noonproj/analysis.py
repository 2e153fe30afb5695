"""Dip fitting, closed-form visibility predictions and E/A inference."""
import logging
from dataclasses import dataclass, field
from math import log

import numpy as np
from scipy.optimize import least_squares

from .errors import FitFailure, IllPosedFit, InsufficientWings, InvalidArgument

log_ = logging.getLogger(__name__)

FOUR_LN2 = 4 * log(2)
XTOL = 1e-8
# Gauss-Newton steps from the converged point. The damped solver stops once the cost stops
# changing in double precision; solving J^T r = 0 directly pins the optimum far tighter, so
# results do not depend on the path (e.g. on ulp-level differences after rescaling the data)
POLISH_STEPS = 6
MAX_ITER = 200
POINTS_PER_PARAM = 8
ROUNDOFF_ERR = 1e-9


@dataclass(frozen=True)
class ScanCurve:
    """Sampled rate versus delay (micrometers)."""

    x: np.ndarray
    y: np.ndarray
    yerr: np.ndarray = None

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise InvalidArgument(f"x and y must be 1-D of equal length, got {x.shape} and {y.shape}")
        if x.size > 1 and np.any(np.diff(x) <= 0):
            raise InvalidArgument("x must be strictly increasing")
        yerr = None
        if self.yerr is not None:
            yerr = np.array(self.yerr, dtype=float)
            if yerr.shape != y.shape:
                raise InvalidArgument("yerr length does not match y")
            yerr.flags.writeable = False
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "yerr", yerr)

    def __len__(self):
        return self.x.size

    def scaled(self, factor):
        yerr = None if self.yerr is None else self.yerr * factor
        return ScanCurve(self.x, self.y * factor, yerr)


@dataclass(frozen=True)
class Dip:
    depth: float
    center: float
    fwhh: float
    visibility: float
    center_determined: bool = True


@dataclass(frozen=True)
class DipFit:
    baseline: float
    dips: tuple
    residual_rms: float
    stderr: dict = field(default_factory=dict)
    iterations: int = 0

    @property
    def visibilities(self):
        return tuple(d.visibility for d in self.dips)

    @property
    def mean_fwhh(self):
        return float(np.mean([d.fwhh for d in self.dips]))


@dataclass(frozen=True)
class VisibilityPrediction:
    v3_overlapped: float
    v3_dip1: float
    v3_dip2: float


def dip_model(x, baseline, dips):
    """``B prod_d [1 - V_d exp(-4 ln2 (x - c_d)^2 / w_d^2)]``; ``dips`` holds ``(V, c, w)``."""
    x = np.asarray(x, dtype=float)
    y = np.full_like(x, baseline)
    for v, c, w in dips:
        y = y * (1 - v * np.exp(-FOUR_LN2 * (x - c) ** 2 / (w * w)))
    return y


def _model_jacobian(x, baseline, dips, shared=False):
    """Derivatives of :func:`dip_model` in packed parameter order (baseline, then V, c, w per dip)."""
    gauss = [np.exp(-FOUR_LN2 * (x - c) ** 2 / (w * w)) for _, c, w in dips]
    factors = [1 - v * g for (v, _, _), g in zip(dips, gauss)]
    cols = [np.prod(factors, axis=0)]
    width_cols = []
    for d, ((v, c, w), g) in enumerate(zip(dips, gauss)):
        rest = baseline * np.prod([f for e, f in enumerate(factors) if e != d], axis=0)
        dv = -g * rest
        cols += [dv, v * dv * 2 * FOUR_LN2 * (x - c) / (w * w)]
        width_cols.append(v * dv * 2 * FOUR_LN2 * (x - c) ** 2 / w ** 3)
        if not shared:
            cols.append(width_cols[-1])
    if shared:
        cols.append(np.sum(width_cols, axis=0))
    return np.stack(cols, axis=1)


def _smooth(y, width=3):
    if y.size < width:
        return y.copy()
    pad = width // 2
    padded = np.pad(y, pad, mode="edge")
    return np.convolve(padded, np.ones(width) / width, mode="valid")


def _local_minima(ys):
    idx = [i for i in range(ys.size)
           if (i == 0 or ys[i] <= ys[i - 1]) and (i == ys.size - 1 or ys[i] <= ys[i + 1])]
    return sorted(idx, key=lambda i: ys[i])


def _half_width(x, ys, i, level):
    """Distance from x[i] to the nearest crossing of ``level`` on either side."""
    dists = []
    for step in (-1, 1):
        j = i
        while 0 <= j + step < ys.size and ys[j] < level:
            j += step
        if ys[j] >= level and j != i:
            dists.append(abs(x[j] - x[i]))
    return min(dists) if dists else None


def initial_guess(curve, n_dips, init=None):
    """Seed baseline at the upper-quartile mean and centers at the lowest smoothed minima."""
    x, y = curve.x, curve.y
    upper = y[y >= np.percentile(y, 75)]
    base = float(np.mean(upper))
    ys = _smooth(y)
    span = x[-1] - x[0]
    if init is not None:
        centers = [float(c) for c in init]
        if len(centers) != n_dips:
            raise InvalidArgument(f"expected {n_dips} initial centers, got {len(centers)}")
        idx = [int(np.argmin(np.abs(x - c))) for c in centers]
    else:
        minima = _local_minima(ys)
        idx = []
        min_sep = span / max(4 * n_dips, 8)
        for i in minima:
            if all(abs(x[i] - x[j]) > min_sep for j in idx):
                idx.append(i)
            if len(idx) == n_dips:
                break
        while len(idx) < n_dips:
            # too few minima: spread remaining centers across the scan
            idx.append(int(round((len(idx) + 1) * (x.size - 1) / (n_dips + 1))))
        centers = [float(x[i]) for i in idx]
    params = []
    for i, c in zip(idx, centers):
        depth = 1.0 - ys[i] / base if base > 0 else 0.0
        v = float(np.clip(depth, 0.02, 0.98))
        hw = _half_width(x, ys, i, base * (1 - depth / 2))
        w = 2 * hw if hw else span / 10
        params.append((v, c, max(w, 2 * np.min(np.diff(x)))))
    return base, params


def _pack(base, dips, shared):
    p = [base]
    for v, c, w in dips:
        p += [v, c] if shared else [v, c, w]
    if shared:
        p.append(float(np.mean([d[2] for d in dips])))
    return np.array(p, dtype=float)


def _unpack(p, n_dips, shared):
    base = p[0]
    if shared:
        w = p[-1]
        return base, [(p[1 + 2 * d], p[2 + 2 * d], w) for d in range(n_dips)]
    return base, [(p[1 + 3 * d], p[2 + 3 * d], p[3 + 3 * d]) for d in range(n_dips)]


def fit_dips(curve, n_dips=1, init=None, shared_width=False):
    """Least-squares fit of one or two Gaussian dips.

    Weighted by ``curve.yerr`` when every error is above roundoff level. Data are scaled
    by their upper-quartile mean before fitting so fitted visibilities do not
    depend on the rate units. Raises :class:`FitFailure` if the relative
    parameter change has not fallen below ``1e-8`` within 200 iterations,
    and :class:`IllPosedFit` when two centers sit within ``w/10``.
    """
    if n_dips not in (1, 2):
        raise InvalidArgument(f"n_dips must be 1 or 2, got {n_dips}")
    n_params = 1 + (2 * n_dips + 1 if shared_width else 3 * n_dips)
    if len(curve) < POINTS_PER_PARAM * n_params:
        raise InvalidArgument(
            f"{len(curve)} points is too few for {n_params} parameters "
            f"(need {POINTS_PER_PARAM} per parameter)")
    x = curve.x
    scale = float(np.mean(curve.y[curve.y >= np.percentile(curve.y, 75)]))
    if not scale > 0:
        raise InvalidArgument("curve has no positive baseline")
    y = curve.y / scale
    sigma = None
    if curve.yerr is not None:
        e = curve.yerr / scale
        # roundoff-level errors (deterministic points of a Monte Carlo scan) carry no weight information
        if np.all(np.isfinite(e)) and np.all(e > ROUNDOFF_ERR):
            sigma = e

    base0, dips0 = initial_guess(ScanCurve(x, y), n_dips, init)
    p0 = _pack(base0, dips0, shared_width)
    span = x[-1] - x[0]
    dx = float(np.min(np.diff(x)))
    lo, hi = [0.0], [np.inf]
    for _ in range(n_dips):
        lo += [0.0, x[0]]
        hi += [1.0, x[-1]]
        if not shared_width:
            lo.append(dx / 10)
            hi.append(10 * span)
    if shared_width:
        lo.append(dx / 10)
        hi.append(10 * span)
    p0 = np.clip(p0, np.array(lo) + 1e-12, np.array(hi) - 1e-12)

    def resid(p):
        base, dips = _unpack(p, n_dips, shared_width)
        r = dip_model(x, base, dips) - y
        return r if sigma is None else r / sigma

    def jac(p):
        base, dips = _unpack(p, n_dips, shared_width)
        j = _model_jacobian(x, base, dips, shared_width)
        return j if sigma is None else j / sigma[:, None]

    max_nfev = MAX_ITER * (len(p0) + 1)
    res = least_squares(resid, p0, bounds=(lo, hi), method="trf", jac=jac,
                        xtol=XTOL, ftol=None, gtol=None, max_nfev=max_nfev, x_scale="jac")
    base, dips = _unpack(res.x, n_dips, shared_width)
    if res.status <= 0:
        raise FitFailure(f"dip fit did not converge: {res.message}",
                         last=_to_fit(base, dips, scale, res, x, curve, None))
    p = _gauss_newton_polish(resid, jac, res.x, np.array(lo), np.array(hi))
    base, dips = _unpack(p, n_dips, shared_width)

    if n_dips == 2:
        (_, c1, w1), (_, c2, w2) = dips
        if abs(c1 - c2) < max(w1, w2) / 10:
            raise IllPosedFit(f"dip centers {c1:.4g} and {c2:.4g} overlap within w/10")

    stderr = _standard_errors(res, len(x))
    return _to_fit(base, dips, scale, res, x, curve, stderr, shared_width)


def _gauss_newton_polish(resid, jac, p, lo, hi):
    for _ in range(POLISH_STEPS):
        step = np.linalg.lstsq(jac(p), -resid(p), rcond=None)[0]
        nxt = p + step
        # stay on the damped solution when a bound is active or the step misbehaves
        if not np.all(np.isfinite(nxt)) or np.any(nxt <= lo) or np.any(nxt >= hi):
            break
        p = nxt
        if np.all(np.abs(step) <= 1e-15 * (1 + np.abs(p))):
            break
    return p


def _standard_errors(res, n_points):
    jac = res.jac
    dof = max(n_points - jac.shape[1], 1)
    s2 = 2 * res.cost / dof
    cov = np.linalg.pinv(jac.T @ jac) * s2
    return np.sqrt(np.clip(np.diag(cov), 0, None))


def _to_fit(base, dips, scale, res, x, curve, stderr, shared=False):
    model = dip_model(x, base, dips) * scale
    rms = float(np.sqrt(np.mean((model - curve.y) ** 2)))
    out = []
    errs = {}
    for d, (v, c, w) in enumerate(dips):
        determined = True
        if stderr is not None:
            sv = stderr[1 + (2 if shared else 3) * d]
            sc = stderr[2 + (2 if shared else 3) * d]
            errs[f"visibility_{d + 1}"] = float(sv)
            errs[f"center_{d + 1}"] = float(sc)
            # a vanishing dip leaves its center unconstrained
            determined = bool(v > max(1e-6, 2 * sv) and np.isfinite(sc))
        out.append(Dip(depth=float(v * base * scale), center=float(c), fwhh=float(abs(w)),
                       visibility=float(v), center_determined=determined))
    if stderr is not None:
        errs["baseline"] = float(stderr[0] * scale)
    return DipFit(baseline=float(base * scale), dips=tuple(out), residual_rms=rms,
                  stderr=errs, iterations=int(res.nfev))


def count_dips(curve, threshold=0.02):
    """Number of local minima whose depth below the upper-quartile level exceeds ``threshold``."""
    y = curve.y
    base = float(np.mean(y[y >= np.percentile(y, 75)]))
    n = 0
    for i in range(1, y.size - 1):
        if y[i] < y[i - 1] and y[i] <= y[i + 1] and 1 - y[i] / base > threshold:
            n += 1
    return n


def _check_unit(name, value):
    if not 0.0 <= value <= 1.0:
        raise InvalidArgument(f"{name} must lie in [0, 1], got {value}")


def predict_visibilities(beta, ea):
    """Three-photon visibilities for overlapped H photons and the two separated-H dips."""
    _check_unit("beta", beta)
    _check_unit("E/A", ea)
    return VisibilityPrediction(
        v3_overlapped=beta * (1 + 3 * ea) / (2 * (1 + ea)),
        v3_dip1=beta / 2,
        v3_dip2=beta * ea / 2,
    )


def predict_visibility_mk(n, m):
    """Visibility ``m/(n-1)`` of the ``|n-1, 1>`` dip with ``m`` H photons co-modal with V."""
    if int(n) != n or n < 2:
        raise InvalidArgument(f"n must be an integer >= 2, got {n}")
    if int(m) != m or not 0 <= m <= n - 1:
        raise InvalidArgument(f"m must be an integer in 0..{n - 1}, got {m}")
    return m / (n - 1)


def infer_ea(v3, beta, method="v3"):
    """E/A from a measured visibility and reduction factor.

    ``method="v3"`` inverts the overlapped-H visibility (needs
    ``beta/2 <= v3 <= beta``); ``method="dip2"`` inverts the second dip of
    the separated-H scan.
    """
    _check_unit("visibility", v3)
    _check_unit("beta", beta)
    if beta == 0:
        raise InvalidArgument("beta = 0 carries no E/A information")
    if method == "v3":
        tol = 1e-12
        if not beta / 2 - tol <= v3 <= beta + tol:
            raise InvalidArgument(
                f"v3={v3} outside invertible range [beta/2, beta] = [{beta / 2}, {beta}]")
        ea = (2 * v3 - beta) / (3 * beta - 2 * v3)
    elif method == "dip2":
        ea = 2 * v3 / beta
    else:
        raise InvalidArgument(f"unknown method {method!r}")
    if not 0.0 <= ea <= 1.0:
        log_.warning("E/A estimate %.6g clamped to [0, 1]", ea)
        ea = min(max(ea, 0.0), 1.0)
    return float(ea)


def wings_mask(x, fit, exclusion=2.0):
    """Points farther than ``exclusion * FWHH`` from every fitted dip center."""
    x = np.asarray(x, dtype=float)
    mask = np.ones(x.shape, dtype=bool)
    for d in fit.dips:
        mask &= np.abs(x - d.center) > exclusion * d.fwhh
    return mask


def infer_ea_wings(signal, accidental, fit=None, n_dips=1, min_points=5):
    """``mean(signal/accidental) - 1`` over the wings of the signal's dips."""
    if signal.x.shape != accidental.x.shape or not np.array_equal(signal.x, accidental.x):
        raise InvalidArgument("signal and accidental curves must share the grid")
    if fit is None:
        fit = fit_dips(signal, n_dips)
    mask = wings_mask(signal.x, fit)
    if mask.sum() < min_points:
        raise InsufficientWings(f"only {int(mask.sum())} wing points (need {min_points})")
    ratio = signal.y[mask] / accidental.y[mask]
    return float(np.mean(ratio) - 1.0)
