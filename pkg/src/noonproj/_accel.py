"""Hot kernels for the permutation-pair sums.

Each kernel has a numba ``@njit`` version and a pure-numpy version with
identical signatures. The numba path is used when numba imports and the
environment variable ``NOONPROJ_DISABLE_NUMBA`` is unset (or ``0``).
"""
import os
from itertools import permutations

import numpy as np

_DISABLED = os.environ.get("NOONPROJ_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


_PERM_CACHE = {}


def perm_table(n):
    """All permutations of ``range(n)`` as an ``(n!, n)`` int64 array, lexicographic."""
    table = _PERM_CACHE.get(n)
    if table is None:
        table = np.array(list(permutations(range(n))), dtype=np.int64).reshape(-1, n)
        table.flags.writeable = False
        _PERM_CACHE[n] = table
    return table


# --------------------------------------------------------------------------
# numpy fallbacks
# --------------------------------------------------------------------------

def _pair_weights_numpy(amp, perms):
    # W[p] = sum_s prod_k amp[k, s[k]] * conj(amp[k, perms[p][s[k]]])
    n = amp.shape[0]
    rows = np.arange(n)
    direct = amp[rows, perms]                      # (n!, n): amp[k, s[k]]
    out = np.empty(perms.shape[0], dtype=np.complex128)
    for p in range(perms.shape[0]):
        partner = np.conj(amp[rows, perms[p][perms]])   # (n!, n): conj(amp[k, pi(s(k))])
        out[p] = np.sum(np.prod(direct * partner, axis=1))
    return out


def _gram_contract_numpy(grams, perms, weights):
    # rate[b] = sum_p W[p] prod_i S[b, pi(i), i]
    n = perms.shape[1]
    cols = np.arange(n)
    acc = np.zeros(grams.shape[0], dtype=np.complex128)
    for p in range(perms.shape[0]):
        if weights[p] == 0:
            continue
        acc += weights[p] * np.prod(grams[:, perms[p], cols], axis=1)
    return acc


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True, nogil=True)
    def _pair_weights_numba(amp, perms):
        nperm, n = perms.shape
        out = np.zeros(nperm, dtype=np.complex128)
        for p in range(nperm):
            total = 0j
            for s in range(nperm):
                term = 1.0 + 0j
                for k in range(n):
                    i = perms[s, k]
                    term *= amp[k, i] * np.conj(amp[k, perms[p, i]])
                total += term
            out[p] = total
        return out

    @njit(cache=True, nogil=True)
    def _gram_contract_numba(grams, perms, weights):
        nb = grams.shape[0]
        nperm, n = perms.shape
        out = np.zeros(nb, dtype=np.complex128)
        for b in range(nb):
            total = 0j
            for p in range(nperm):
                w = weights[p]
                if w == 0:
                    continue
                term = w
                for i in range(n):
                    term *= grams[b, perms[p, i], i]
                total += term
            out[b] = total
        return out


def pair_weights(amp, use_numba=None):
    """Network weight of every relative permutation.

    ``amp[k, i]`` is the amplitude for photon ``i`` to reach detection slot
    ``k``. Returns ``W`` with ``W[p] = sum_s prod_k amp[k,s(k)] conj(amp[k,pi_p(s(k))])``,
    indexed like :func:`perm_table`.
    """
    amp = np.ascontiguousarray(amp, dtype=np.complex128)
    perms = perm_table(amp.shape[0])
    if _pick(use_numba):
        return _pair_weights_numba(amp, perms)
    return _pair_weights_numpy(amp, perms)


def gram_contract(grams, weights, use_numba=None):
    """Contract a batch of Gram matrices ``(B, n, n)`` with permutation weights.

    Returns the complex sums ``sum_p W[p] prod_i S[pi_p(i), i]``, one per batch entry.
    """
    grams = np.ascontiguousarray(grams, dtype=np.complex128)
    if grams.ndim == 2:
        grams = grams[None]
    weights = np.ascontiguousarray(weights, dtype=np.complex128)
    perms = perm_table(grams.shape[1])
    if _pick(use_numba):
        return _gram_contract_numba(grams, perms, weights)
    return _gram_contract_numpy(grams, perms, weights)


def _pick(use_numba):
    if use_numba is None:
        return HAS_NUMBA
    if use_numba and not HAS_NUMBA:
        raise RuntimeError("numba path requested but numba is unavailable or disabled")
    return bool(use_numba)
