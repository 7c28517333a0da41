"""Pure-numpy implementations of the hot kernels.

Mirrors the compiled ``_ckernels`` module function-for-function. Pauli
strings are passed as integer bitmasks (qubit 0 in the most significant
bit) and single-site letters as codes 0=I, 1=X, 2=Y, 3=Z.
"""
import numpy as np

BACKEND = "python"


def _popcount(a):
    return np.bitwise_count(np.asarray(a, dtype=np.int64)).astype(np.int64)


def pauli_product_table(xs, zs):
    """Products P_j P_k = i**phase[j, k] * R[j, k] for all basis pairs.

    Returns ``(phase, xr, zr)`` with ``phase`` in {0,1,2,3}.
    """
    xs = np.asarray(xs, dtype=np.int64)
    zs = np.asarray(zs, dtype=np.int64)
    x1, x2 = xs[:, None], xs[None, :]
    z1, z2 = zs[:, None], zs[None, :]
    xr = x1 ^ x2
    zr = z1 ^ z2
    phase = (_popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(xr & zr)
             + 2 * _popcount(z1 & x2)) % 4
    return phase.astype(np.uint8), xr, zr


def pauli_expectations(rho, xs, zs, chunk=256):
    """Tr(P rho) for each Pauli given by masks ``(xs[i], zs[i])``."""
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    xs = np.asarray(xs, dtype=np.int64).ravel()
    zs = np.asarray(zs, dtype=np.int64).ravel()
    d = rho.shape[0]
    cols = np.arange(d, dtype=np.int64)
    out = np.empty(xs.size, dtype=np.complex128)
    for start in range(0, xs.size, chunk):
        x = xs[start:start + chunk, None]
        z = zs[start:start + chunk, None]
        signs = 1 - 2 * (_popcount(z & cols) & 1)
        vals = (signs * rho[cols, cols ^ x]).sum(axis=1)
        ny = _popcount(x & z).ravel() % 4
        out[start:start + chunk] = (1j) ** ny * vals
    return out


def shadow_accumulate(settings, outcomes, targets):
    """Per-target sums of outcome products over supporting settings.

    ``settings`` and ``outcomes`` are (L, n); ``targets`` is (m, n).
    Returns ``(sums, counts)`` as int64 arrays of length m.
    """
    settings = np.asarray(settings, dtype=np.int8)
    outcomes = np.asarray(outcomes, dtype=np.int8)
    targets = np.asarray(targets, dtype=np.int8)
    m = targets.shape[0]
    sums = np.zeros(m, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    for k in range(m):
        supp = np.flatnonzero(targets[k])
        if supp.size == 0:
            counts[k] = settings.shape[0]
            sums[k] = settings.shape[0]
            continue
        hit = np.all(settings[:, supp] == targets[k, supp], axis=1)
        counts[k] = int(hit.sum())
        if counts[k]:
            sums[k] = int(np.prod(outcomes[hit][:, supp], axis=1,
                                  dtype=np.int64).sum())
    return sums, counts
