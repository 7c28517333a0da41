"""Reference implementations that share no code with the package.

Everything here works on plain dense matrices built with ``np.kron`` from
the 2x2 Pauli matrices, so the bitmask algebra, the eigenbasis time
average and the shot sampler are all checked against something independent.
"""
from functools import reduce

import numpy as np
from scipy.linalg import expm

PAULI_2x2 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_pauli(label):
    """Kronecker product of single-site matrices, qubit 0 leftmost."""
    return reduce(np.kron, [PAULI_2x2[ch] for ch in label])


def dense_hamiltonian(labels, couplings):
    return sum(c * dense_pauli(lab) for lab, c in zip(labels, couplings))


def k_matrix(rho, labels):
    """K_jk = Tr(i [P_j, P_k] rho) by explicit matrix products."""
    mats = [dense_pauli(lab) for lab in labels]
    m = len(mats)
    out = np.zeros((m, m))
    for j in range(m):
        for k in range(m):
            comm = mats[j] @ mats[k] - mats[k] @ mats[j]
            out[j, k] = np.real(np.trace(1j * comm @ rho))
    return out


def time_average(rho0, h, t, points=4001):
    """(1/t) int_0^t e^{-iHu} rho0 e^{iHu} du by composite Simpson.

    ``points`` is rounded up to odd. Steps with a single propagator and
    accumulates on the fly, so long grids cost no extra memory.
    """
    points += 1 - points % 2
    dt = t / (points - 1)
    step = expm(-1j * h * dt)
    rho = rho0.astype(complex)
    acc = np.zeros_like(rho)
    for i in range(points):
        w = 1 if i in (0, points - 1) else (4 if i % 2 else 2)
        acc += w * rho
        rho = step @ rho @ step.conj().T
    return acc * dt / 3 / t


def trace_norm(a):
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def outcome_probabilities(rho, setting):
    """Born-rule probabilities of the +-1 product outcomes of ``setting``.

    Uses the spectral projectors of each single-site Pauli. Outcome index
    bit q (qubit 0 most significant) is 0 for eigenvalue +1.
    """
    n = len(setting)
    projs = []
    for ch in setting:
        p = PAULI_2x2[ch]
        projs.append(((np.eye(2) + p) / 2, (np.eye(2) - p) / 2))
    probs = np.empty(2 ** n)
    for idx in range(2 ** n):
        bits = [(idx >> (n - 1 - q)) & 1 for q in range(n)]
        proj = reduce(np.kron, [projs[q][b] for q, b in enumerate(bits)])
        probs[idx] = np.real(np.trace(proj @ rho))
    return probs


def monte_carlo_error_cov(mean, cov, sigma, m, samples, rng, blocks=1, shared=False):
    """Sample covariance of sum_b E_b x_b for x ~ N(mean, cov).

    Each E_b is symmetric with i.i.d. N(0, sigma^2) entries on and above the
    diagonal. With ``shared`` every block uses the same draw.
    """
    assert mean.size == blocks * m
    xs = rng.multivariate_normal(mean, cov, size=samples).reshape(samples, blocks, m)
    out = np.zeros((samples, m))
    e = None
    for b in range(blocks):
        if e is None or not shared:
            e = rng.normal(0.0, sigma, size=(samples, m, m))
            e = np.triu(e) + np.transpose(np.triu(e, 1), (0, 2, 1))
        out += np.einsum("sij,sj->si", e, xs[:, b])
    return np.cov(out, rowvar=False)


def joint_gaussian_posterior(mean, cov, a, y, noise_cov):
    """Textbook linear-Gaussian posterior via the Kalman gain form."""
    s = a @ cov @ a.T + noise_cov
    gain = np.linalg.solve(s, a @ cov).T
    return mean + gain @ (y - a @ mean), cov - gain @ a @ cov
