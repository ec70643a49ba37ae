"""Shared test helpers: a literal three-mode second-quantization oracle.

The oracle enumerates every Fock state |n_minus, n_zero, n_plus> of a fixed
total, applies creation/annihilation operators explicitly, and restricts to
the symmetric pair subspace afterwards. It shares no code with the package
implementation.
"""

import numpy as np
import pytest


def three_mode_states(M):
    states = []
    for nm in range(M + 1):
        for n0 in range(M + 1 - nm):
            states.append((nm, n0, M - nm - n0))
    return states


def three_mode_hamiltonian(M, phi=0.0):
    """Spin-mixing Hamiltonian on the full three-mode total-M space, then
    restricted to the symmetric states |k, M-2k, k>.

    Convention: the pair-raising term a0 a0 a+^dag a-^dag carries e^{+2i phi}
    (superdiagonal of the restricted matrix is then e^{-2i phi}).
    """
    states = three_mode_states(M)
    idx = {s: i for i, s in enumerate(states)}
    H = np.zeros((len(states), len(states)), dtype=complex)
    for s, i in idx.items():
        nm, n0, npl = s
        H[i, i] += (n0 - 0.5) * (npl + nm)
        if n0 >= 2:  # a0 a0 a+^dag a-^dag
            amp = np.sqrt(n0 * (n0 - 1)) * np.sqrt(nm + 1) * np.sqrt(npl + 1)
            H[idx[(nm + 1, n0 - 2, npl + 1)], i] += np.exp(2j * phi) * amp
        if nm >= 1 and npl >= 1:  # a0^dag a0^dag a+ a-
            amp = np.sqrt(nm * npl) * np.sqrt((n0 + 1) * (n0 + 2))
            H[idx[(nm - 1, n0 + 2, npl - 1)], i] += np.exp(-2j * phi) * amp
    sym = [idx[(k, M - 2 * k, k)] for k in range(M // 2 + 1)]
    return H[np.ix_(sym, sym)]


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
