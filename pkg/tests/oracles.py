"""Independent brute-force oracles for the test suite.

Nothing here imports the package under test: expected values come from
explicit index loops and textbook-style projector arithmetic, so agreement
with the production code is meaningful.
"""

from __future__ import annotations

import numpy as np


def partial_trace_loops(mat: np.ndarray, dims: list[int], keep: list[int]) -> np.ndarray:
    """Partial trace by explicit nested index loops over multi-indices."""
    n = len(dims)
    traced = [i for i in range(n) if i not in keep]
    keep_dims = [dims[i] for i in keep]
    d_keep = int(np.prod(keep_dims)) if keep else 1

    def flat(multi):
        idx = 0
        for i in range(n):
            idx = idx * dims[i] + multi[i]
        return idx

    def keep_flat(multi):
        idx = 0
        for i in keep:
            idx = idx * dims[i] + multi[i]
        return idx

    out = np.zeros((d_keep, d_keep), dtype=complex)
    multis = [()]
    for d in dims:
        multis = [m + (k,) for m in multis for k in range(d)]
    for row in multis:
        for col in multis:
            if all(row[i] == col[i] for i in traced):
                out[keep_flat(row), keep_flat(col)] += mat[flat(row), flat(col)]
    return out


def embed_single_qubit_gate(gate: np.ndarray, n_subsystems: int, dims: list[int],
                            target: int) -> np.ndarray:
    """Operator acting as `gate` on one subsystem, built by index arithmetic."""
    total = int(np.prod(dims))
    out = np.zeros((total, total), dtype=complex)

    def digits(idx):
        out_digits = []
        for d in reversed(dims):
            out_digits.append(idx % d)
            idx //= d
        return list(reversed(out_digits))

    def flat(ds):
        idx = 0
        for i, d in enumerate(dims):
            idx = idx * d + ds[i]
        return idx

    for col in range(total):
        ds = digits(col)
        for r in range(dims[target]):
            amp = gate[r, ds[target]]
            if amp != 0:
                new = list(ds)
                new[target] = r
                out[flat(new), col] += amp
    return out


def embed_general(op: np.ndarray, op_dims: list[int], dims: list[int],
                  positions: list[int]) -> np.ndarray:
    """Embed an operator on an ordered subsystem subset, by index walking.

    positions[k] is the axis of the full space carrying the operator's k-th
    subsystem (in the operator's own ordering, not sorted).
    """
    n = len(dims)
    total = int(np.prod(dims))

    def digits(idx):
        ds = []
        for d in reversed(dims):
            ds.append(idx % d)
            idx //= d
        return list(reversed(ds))

    def flat(ds):
        idx = 0
        for i, d in enumerate(dims):
            idx = idx * d + ds[i]
        return idx

    def sub_flat(ds):
        idx = 0
        for k, d in enumerate(op_dims):
            idx = idx * d + ds[positions[k]]
        return idx

    def sub_digits(idx):
        ds = []
        for d in reversed(op_dims):
            ds.append(idx % d)
            idx //= d
        return list(reversed(ds))

    out = np.zeros((total, total), dtype=complex)
    for col in range(total):
        col_digits = digits(col)
        col_sub = sub_flat(col_digits)
        for row_sub in range(int(np.prod(op_dims))):
            amp = op[row_sub, col_sub]
            if amp == 0:
                continue
            row_digits = list(col_digits)
            for k, v in enumerate(sub_digits(row_sub)):
                row_digits[positions[k]] = v
            out[flat(row_digits), col] += amp
    return out


def direction_up(theta: float) -> np.ndarray:
    return np.array([np.cos(theta / 2.0), np.sin(theta / 2.0)], dtype=complex)


def direction_down(theta: float) -> np.ndarray:
    return np.array([-np.sin(theta / 2.0), np.cos(theta / 2.0)], dtype=complex)


def pair_state_updown() -> np.ndarray:
    """(|up down> + |down up>)/sqrt2 as a 4-vector, first factor significant."""
    v = np.zeros(4, dtype=complex)
    v[1] = v[2] = 1.0 / np.sqrt(2.0)
    return v


def joint_probabilities(theta_a: float, theta_b: float,
                        pair: np.ndarray | None = None) -> dict[tuple[str, str], float]:
    """Exact P(x, y) from rotated projectors on the explicit two-qubit state."""
    if pair is None:
        pair = pair_state_updown()
    result = {}
    for xa, va in (("up", direction_up(theta_a)), ("down", direction_down(theta_a))):
        for xb, vb in (("up", direction_up(theta_b)), ("down", direction_down(theta_b))):
            amp = np.kron(va, vb).conj() @ pair
            result[(xa, xb)] = float(abs(amp) ** 2)
    return result


def correlator_oracle(theta_a: float, theta_b: float) -> float:
    p = joint_probabilities(theta_a, theta_b)
    return (p[("up", "up")] + p[("down", "down")]
            - p[("up", "down")] - p[("down", "up")])


def conjugation_superoperator(u: np.ndarray) -> np.ndarray:
    """Column-stacked matrix of rho -> u rho u†."""
    return np.kron(u.conj(), u)


def apply_columnstacked(sup: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (sup @ rho.reshape(-1, order="F")).reshape(d, d, order="F")


def splitmix64_reference(seed: int, count: int) -> list[int]:
    """Straight transcription of the published SplitMix64 state transition."""
    mask = (1 << 64) - 1
    state = seed & mask
    outputs = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        outputs.append((z ^ (z >> 31)) & mask)
    return outputs


def kraus_dilation(kraus: list[np.ndarray]) -> np.ndarray:
    """Unitary on (env ox sys) acting as the channel for env input |0>.

    Columns for the env=|0> sector are fixed by the Kraus operators; the
    remaining columns are completed to an orthonormal basis.
    """
    n_k = len(kraus)
    d = kraus[0].shape[0]
    fixed = np.zeros((n_k * d, d), dtype=complex)
    for k, a in enumerate(kraus):
        fixed[k * d:(k + 1) * d, :] = a
    import scipy.linalg

    complement = scipy.linalg.null_space(fixed.conj().T)
    u = np.hstack([fixed, complement])
    # reorder columns so column (e*d + j) is the image of |e>|j>: env 0 first
    assert u.shape == (n_k * d, n_k * d)
    return u
