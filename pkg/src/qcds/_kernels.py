"""
Hot statevector kernels.

Every circuit evaluation in the package is funnelled through
``run_program``: a compiled gate program (integer op table) is executed
on many independent rows, each row carrying its own angle vector.  Two
interchangeable backends exist:

* a numba ``@njit`` kernel that walks one statevector per row in place;
* a pure-numpy path that advances all rows at once with reshapes.

The numba path is used when numba imports and ``QCDS_DISABLE_NUMBA`` is
unset (or ``0``).  Both are importable directly for benchmarking.
"""

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return decorator


def _flag_disabled(value):
    return value.strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = NUMBA_AVAILABLE and not _flag_disabled(os.environ.get("QCDS_DISABLE_NUMBA", ""))

# op table columns: kind, wire0, wire1, wire2, angle source (-1 = none)
K_I, K_RX, K_RY, K_RZ, K_H, K_X, K_Y, K_Z, K_CX, K_CZ, K_TOF, K_CSWAP = range(12)
N_OP_COLS = 5

_SQRT1_2 = 1.0 / np.sqrt(2.0)


# ---------------------------------------------------------------------------
# numba backend
# ---------------------------------------------------------------------------


@njit(cache=True)
def _apply_1q(state, n, a, m00, m01, m10, m11):
    dim = state.shape[0]
    bit = 1 << (n - 1 - a)
    for base in range(0, dim, 2 * bit):
        for i in range(base, base + bit):
            j = i + bit
            s0 = state[i]
            s1 = state[j]
            state[i] = m00 * s0 + m01 * s1
            state[j] = m10 * s0 + m11 * s1


@njit(cache=True)
def _apply_inplace(state, n, kind, a, b, c, angle):
    dim = state.shape[0]
    if kind == K_I:
        return
    if kind <= K_Z:
        co = np.cos(0.5 * angle)
        si = np.sin(0.5 * angle)
        if kind == K_RX:
            _apply_1q(state, n, a, co + 0j, -1j * si, -1j * si, co + 0j)
        elif kind == K_RY:
            _apply_1q(state, n, a, co + 0j, -si + 0j, si + 0j, co + 0j)
        elif kind == K_RZ:
            _apply_1q(state, n, a, co - 1j * si, 0j, 0j, co + 1j * si)
        elif kind == K_H:
            _apply_1q(state, n, a, _SQRT1_2 + 0j, _SQRT1_2 + 0j, _SQRT1_2 + 0j, -_SQRT1_2 + 0j)
        elif kind == K_X:
            _apply_1q(state, n, a, 0j, 1.0 + 0j, 1.0 + 0j, 0j)
        elif kind == K_Y:
            _apply_1q(state, n, a, 0j, -1j, 1j, 0j)
        else:  # Z
            bit = 1 << (n - 1 - a)
            for base in range(bit, dim, 2 * bit):
                for i in range(base, base + bit):
                    state[i] = -state[i]
        return
    ba = 1 << (n - 1 - a)
    bb = 1 << (n - 1 - b)
    if kind == K_CX:
        for i in range(dim):
            if (i & ba) and not (i & bb):
                j = i | bb
                s0 = state[i]
                state[i] = state[j]
                state[j] = s0
    elif kind == K_CZ:
        for i in range(dim):
            if (i & ba) and (i & bb):
                state[i] = -state[i]
    elif kind == K_TOF:
        bc = 1 << (n - 1 - c)
        for i in range(dim):
            if (i & ba) and (i & bb) and not (i & bc):
                j = i | bc
                s0 = state[i]
                state[i] = state[j]
                state[j] = s0
    else:  # CSWAP: control a, swap b <-> c
        bc = 1 << (n - 1 - c)
        for i in range(dim):
            if (i & ba) and (i & bb) and not (i & bc):
                j = (i & ~bb) | bc
                s0 = state[i]
                state[i] = state[j]
                state[j] = s0


@njit(cache=True)
def _expect_z(state, n, n_measure, out):
    dim = state.shape[0]
    for q in range(n_measure):
        bit = 1 << (n - 1 - q)
        acc = 0.0
        for i in range(dim):
            p = state[i].real * state[i].real + state[i].imag * state[i].imag
            if i & bit:
                acc -= p
            else:
                acc += p
        out[q] = acc


@njit(cache=True)
def run_program_numba(ops, angles, n, n_measure):
    n_rows = angles.shape[0]
    dim = 1 << n
    out = np.empty((n_rows, n_measure))
    state = np.empty(dim, dtype=np.complex128)
    for r in range(n_rows):
        state[:] = 0.0
        state[0] = 1.0
        for k in range(ops.shape[0]):
            src = ops[k, 4]
            angle = angles[r, src] if src >= 0 else 0.0
            _apply_inplace(state, n, ops[k, 0], ops[k, 1], ops[k, 2], ops[k, 3], angle)
        _expect_z(state, n, n_measure, out[r])
    return out


@njit(cache=True)
def apply_ops_numba(state, ops, angles, n):
    """Apply an op table to one statevector in place (angles is 1-D)."""
    for k in range(ops.shape[0]):
        src = ops[k, 4]
        angle = angles[src] if src >= 0 else 0.0
        _apply_inplace(state, n, ops[k, 0], ops[k, 1], ops[k, 2], ops[k, 3], angle)


# ---------------------------------------------------------------------------
# numpy backend
# ---------------------------------------------------------------------------


def _bits(n):
    idx = np.arange(1 << n)
    return [(idx >> (n - 1 - q)) & 1 for q in range(n)]


def _apply_batch_numpy(states, n, kind, a, b, c, angle):
    """Apply one gate to a (rows, 2**n) batch; ``angle`` is a (rows,) array."""
    if kind == K_I:
        return states
    rows = states.shape[0]
    if kind <= K_Z:
        view = states.reshape(rows, 1 << a, 2, 1 << (n - 1 - a))
        s0 = view[:, :, 0, :].copy()
        s1 = view[:, :, 1, :].copy()
        if kind in (K_RX, K_RY, K_RZ):
            co = np.cos(0.5 * angle)[:, None, None]
            si = np.sin(0.5 * angle)[:, None, None]
        if kind == K_RX:
            view[:, :, 0, :] = co * s0 - 1j * si * s1
            view[:, :, 1, :] = -1j * si * s0 + co * s1
        elif kind == K_RY:
            view[:, :, 0, :] = co * s0 - si * s1
            view[:, :, 1, :] = si * s0 + co * s1
        elif kind == K_RZ:
            view[:, :, 0, :] = (co - 1j * si) * s0
            view[:, :, 1, :] = (co + 1j * si) * s1
        elif kind == K_H:
            view[:, :, 0, :] = _SQRT1_2 * (s0 + s1)
            view[:, :, 1, :] = _SQRT1_2 * (s0 - s1)
        elif kind == K_X:
            view[:, :, 0, :] = s1
            view[:, :, 1, :] = s0
        elif kind == K_Y:
            view[:, :, 0, :] = -1j * s1
            view[:, :, 1, :] = 1j * s0
        else:
            view[:, :, 1, :] = -s1
        return states
    bits = _bits(n)
    idx = np.arange(1 << n)
    ba = 1 << (n - 1 - a)
    bb = 1 << (n - 1 - b)
    if kind == K_CZ:
        sign = np.where(bits[a] & bits[b], -1.0, 1.0)
        return states * sign
    if kind == K_CX:
        perm = np.where(bits[a] == 1, idx ^ bb, idx)
    elif kind == K_TOF:
        bc = 1 << (n - 1 - c)
        perm = np.where((bits[a] & bits[b]) == 1, idx ^ bc, idx)
    else:
        bc = 1 << (n - 1 - c)
        swap = (bits[a] == 1) & (bits[b] != bits[c])
        perm = np.where(swap, idx ^ (bb | bc), idx)
    return states[:, perm]


def apply_ops_numpy(states, ops, angles, n):
    """Apply an op table to a (rows, 2**n) batch; ``angles`` is (rows, A)."""
    states = np.ascontiguousarray(states)
    zero = np.zeros(states.shape[0])
    for kind, a, b, c, src in ops:
        angle = angles[:, src] if src >= 0 else zero
        states = np.ascontiguousarray(_apply_batch_numpy(states, n, kind, a, b, c, angle))
    return states


def expect_z_numpy(states, n, n_measure):
    probs = states.real**2 + states.imag**2
    bits = _bits(n)
    signs = np.stack([1.0 - 2.0 * bits[q] for q in range(n_measure)], axis=1)
    return probs @ signs


def run_program_numpy(ops, angles, n, n_measure):
    states = np.zeros((angles.shape[0], 1 << n), dtype=np.complex128)
    states[:, 0] = 1.0
    states = apply_ops_numpy(states, ops, angles, n)
    return expect_z_numpy(states, n, n_measure)


def run_program(ops, angles, n, n_measure):
    """Evaluate ``ops`` once per row of ``angles``; returns (rows, n_measure) <Z>."""
    ops = np.ascontiguousarray(ops, dtype=np.int64)
    angles = np.ascontiguousarray(angles, dtype=np.float64)
    if angles.ndim == 1:
        angles = angles[None, :]
    if USE_NUMBA:
        return run_program_numba(ops, angles, n, n_measure)
    return run_program_numpy(ops, angles, n, n_measure)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
