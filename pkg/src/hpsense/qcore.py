"""Dense quantum-state machinery for very small registers.

Conventions
-----------
Qubit 0 is the most significant tensor factor. For the two-qubit register used
throughout the package, qubit 0 is the ancilla ``A`` and qubit 1 the sensing
qubit ``S``, so the computational basis string ``|a s>`` maps to index
``2*a + s``.

Choi matrices use the output system as the first tensor factor::

    J = sum_i (K_i (x) I) |Omega><Omega| (K_i (x) I)^dagger,
    |Omega> = sum_j |j>|j>

The low-level helpers (:func:`embed`, :func:`evolve_kraus`) accept arrays with
arbitrary leading batch dimensions so that callers can push many independent
states through the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

TRACE_TOL = 1e-12
HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
UNITARY_TOL = 1e-10
COMPLETENESS_TOL = 1e-10
KRAUS_CUTOFF = 1e-12

_SQ2 = np.sqrt(0.5)

ID2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


class QuantumError(ValueError):
    """Raised for invalid states, operators or subsystem specifications."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _infer_dims(dim: int) -> tuple[int, ...]:
    n = int(round(np.log2(dim))) if dim > 0 else 0
    if n >= 1 and 2**n == dim:
        return (2,) * n
    return (dim,)


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        amps = _readonly(np.ravel(self.amplitudes))
        if not np.all(np.isfinite(amps)):
            raise QuantumError("state amplitudes must be finite")
        norm = np.vdot(amps, amps).real
        if abs(norm - 1.0) > 1e-12:
            raise QuantumError(f"state is not normalised (|psi|^2 = {norm!r})")
        object.__setattr__(self, "amplitudes", amps)
        if not self.dims:
            object.__setattr__(self, "dims", _infer_dims(amps.size))
        if int(np.prod(self.dims)) != amps.size:
            raise QuantumError("dims do not match the number of amplitudes")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def basis(cls, index: int, dim: int) -> "PureState":
        v = np.zeros(dim, dtype=complex)
        v[index] = 1.0
        return cls(v)

    def density_matrix(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()), self.dims)


@dataclass(frozen=True)
class DensityMatrix:
    """Validated, immutable density matrix.

    ``dims`` lists the subsystem dimensions; it defaults to qubits when the
    total dimension is a power of two and a single subsystem otherwise.
    """

    matrix: np.ndarray
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QuantumError(f"density matrix must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)
        if not self.dims:
            object.__setattr__(self, "dims", _infer_dims(m.shape[0]))
        if int(np.prod(self.dims)) != m.shape[0]:
            raise QuantumError("dims do not match the matrix size")
        check_density_matrix(m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_subsystems(self) -> int:
        return len(self.dims)

    @classmethod
    def from_pure(cls, amplitudes, dims: tuple[int, ...] = ()) -> "DensityMatrix":
        return PureState(amplitudes, dims).density_matrix()

    @classmethod
    def basis(cls, index: int, dim: int) -> "DensityMatrix":
        return PureState.basis(index, dim).density_matrix()

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    def populations(self) -> np.ndarray:
        return self.matrix.diagonal().real.copy()

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.matrix, other.matrix), self.dims + other.dims)


def check_density_matrix(m: np.ndarray, tol_trace=TRACE_TOL, tol_herm=HERMITIAN_TOL,
                         tol_psd=PSD_TOL) -> None:
    if not np.all(np.isfinite(m)):
        raise QuantumError("density matrix has non-finite entries")
    tr = np.trace(m)
    if abs(tr - 1.0) > tol_trace:
        raise QuantumError(f"trace {tr!r} differs from 1")
    if np.max(np.abs(m - m.conj().T)) > tol_herm:
        raise QuantumError("density matrix is not Hermitian")
    lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    if lam[0] < -tol_psd:
        raise QuantumError(f"density matrix is not PSD (min eigenvalue {lam[0]:.3e})")


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map stored as a stack of Kraus operators with shape ``(k, d, d)``."""

    kraus_ops: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kraus_ops, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[1] != k.shape[2]:
            raise QuantumError(f"Kraus stack must have shape (k, d, d), got {k.shape}")
        object.__setattr__(self, "kraus_ops", _readonly(k))
        if not np.all(np.isfinite(k)):
            raise QuantumError("Kraus operators have non-finite entries")
        dev = np.max(np.abs(completeness(k) - np.eye(k.shape[1])))
        if dev > COMPLETENESS_TOL:
            raise QuantumError(f"Kraus operators are not trace preserving (deviation {dev:.3e})")

    @property
    def dim(self) -> int:
        return self.kraus_ops.shape[1]

    @property
    def rank(self) -> int:
        return self.kraus_ops.shape[0]

    @classmethod
    def identity(cls, dim: int = 2) -> "QuantumChannel":
        return cls(np.eye(dim, dtype=complex)[None])

    @classmethod
    def from_unitary(cls, u: np.ndarray) -> "QuantumChannel":
        check_unitary(u)
        return cls(np.asarray(u, dtype=complex)[None])

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        return evolve_kraus(rho, self.kraus_ops)

    def then(self, other: "QuantumChannel") -> "QuantumChannel":
        """Channel that applies ``self`` first and ``other`` second."""
        if other.dim != self.dim:
            raise QuantumError("cannot compose channels of different dimension")
        ops = np.einsum("jab,ibc->jiac", other.kraus_ops, self.kraus_ops)
        return QuantumChannel(ops.reshape(-1, self.dim, self.dim))

    def choi(self) -> "ChoiMatrix":
        return choi_from_kraus(self)


@dataclass(frozen=True)
class ChoiMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        d2 = m.shape[0]
        d = int(round(np.sqrt(d2)))
        if m.ndim != 2 or m.shape[0] != m.shape[1] or d * d != d2:
            raise QuantumError(f"Choi matrix must be d^2 x d^2, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
            raise QuantumError("Choi matrix is not Hermitian")
        lam = np.linalg.eigvalsh(m)
        if lam[0] < -PSD_TOL:
            raise QuantumError(f"Choi matrix is not PSD (min eigenvalue {lam[0]:.3e}); map is not CP")
        tp = np.einsum("ajak->jk", m.reshape(d, d, d, d))
        if np.max(np.abs(tp - np.eye(d))) > COMPLETENESS_TOL:
            raise QuantumError("Choi matrix violates the trace-preservation condition")

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))


# ---------------------------------------------------------------------------
# Gates
# ---------------------------------------------------------------------------


def rx(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry(angle: float) -> np.ndarray:
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz(angle: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])


def phase(angle: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * angle)])


_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_H = _SQ2 * np.array([[1, 1], [1, -1]], dtype=complex)

_ONE_QUBIT_FIXED = {"I": ID2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z, "SX": _SX, "H": _H}
_ONE_QUBIT_PARAM = {"RX": rx, "RY": ry, "RZ": rz, "P": phase}
_TWO_QUBIT = {"CNOT", "CRY", "CZ", "ECR"}
GATE_NAMES = frozenset(_ONE_QUBIT_FIXED) | frozenset(_ONE_QUBIT_PARAM) | _TWO_QUBIT


def _controlled(u: np.ndarray, control: int, target: int) -> np.ndarray:
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    return embed(p0, [control], 2) + embed(p1, [control], 2) @ embed(u, [target], 2)


def _ecr(control: int, target: int) -> np.ndarray:
    zx = embed(PAULI_Z, [control], 2) @ embed(PAULI_X, [target], 2)

    def rzx(theta):
        return np.cos(theta / 2) * np.eye(4) - 1j * np.sin(theta / 2) * zx

    return rzx(np.pi / 4) @ embed(PAULI_X, [control], 2) @ rzx(-np.pi / 4)


def standard_gate(name: str, params: Sequence[float] = (), *, control: int | None = None,
                  target: int | None = None) -> np.ndarray:
    """Unitary matrix of a named gate.

    Single-qubit gates return 2x2 matrices. Two-qubit gates return 4x4 matrices
    on a two-qubit register and require ``control`` and ``target`` (qubit
    indices 0 or 1); ``CZ`` is symmetric but still takes them for uniformity.

    >>> np.allclose(standard_gate("RY", [np.pi]) @ [1, 0], [0, 1])
    True
    """
    key = name.upper()
    params = list(params)
    if key in _ONE_QUBIT_FIXED:
        if params:
            raise QuantumError(f"gate {name} takes no parameters")
        return _ONE_QUBIT_FIXED[key].copy()
    if key in _ONE_QUBIT_PARAM:
        if len(params) != 1:
            raise QuantumError(f"gate {name} takes exactly one angle")
        return _ONE_QUBIT_PARAM[key](float(params[0]))
    if key in _TWO_QUBIT:
        if control is None or target is None:
            raise QuantumError(f"gate {name} needs explicit control and target qubits")
        if {control, target} != {0, 1}:
            raise QuantumError("control and target must be the distinct qubits 0 and 1")
        expected = 1 if key == "CRY" else 0
        if len(params) != expected:
            raise QuantumError(f"gate {name} takes {expected} parameter(s)")
        if key == "CNOT":
            return _controlled(PAULI_X, control, target)
        if key == "CRY":
            return _controlled(ry(float(params[0])), control, target)
        if key == "CZ":
            return _controlled(PAULI_Z, control, target)
        return _ecr(control, target)
    raise QuantumError(f"unknown gate {name!r}")


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> None:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise QuantumError("operator must be square")
    if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > tol:
        raise QuantumError("operator is not unitary")


def equal_up_to_phase(u: np.ndarray, v: np.ndarray, tol: float = 1e-12) -> bool:
    """Normalised trace overlap ``|tr(U^dagger V)|/d >= 1 - tol``."""
    d = u.shape[0]
    return abs(np.trace(u.conj().T @ v)) / d >= 1.0 - tol


# ---------------------------------------------------------------------------
# Embedding and evolution (batch friendly)
# ---------------------------------------------------------------------------


def embed(op: np.ndarray, targets: Sequence[int], n_qubits: int) -> np.ndarray:
    """Lift an operator on ``targets`` to the full ``n_qubits`` register.

    ``op`` may carry leading batch dimensions: shape ``(..., 2**t, 2**t)``.
    The ordering of ``targets`` defines the ordering of the operator's own
    tensor factors.
    """
    op = np.asarray(op, dtype=complex)
    targets = list(targets)
    t = len(targets)
    if len(set(targets)) != t or any(q < 0 or q >= n_qubits for q in targets):
        raise QuantumError(f"invalid targets {targets} for a {n_qubits}-qubit register")
    if op.shape[-2:] != (2**t, 2**t):
        raise QuantumError(f"operator shape {op.shape[-2:]} does not act on {t} qubit(s)")
    if t == n_qubits and targets == list(range(n_qubits)):
        return op
    rest = [q for q in range(n_qubits) if q not in targets]
    batch = op.shape[:-2]
    full = np.einsum("...ab,cd->...acbd", op, np.eye(2 ** len(rest)))
    # axes currently ordered (targets..., rest...) for rows and columns
    order = targets + rest
    full = full.reshape(batch + (2,) * (2 * n_qubits))
    nb = len(batch)
    perm_rows = [nb + order.index(q) for q in range(n_qubits)]
    perm_cols = [nb + n_qubits + order.index(q) for q in range(n_qubits)]
    full = full.transpose(list(range(nb)) + perm_rows + perm_cols)
    return full.reshape(batch + (2**n_qubits, 2**n_qubits))


def evolve_unitary(rho: np.ndarray, u: np.ndarray) -> np.ndarray:
    return u @ rho @ np.conj(np.swapaxes(u, -1, -2))


def evolve_kraus(rho: np.ndarray, kraus: np.ndarray) -> np.ndarray:
    """``sum_k K_k rho K_k^dagger`` with broadcasting over leading dimensions.

    ``rho`` has shape ``(..., d, d)`` and ``kraus`` shape ``(..., k, d, d)``.
    """
    return np.einsum("...kab,...bc,...kdc->...ad", kraus, rho, np.conj(kraus))


def completeness(kraus: np.ndarray) -> np.ndarray:
    return np.einsum("...kba,...kbc->...ac", np.conj(kraus), kraus)


def _n_qubits(state: DensityMatrix) -> int:
    if any(d != 2 for d in state.dims):
        return 0
    return len(state.dims)


def _full_operator(state: DensityMatrix, op: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    targets = list(targets)
    n = _n_qubits(state)
    if n == 0:
        if targets != [0] or state.n_subsystems != 1:
            raise QuantumError("non-qubit registers only support whole-system operators")
        if op.shape != (state.dim, state.dim):
            raise QuantumError("operator dimension does not match the system")
        return op
    return embed(op, targets, n)


def apply_unitary(state: DensityMatrix, u: np.ndarray, targets: Sequence[int]) -> DensityMatrix:
    """``rho -> U rho U^dagger`` with ``u`` acting on ``targets``."""
    u = np.asarray(u, dtype=complex)
    check_unitary(u)
    full = _full_operator(state, u, targets)
    return DensityMatrix(evolve_unitary(state.matrix, full), state.dims)


def apply_channel(state: DensityMatrix, ch: QuantumChannel, targets: Sequence[int]) -> DensityMatrix:
    targets = list(targets)
    n = _n_qubits(state)
    if n and ch.dim != 2 ** len(targets):
        raise QuantumError(f"channel of dimension {ch.dim} cannot act on {len(targets)} qubit(s)")
    full = _full_operator(state, ch.kraus_ops, targets) if n else ch.kraus_ops
    if not n and ch.dim != state.dim:
        raise QuantumError("channel dimension does not match the system")
    return DensityMatrix(evolve_kraus(state.matrix, full), state.dims)


# ---------------------------------------------------------------------------
# Choi <-> Kraus
# ---------------------------------------------------------------------------


def choi_from_kraus(ch: QuantumChannel) -> ChoiMatrix:
    d = ch.dim
    vecs = ch.kraus_ops.reshape(ch.rank, d * d)
    return ChoiMatrix(np.einsum("ia,ib->ab", vecs, vecs.conj()))


def kraus_from_choi(j: ChoiMatrix, cutoff: float = KRAUS_CUTOFF) -> QuantumChannel:
    """Kraus operators from the eigendecomposition of a Choi matrix.

    Eigenvalues in ``[-PSD_TOL, cutoff]`` are treated as numerical noise and
    dropped. Anything more negative means the input is not completely
    positive.
    """
    d = j.dim
    lam, vecs = np.linalg.eigh(j.matrix)
    if lam[0] < -PSD_TOL:
        raise QuantumError(f"negative Choi eigenvalue {lam[0]:.3e}: map is not CP")
    keep = lam > cutoff
    ops = (np.sqrt(lam[keep]) * vecs[:, keep]).T.reshape(-1, d, d)
    return QuantumChannel(ops)


# ---------------------------------------------------------------------------
# Measurement and reduction
# ---------------------------------------------------------------------------


def outcome_probabilities(state: DensityMatrix, qubit: int) -> np.ndarray:
    reduced = partial_trace(state, [qubit])
    return reduced.matrix.diagonal().real.copy()


def measure_and_postselect(state: DensityMatrix, qubit: int, outcome: int
                           ) -> tuple[DensityMatrix, float]:
    """Projective Z measurement of one qubit, keeping ``outcome``.

    Returns the renormalised post-measurement state of the whole register and
    the Born probability of the outcome.
    """
    n = _n_qubits(state)
    if not n or not 0 <= qubit < n:
        raise QuantumError(f"qubit {qubit} is not part of the register")
    if outcome not in (0, 1):
        raise QuantumError("outcome must be 0 or 1")
    proj = np.zeros((2, 2), dtype=complex)
    proj[outcome, outcome] = 1.0
    p_full = embed(proj, [qubit], n)
    post = p_full @ state.matrix @ p_full
    prob = float(np.trace(post).real)
    if prob <= 1e-15:
        raise QuantumError(f"outcome {outcome} on qubit {qubit} has zero probability")
    return DensityMatrix(post / prob, state.dims), prob


def partial_trace(state: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    keep = sorted(set(keep))
    dims = state.dims
    n = len(dims)
    if not keep or any(k < 0 or k >= n for k in keep):
        raise QuantumError(f"cannot keep subsystems {keep} of a {n}-part register")
    t = state.matrix.reshape(dims + dims)
    letters = "abcdefghijklmnop"
    rows = [letters[i] for i in range(n)]
    cols = [letters[i + n] if i in keep else letters[i] for i in range(n)]
    out = [rows[i] for i in keep] + [cols[i] for i in keep]
    spec = "".join(rows) + "".join(cols) + "->" + "".join(out)
    reduced = np.einsum(spec, t)
    dk = int(np.prod([dims[i] for i in keep]))
    return DensityMatrix(reduced.reshape(dk, dk), tuple(dims[i] for i in keep))
