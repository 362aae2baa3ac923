"""Exact 2x2 complex algebra for one spin: rotations, fidelities, depolarizing.

Conventions used everywhere in this package:

* ``rotation_unitary(axis, angle)`` returns ``exp(-i*angle*sigma_axis/2)``,
  i.e. a positive angle is a right-handed rotation of the Bloch vector
  about the axis.
* States are 2x2 density matrices (trace 1, Hermitian); the Bloch vector
  ``m`` satisfies ``rho = (I + m.sigma)/2``.
* All scalars are double precision; unitarity/Hermiticity are enforced to
  1e-12 unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

_UNITARY_TOL = 1e-12


def _as_matrix(U) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    if U.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {U.shape}")
    return U


def is_unitary(U, tol: float = _UNITARY_TOL) -> bool:
    """True if U†U = 1 (entrywise within tol) and |det U| = 1 within tol."""
    U = _as_matrix(U)
    if not np.all(np.isfinite(U)):
        return False
    gram_ok = np.max(np.abs(U.conj().T @ U - IDENTITY)) <= tol
    det_ok = abs(abs(np.linalg.det(U)) - 1.0) <= tol
    return bool(gram_ok and det_ok)


def check_unitary(U, tol: float = _UNITARY_TOL) -> np.ndarray:
    U = _as_matrix(U)
    if not is_unitary(U, tol):
        raise ValueError("matrix is not unitary within tolerance")
    return U


def check_state(rho, tol: float = 1e-12) -> np.ndarray:
    """Validate a density matrix: Hermitian, trace 1, eigenvalues in [0, 1]."""
    rho = _as_matrix(rho)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("state is not Hermitian within tolerance")
    if abs(np.trace(rho).real - 1.0) > tol or abs(np.trace(rho).imag) > tol:
        raise ValueError("state trace is not 1 within tolerance")
    evals = np.linalg.eigvalsh(rho)
    if evals.min() < -1e-10 or evals.max() > 1 + 1e-10:
        raise ValueError("state eigenvalues outside [0, 1]")
    return rho


def state_from_bloch(m) -> np.ndarray:
    """Density matrix (I + m.sigma)/2 for a Bloch vector m (|m| <= 1)."""
    mx, my, mz = (float(v) for v in m)
    return 0.5 * (IDENTITY + mx * SIGMA_X + my * SIGMA_Y + mz * SIGMA_Z)


def bloch_from_state(rho) -> np.ndarray:
    rho = _as_matrix(rho)
    return np.array(
        [
            np.trace(rho @ SIGMA_X).real,
            np.trace(rho @ SIGMA_Y).real,
            np.trace(rho @ SIGMA_Z).real,
        ]
    )


def rotation_unitary(axis, angle: float) -> np.ndarray:
    """exp(-i*angle*sigma_axis/2) for axis 'x'/'y'/'z' or a Bloch 3-vector.

    A vector axis must be nonzero; it is normalized internally.
    """
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    if isinstance(axis, str):
        try:
            n = {"x": (1, 0, 0), "y": (0, 1, 0), "z": (0, 0, 1)}[axis.lower()]
        except KeyError:
            raise ValueError(f"axis must be one of x, y, z; got {axis!r}") from None
    else:
        n = np.asarray(axis, dtype=float)
        if n.shape != (3,) or not np.all(np.isfinite(n)):
            raise ValueError("axis vector must be a finite 3-vector")
        norm = np.linalg.norm(n)
        if norm == 0.0:
            raise ValueError("axis vector must be nonzero")
        n = n / norm
    nx, ny, nz = n
    half = 0.5 * angle
    sig = nx * SIGMA_X + ny * SIGMA_Y + nz * SIGMA_Z
    return np.cos(half) * IDENTITY - 1j * np.sin(half) * sig


def gate_fidelity_hs(U, V) -> float:
    """Hilbert-Schmidt gate fidelity |Tr(U V†)|^2 / 4, global-phase invariant."""
    U = check_unitary(U)
    V = check_unitary(V)
    tr = np.trace(U @ V.conj().T)
    return float(abs(tr) ** 2 / 4.0)


def error_strength_and_p(S, P, U_inh) -> tuple[float, float]:
    """Cumulative error strength and depolarizing parameter of one (S, P) step.

    The step applies S then P in time, so the ideal combined unitary is the
    matrix product P @ S.  Returns (xi, p) with

        xi = 1 - |Tr(P S U_inh†)|^2 / 4,    p = 4 xi / 3.

    p may exceed 1 (up to 4/3) for coherent pi errors.
    """
    S = check_unitary(S)
    P = check_unitary(P)
    U_inh = check_unitary(U_inh)
    xi = 1.0 - gate_fidelity_hs(P @ S, U_inh)
    # clip float dust so perfect gates report exactly zero
    if abs(xi) < 1e-15:
        xi = 0.0
    return xi, 4.0 * xi / 3.0


def apply_depolarizing(state, p: float) -> np.ndarray:
    """(1-p)*rho + (p/2)*I; contracts <sigma_z> by the factor (1-p)."""
    if not np.isfinite(p):
        raise ValueError("depolarizing parameter must be finite")
    rho = _as_matrix(state)
    return (1.0 - p) * rho + (p / 2.0) * IDENTITY


@dataclass(frozen=True)
class DepolarizingChannel:
    """Depolarizing channel with parameter p on a D-dimensional system (D=2)."""

    p: float
    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise ValueError("only the single-qubit channel (dim=2) is supported")
        if not np.isfinite(self.p):
            raise ValueError("depolarizing parameter must be finite")

    def apply(self, state) -> np.ndarray:
        return apply_depolarizing(state, self.p)

    def compose(self, other: "DepolarizingChannel") -> "DepolarizingChannel":
        """Sequential composition: 1-p = (1-p1)(1-p2)."""
        return DepolarizingChannel(1.0 - (1.0 - self.p) * (1.0 - other.p))
