"""Time-domain propagation of spin packets and ensemble modeling.

One spin packet is labelled by a static offset ``epsilon`` (angular
frequency, rad/us) and a drive scale ``b1``.  Under a pulse with physical
envelope c(t) = cx + i*cy (rad/us) the packet Hamiltonian is

    H(t) = (epsilon/2) sz + (b1/2) (cx(t) sx + cy(t) sy),

piecewise-constant over each sample.  Relaxation is amplitude damping toward
+z at rate 1/T1 plus pure dephasing at rate 1/T2 - 1/(2 T1), applied by
second-order (Strang) splitting: unitary half step, relaxation full step,
unitary half step.

States are propagated as Bloch vectors, which preserves trace and
Hermiticity exactly; density-matrix wrappers convert at the boundary.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError
from .pulse import PulseShape
from .qcore import bloch_from_state, check_state, state_from_bloch

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class NoiseModel:
    """Relaxation times in us.  T2star feeds the offset distribution only;
    the Lindblad propagators use T1 and T2."""

    T1: float = 160.0
    T2: float = 5.0
    T2star: float = 0.060

    def __post_init__(self):
        if not (self.T1 > 0 and self.T2 > 0 and self.T2star > 0):
            raise ValueError("relaxation times must be positive")
        if self.T2 > 2.0 * self.T1 * (1 + 1e-12):
            raise ValueError("T2 must not exceed 2*T1")
        if self.T2star > self.T2 * (1 + 1e-12):
            raise ValueError("T2star must not exceed T2")


# ---------------------------------------------------------------------------
# Bloch-space propagators
# ---------------------------------------------------------------------------


def _rotation_matrices(vx, vy, vz, dt):
    """Batched Rodrigues rotation for exp(-i*dt*(v.sigma)/2): the Bloch
    vector rotates right-handed by |v|*dt about v."""
    vx, vy, vz = np.broadcast_arrays(vx, vy, vz)
    theta = np.sqrt(vx**2 + vy**2 + vz**2) * dt
    safe = np.where(theta > 0, theta / dt, 1.0)
    nx, ny, nz = vx / safe, vy / safe, vz / safe
    c = np.cos(theta)
    s = np.sin(theta)
    k = 1.0 - c
    R = np.empty(theta.shape + (3, 3))
    R[..., 0, 0] = c + k * nx * nx
    R[..., 0, 1] = k * nx * ny - s * nz
    R[..., 0, 2] = k * nx * nz + s * ny
    R[..., 1, 0] = k * ny * nx + s * nz
    R[..., 1, 1] = c + k * ny * ny
    R[..., 1, 2] = k * ny * nz - s * nx
    R[..., 2, 0] = k * nz * nx - s * ny
    R[..., 2, 1] = k * nz * ny + s * nx
    R[..., 2, 2] = c + k * nz * nz
    return R


def _relax_factors(dt, noise: NoiseModel | None):
    if noise is None:
        return 1.0, 1.0
    return math.exp(-dt / noise.T2), math.exp(-dt / noise.T1)


def pulse_bloch_map_batch(iq: np.ndarray, dt: float, eps: np.ndarray,
                          b1: np.ndarray, noise: NoiseModel | None):
    """Affine Bloch map (A, b) of a full pulse for a batch of packets.

    iq  : complex physical-frame envelope, shape (n_samples,)
    eps : offsets (rad/us), shape (n_packets,)
    b1  : drive scales, shape (n_packets,)
    Returns A with shape (n_packets, 3, 3) and b with shape (n_packets, 3).
    """
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    b1 = np.atleast_1d(np.asarray(b1, dtype=float))
    npk = eps.size
    A = np.broadcast_to(np.eye(3), (npk, 3, 3)).copy()
    b = np.zeros((npk, 3))
    e2, e1 = _relax_factors(dt, noise)
    decay = np.array([e2, e2, e1])
    beq = np.array([0.0, 0.0, 1.0 - e1])
    for c in iq:
        half = _rotation_matrices(b1 * c.real, b1 * c.imag, eps, dt / 2.0)
        if noise is None:
            step = half @ half
            A = step @ A
            b = np.einsum("pij,pj->pi", step, b)
        else:
            step = half @ (decay[:, None] * half)
            A = step @ A
            b = np.einsum("pij,pj->pi", step, b) + half @ beq
    return A, b


def free_bloch_map_batch(duration: float, eps: np.ndarray,
                         noise: NoiseModel | None):
    """Exact affine Bloch map of zero-drive evolution (closed-form Bloch
    solution: z-precession commutes with the relaxation contraction)."""
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if noise is None:
        e2, e1 = 1.0, 1.0
    else:
        e2 = np.exp(-duration / noise.T2)
        e1 = np.exp(-duration / noise.T1)
    c = np.cos(eps * duration)
    s = np.sin(eps * duration)
    A = np.zeros((eps.size, 3, 3))
    A[:, 0, 0] = e2 * c
    A[:, 0, 1] = -e2 * s
    A[:, 1, 0] = e2 * s
    A[:, 1, 1] = e2 * c
    A[:, 2, 2] = e1
    b = np.zeros((eps.size, 3))
    b[:, 2] = 1.0 - e1
    return A, b


def unitary_bloch_map(U) -> np.ndarray:
    """3x3 Bloch rotation of a 2x2 unitary: R_ab = Tr(sigma_a U sigma_b U†)/2."""
    from .qcore import PAULIS

    U = np.asarray(U, dtype=complex)
    sig = [PAULIS["x"], PAULIS["y"], PAULIS["z"]]
    R = np.empty((3, 3))
    for a in range(3):
        for bb in range(3):
            R[a, bb] = np.trace(sig[a] @ U @ sig[bb] @ U.conj().T).real / 2.0
    return R


def propagate_unitary(pulse: PulseShape, epsilon: float,
                      b1_scale: float = 1.0) -> np.ndarray:
    """Noiseless propagator of a pulse at one offset: the ordered product of
    exact per-sample exponentials of H_k."""
    iq = pulse.iq()
    dt = pulse.dt
    U = np.eye(2, dtype=complex)
    for c in iq:
        vx = b1_scale * c.real
        vy = b1_scale * c.imag
        r = math.sqrt(vx * vx + vy * vy + epsilon * epsilon)
        a = 0.5 * r * dt
        if r == 0.0:
            continue
        nx, ny, nz = vx / r, vy / r, epsilon / r
        ca, sa = math.cos(a), math.sin(a)
        Uk = np.array(
            [
                [ca - 1j * sa * nz, -1j * sa * nx - sa * ny],
                [-1j * sa * nx + sa * ny, ca + 1j * sa * nz],
            ]
        )
        U = Uk @ U
    return U


def propagate_lindblad(state, pulse: PulseShape, epsilon: float,
                       b1_scale: float, noise: NoiseModel | None):
    """Evolve a density matrix through a pulse with Lindblad relaxation."""
    m = bloch_from_state(check_state(state))
    A, b = pulse_bloch_map_batch(pulse.iq(), pulse.dt,
                                 np.array([epsilon]), np.array([b1_scale]),
                                 noise)
    return state_from_bloch(A[0] @ m + b[0])


def free_evolve(state, duration: float, epsilon: float,
                noise: NoiseModel | None):
    """Zero-drive evolution for ``duration`` us (closed form)."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    m = bloch_from_state(check_state(state))
    A, b = free_bloch_map_batch(duration, np.array([epsilon]), noise)
    return state_from_bloch(A[0] @ m + b[0])


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LorentzianOffsets:
    """Lorentzian offset spectrum with FWHM = 1/(pi*T2star) MHz, truncated."""

    t2star: float = 0.060
    n_points: int = 101
    span_fwhms: float = 5.0

    @property
    def fwhm_mhz(self) -> float:
        return 1.0 / (np.pi * self.t2star)


@dataclass(frozen=True)
class OffsetTable:
    freq_mhz: tuple
    weight: tuple


@dataclass(frozen=True)
class GaussianB1:
    """Gaussian drive-scale distribution around 1 with the given relative
    FWHM, truncated at +-3 sigma."""

    rel_fwhm: float = 2.1 / 31.7
    n_points: int = 21
    span_sigmas: float = 3.0


@dataclass(frozen=True)
class B1Table:
    """Measured nutation-frequency distribution; scales are normalized by the
    peak (maximum-weight) nutation frequency."""

    nutation_mhz: tuple
    weight: tuple


@dataclass(frozen=True)
class EnsembleModel:
    """Discrete weighted grid of spin packets (epsilon rad/us, b1 scale)."""

    epsilon: np.ndarray
    b1: np.ndarray
    weight: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=float)
        b1 = np.asarray(self.b1, dtype=float)
        w = np.asarray(self.weight, dtype=float)
        if not (eps.shape == b1.shape == w.shape) or eps.ndim != 1 or eps.size == 0:
            raise ValueError("epsilon, b1, weight must be equal-length 1-D arrays")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights must have positive sum")
        if abs(total - 1.0) > 1e-9:
            w = w / total
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "weight", w)

    @property
    def n_packets(self) -> int:
        return int(self.epsilon.size)

    def offset_marginal(self):
        """(freq_mhz, weight) marginal over the drive-scale axis."""
        vals, inv = np.unique(self.epsilon, return_inverse=True)
        w = np.zeros(vals.size)
        np.add.at(w, inv, self.weight)
        return vals / TWO_PI, w

    def reweighted(self, factors, provenance: str | None = None) -> "EnsembleModel":
        w = self.weight * np.asarray(factors, dtype=float)
        return EnsembleModel(self.epsilon, self.b1, np.clip(w, 0.0, None),
                             provenance or self.provenance)


def _offset_component(spec):
    if spec is None:
        return np.array([0.0]), np.array([1.0]), "delta(eps=0)"
    if isinstance(spec, LorentzianOffsets):
        half = spec.span_fwhms * spec.fwhm_mhz
        f = np.linspace(-half, half, spec.n_points)
        gamma = spec.fwhm_mhz / 2.0
        w = gamma**2 / (f**2 + gamma**2)
        return TWO_PI * f, w / w.sum(), f"lorentzian(T2*={spec.t2star}us)"
    if isinstance(spec, OffsetTable):
        f = np.asarray(spec.freq_mhz, dtype=float)
        w = np.asarray(spec.weight, dtype=float)
        if f.size == 0 or w.sum() <= 0 or np.any(w < 0):
            raise ValueError("offset table is empty or not normalizable")
        return TWO_PI * f, w / w.sum(), "offset-table"
    raise ValueError(f"unknown offset spec {spec!r}")


def _b1_component(spec):
    if spec is None:
        return np.array([1.0]), np.array([1.0]), "delta(b1=1)"
    if isinstance(spec, GaussianB1):
        sigma = spec.rel_fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        s = np.linspace(1.0 - spec.span_sigmas * sigma,
                        1.0 + spec.span_sigmas * sigma, spec.n_points)
        w = np.exp(-((s - 1.0) ** 2) / (2.0 * sigma**2))
        return s, w / w.sum(), f"gaussian-b1(fwhm={spec.rel_fwhm:.4g})"
    if isinstance(spec, B1Table):
        nut = np.asarray(spec.nutation_mhz, dtype=float)
        w = np.asarray(spec.weight, dtype=float)
        if nut.size == 0 or w.sum() <= 0 or np.any(w < 0):
            raise ValueError("B1 table is empty or not normalizable")
        peak = nut[np.argmax(w)]
        if peak <= 0:
            raise ValueError("B1 table peak nutation must be positive")
        return nut / peak, w / w.sum(), "b1-table"
    raise ValueError(f"unknown B1 spec {spec!r}")


@dataclass(frozen=True)
class EnsembleSpec:
    offsets: object = None   # None | LorentzianOffsets | OffsetTable
    b1: object = None        # None | GaussianB1 | B1Table


def build_ensemble(spec: EnsembleSpec) -> EnsembleModel:
    """Tensor-grid ensemble over (epsilon, b1) with product weights."""
    eps, we, tag_e = _offset_component(spec.offsets)
    s, ws, tag_s = _b1_component(spec.b1)
    EE, SS = np.meshgrid(eps, s, indexing="ij")
    WW = np.outer(we, ws)
    return EnsembleModel(EE.ravel(), SS.ravel(), WW.ravel(),
                         provenance=f"{tag_e} x {tag_s}")


def load_offset_table(path) -> OffsetTable:
    return OffsetTable(*_read_two_column_csv(path, ("freq_mhz", "weight")))


def load_b1_table(path) -> B1Table:
    return B1Table(*_read_two_column_csv(path, ("nutation_mhz", "weight")))


def _read_two_column_csv(path, expected_header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != list(expected_header):
            raise ValueError(f"expected header {expected_header}, got {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    if not rows:
        raise ValueError("table file has no rows")
    return tuple(r[0] for r in rows), tuple(r[1] for r in rows)


def write_distribution(path, freq_mhz, weight, header=("freq_mhz", "weight")):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for f, w in zip(freq_mhz, weight):
            writer.writerow([f"{f:.9g}", f"{w:.12g}"])


# ---------------------------------------------------------------------------
# Rabi nutation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RabiTrace:
    times: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def simulate_rabi(ensemble: EnsembleModel, drive_mhz: float,
                  max_duration: float, noise: NoiseModel | None,
                  dt: float = 0.001) -> RabiTrace:
    """Ensemble-averaged <sigma> under a continuous x drive of the given
    Rabi frequency, starting from +z."""
    n = int(round(max_duration / dt))
    omega = TWO_PI * drive_mhz
    eps = ensemble.epsilon
    b1 = ensemble.b1
    e2, e1 = _relax_factors(dt, noise)
    decay = np.array([e2, e2, e1])
    beq = np.array([0.0, 0.0, 1.0 - e1])
    half = _rotation_matrices(b1 * omega, 0.0 * b1, eps, dt / 2.0)
    step = half @ (decay[:, None] * half)
    bias = half @ beq
    m = np.zeros((ensemble.n_packets, 3))
    m[:, 2] = 1.0
    w = ensemble.weight
    out = np.empty((n + 1, 3))
    out[0] = w @ m
    for k in range(n):
        m = np.einsum("pij,pj->pi", step, m) + bias
        out[k + 1] = w @ m
    times = np.arange(n + 1) * dt
    return RabiTrace(times, out[:, 0], out[:, 1], out[:, 2])


def estimate_b1_distribution(trace: RabiTrace):
    """Windowed Fourier magnitude of the Rabi trace, normalized as a
    distribution over nutation frequency (MHz).

    Raises InsufficientDataError if the trace covers fewer than 4 periods of
    the dominant oscillation.
    """
    z = np.asarray(trace.sz, dtype=float)
    dt = trace.dt
    x = (z - z.mean()) * np.hanning(z.size)
    spec = np.abs(np.fft.rfft(x))
    freq = np.fft.rfftfreq(z.size, dt)  # 1/us = MHz
    spec[0] = 0.0
    peak = freq[int(np.argmax(spec))]
    duration = trace.times[-1] - trace.times[0]
    if peak <= 0 or duration * peak < 4.0:
        raise InsufficientDataError(
            "Rabi trace covers fewer than 4 oscillation periods")
    weight = spec / spec.sum()
    return freq, weight


def ensemble_average(per_packet_values, ensemble: EnsembleModel) -> float:
    """Weighted mean over packets.  Standard errors across randomized
    sequences are the caller's business."""
    vals = np.asarray(per_packet_values, dtype=float)
    if vals.shape != ensemble.weight.shape:
        raise ValueError("one value per packet required")
    return float(ensemble.weight @ vals)
