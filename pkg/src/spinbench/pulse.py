"""Pulse shapes, transmission-line distortion models, phase-transient
correction, and the gradient-ascent pulse optimizer.

Units: time in microseconds, envel amplitudes in angular frequency (rad/us).
A pulse's complex samples live in its own phase frame: the real part drives
the axis selected by ``phase`` and the imaginary part the axis 90 degrees
ahead of it.  The physical in-phase/quadrature envelope is
``samples * exp(i*phase)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .qcore import IDENTITY, SIGMA_X, SIGMA_Y, SIGMA_Z, check_unitary

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PulseShape:
    """Sampled complex baseband envelope with a fixed time step.

    samples : complex Rabi amplitudes in rad/us, one per dt interval
              (values are piecewise-constant over each interval).
    dt      : time step in us (default 1 ns).
    phase   : nominal rotating-frame phase in radians.
    """

    samples: np.ndarray
    dt: float = 0.001
    phase: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("samples must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not (self.dt > 0):
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> np.ndarray:
        """Midpoint time of each sample interval."""
        return (np.arange(self.n_samples) + 0.5) * self.dt

    @property
    def area(self) -> float:
        """Integrated |envelope|, the rotation angle of an undistorted pulse
        at zero offset."""
        return float(np.sum(np.abs(self.samples)) * self.dt)

    def iq(self) -> np.ndarray:
        """Complex envelope in the physical frame (phase folded in)."""
        return self.samples * np.exp(1j * self.phase)

    def with_phase(self, phase: float) -> "PulseShape":
        return replace(self, phase=phase)


def make_gaussian(duration: float, angle: float, phase: float = 0.0,
                  dt: float = 0.001) -> PulseShape:
    """Gaussian pulse with sigma = duration/6, truncated at +-3 sigma, with
    the envelope scaled so the integrated area equals ``angle``.

    The sample count is round(duration/dt); dt must divide the duration to
    within one sample.
    """
    if not (duration > 0):
        raise ValueError("duration must be positive")
    if dt >= duration:
        raise ValueError("dt must be smaller than the pulse duration")
    n = int(round(duration / dt))
    realized = n * dt
    if abs(realized - duration) > dt * (1 + 1e-9):
        raise ValueError("dt does not divide duration to within one sample")
    t = (np.arange(n) + 0.5) * dt
    sigma = realized / 6.0
    env = np.exp(-((t - realized / 2.0) ** 2) / (2.0 * sigma**2))
    if angle == 0.0:
        samples = np.zeros(n, dtype=complex)
    else:
        samples = (angle / (np.sum(env) * dt)) * env.astype(complex)
    return PulseShape(samples=samples, dt=dt, phase=phase)


# ---------------------------------------------------------------------------
# distortion models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResonatorModel:
    """Single-pole resonator seen at baseband.

    f0_ghz       : resonance frequency (GHz)
    quality      : loaded quality factor
    detuning_mhz : carrier minus resonance frequency (MHz); a nonzero value
                   produces the quadrature phase transient.
    """

    f0_ghz: float = 10.0
    quality: float = 250.0
    detuning_mhz: float = 0.0

    def __post_init__(self):
        if not (self.quality > 0):
            raise ValueError("quality factor must be positive")
        if not (self.f0_ghz > 0):
            raise ValueError("resonance frequency must be positive")

    @property
    def tau(self) -> float:
        """Ring time constant 2Q/omega0 in us."""
        omega0 = TWO_PI * self.f0_ghz * 1000.0  # rad/us
        return 2.0 * self.quality / omega0


def one_pole_response(samples: np.ndarray, dt: float, tau: float,
                      detuning_mhz: float, ring_samples: int = 0) -> np.ndarray:
    """Response of y' = (x - y)/tau + i*2*pi*detuning*y to a piecewise-constant
    complex input, evaluated at the interval midpoints.

    Each step uses the exact zero-order-hold solution, so the filter is exact
    for piecewise-constant inputs and has unit DC gain at zero detuning.
    ``ring_samples`` zero-input samples are appended for the ringdown.
    """
    x = np.concatenate([np.asarray(samples, dtype=complex),
                        np.zeros(ring_samples, dtype=complex)])
    a = -1.0 / tau + 1j * TWO_PI * detuning_mhz
    e_full = np.exp(a * dt)
    e_half = np.exp(a * dt / 2.0)
    g_full = (e_full - 1.0) / (a * tau)
    g_half = (e_half - 1.0) / (a * tau)
    out = np.empty_like(x)
    y = 0.0 + 0.0j
    for k in range(x.size):
        out[k] = e_half * y + g_half * x[k]
        y = e_full * y + g_full * x[k]
    return out


def resonator_filter(pulse: PulseShape, model: ResonatorModel) -> PulseShape:
    """Apply the resonator's single-pole baseband filter; the output is
    extended by 5 ring time constants of ringdown."""
    ring = int(np.ceil(5.0 * model.tau / pulse.dt))
    out = one_pole_response(pulse.samples, pulse.dt, model.tau,
                            model.detuning_mhz, ring_samples=ring)
    return PulseShape(samples=out, dt=pulse.dt, phase=pulse.phase)


@dataclass(frozen=True)
class AmplifierModel:
    """Pulsed-amplifier gain/phase settling after unblanking.

    The unblank event defines t = 0; a sample at absolute time t is scaled by
    (1 - amp_droop*exp(-t/settle)) * exp(i*phase_droop*exp(-t/settle)).
    """

    settle_time: float = 0.7
    amp_droop: float = 0.1
    phase_droop: float = 0.1
    unblank_delay: float = 2.0

    def __post_init__(self):
        if not (self.settle_time > 0):
            raise ValueError("settle_time must be positive")
        if abs(self.amp_droop) >= 1 or abs(self.phase_droop) >= 1:
            raise ValueError("droop magnitudes must be < 1")

    def factor(self, t: np.ndarray) -> np.ndarray:
        decay = np.exp(-np.asarray(t, dtype=float) / self.settle_time)
        return (1.0 - self.amp_droop * decay) * np.exp(1j * self.phase_droop * decay)


def amplifier_settle(pulse_train, model: AmplifierModel):
    """Apply settling factors to a train of (start_time, PulseShape).

    Start times are absolute (unblank at t=0), must be non-decreasing and at
    least the unblank delay.
    """
    starts = [float(s) for s, _ in pulse_train]
    if any(b < a for a, b in zip(starts, starts[1:])):
        raise ValueError("pulse start times must be non-decreasing")
    if starts and min(starts) < model.unblank_delay - 1e-12:
        raise ValueError("pulse starts before the amplifier unblank delay")
    out = []
    for start, pulse in pulse_train:
        t_abs = start + pulse.times
        distorted = pulse.samples * model.factor(t_abs)
        out.append((start, PulseShape(distorted, pulse.dt, pulse.phase)))
    return out


@dataclass(frozen=True)
class Plant:
    """Everything between the waveform source and the spins."""

    resonator: ResonatorModel | None = None
    amplifier: AmplifierModel | None = None

    def start_time(self) -> float:
        return self.amplifier.unblank_delay if self.amplifier else 0.0

    def distort(self, pulse: PulseShape, start: float | None = None) -> PulseShape:
        out = pulse
        if self.resonator is not None:
            out = resonator_filter(out, self.resonator)
        if self.amplifier is not None:
            t0 = self.start_time() if start is None else start
            (_, out), = amplifier_settle([(t0, out)], self.amplifier)
        return out


# ---------------------------------------------------------------------------
# phase transient correction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PtcResult:
    pulse: PulseShape
    residuals: tuple          # plant quadrature RMS / in-phase peak, per iterate
    converged: bool
    iterations_accepted: int

    @property
    def uncorrected_residual(self) -> float:
        return self.residuals[0]

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def _quadrature_residual(out: PulseShape) -> float:
    re_peak = float(np.max(np.abs(out.samples.real)))
    if re_peak == 0.0:
        return float(np.sqrt(np.mean(out.samples.imag**2)))
    return float(np.sqrt(np.mean(out.samples.imag**2)) / re_peak)


def ptc_correct(ideal: PulseShape, plant: Plant, scale: float = 1.07,
                iterations: int = 1) -> PtcResult:
    """Iteratively pre-distort ``ideal`` so the plant output quadrature
    vanishes: each pass subtracts ``scale`` times the simulated output
    quadrature (resampled onto the input grid) from the input.

    Iterates are only accepted while the residual does not grow; on growth the
    best iterate so far is returned with ``converged=False``.
    """
    if not (scale > 0):
        raise ValueError("scale must be positive")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    current = ideal
    residuals = [_quadrature_residual(plant.distort(current))]
    accepted = 0
    converged = True
    for _ in range(iterations):
        out = plant.distort(current)
        quad = np.interp(current.times, out.times, out.samples.imag)
        trial = PulseShape(current.samples - scale * 1j * quad,
                           current.dt, current.phase)
        r_trial = _quadrature_residual(plant.distort(trial))
        if r_trial > residuals[-1] * (1.0 + 1e-12):
            converged = False
            break
        current = trial
        residuals.append(r_trial)
        accepted += 1
    return PtcResult(pulse=current, residuals=tuple(residuals),
                     converged=converged, iterations_accepted=accepted)


# ---------------------------------------------------------------------------
# GRAPE
# ---------------------------------------------------------------------------


def _step_unitaries(ux, uy, eps, dt):
    """Exact per-step propagators exp(-i*dt*H_k) for
    H_k = (eps/2) sz + (ux_k/2) sx + (uy_k/2) sy, stacked (n, 2, 2)."""
    r = np.sqrt(ux**2 + uy**2 + eps**2)
    a = 0.5 * r * dt
    c = np.cos(a)
    s = np.sin(a)
    safe = np.where(r > 0, r, 1.0)
    nx, ny, nz = ux / safe, uy / safe, eps / safe
    U = np.empty((ux.size, 2, 2), dtype=complex)
    U[:, 0, 0] = c - 1j * s * nz
    U[:, 0, 1] = -1j * s * nx - s * ny
    U[:, 1, 0] = -1j * s * nx + s * ny
    U[:, 1, 1] = c + 1j * s * nz
    return U, (r, a, c, s, nx, ny, nz)


def _step_derivatives(aux, dt, which):
    """Exact dU_k/du for u = ux ('x') or uy ('y'), stacked (n, 2, 2)."""
    r, a, c, s, nx, ny, nz = aux
    nu = nx if which == "x" else ny
    eu = np.zeros((r.size, 3))
    eu[:, 0 if which == "x" else 1] = 1.0
    n = np.stack([nx, ny, nz], axis=1)
    da = 0.5 * dt * nu
    small = r < 1e-12
    inv_r = np.where(small, 0.0, 1.0 / np.where(small, 1.0, r))
    dn = (eu - nu[:, None] * n) * inv_r[:, None]
    sig = np.array([SIGMA_X, SIGMA_Y, SIGMA_Z])
    n_sig = np.einsum("ka,aij->kij", n, sig)
    dn_sig = np.einsum("ka,aij->kij", dn, sig)
    dU = (-(s * da)[:, None, None] * IDENTITY
          - 1j * (c * da)[:, None, None] * n_sig
          - 1j * s[:, None, None] * dn_sig)
    # r -> 0 limit: dU/du = -i*(dt/2)*sigma_u
    if np.any(small):
        lim = -1j * (dt / 2.0) * (SIGMA_X if which == "x" else SIGMA_Y)
        dU[small] = lim
    return dU


def _fidelity_and_grad(ux, uy, eps, dt, target_dag, want_grad=True):
    n = ux.size
    U, aux = _step_unitaries(ux, uy, eps, dt)
    A = np.empty((n + 1, 2, 2), dtype=complex)   # A[k] = U_k ... U_1
    A[0] = IDENTITY
    for k in range(n):
        A[k + 1] = U[k] @ A[k]
    T = np.trace(A[n] @ target_dag)
    fid = abs(T) ** 2 / 4.0
    if not want_grad:
        return fid, None, None
    B = np.empty((n, 2, 2), dtype=complex)       # B[k] = U_N ... U_{k+2}
    B[n - 1] = IDENTITY
    acc = IDENTITY
    for k in range(n - 2, -1, -1):
        acc = acc @ U[k + 1]
        B[k] = acc
    # W[k] = A_{k-1} @ V† @ B_k so that dT/du_k = Tr(W_k dU_k)
    W = np.einsum("kij,kjl->kil", A[:-1] @ target_dag, B)
    grads = []
    for which in ("x", "y"):
        dU = _step_derivatives(aux, dt, which)
        dT = np.einsum("kij,kji->k", W, dU)
        grads.append(0.5 * np.real(np.conj(T) * dT))
    return fid, np.stack(grads, axis=1), T


@dataclass(frozen=True)
class GrapeResult:
    pulse: PulseShape
    fidelities: np.ndarray     # per optimization offset, in input order
    offsets: np.ndarray
    converged: bool
    iterations: int
    objective: float


def grape_optimize(target, duration: float, n_steps: int,
                   offsets=((0.0, 1.0),), max_iter: int = 500,
                   step_size: float = 50.0, seed: int = 0,
                   init: np.ndarray | None = None,
                   fidelity_goal: float = 0.9999) -> GrapeResult:
    """Gradient-ascent optimization of piecewise-constant x/y controls toward
    the weighted Hilbert-Schmidt fidelity with ``target`` over the given
    (offset rad/us, weight) pairs.

    The per-step propagators and their control derivatives are exact, so the
    analytic gradient matches central finite differences to rounding error.
    Ascent never decreases the objective: each iteration backtracks by
    halving the step until it improves.  If ``init`` is None, the controls
    start from small seeded random values (shape (n_steps, 2)).
    """
    target_dag = check_unitary(target).conj().T
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    dt = duration / n_steps
    offs = np.array([o for o, _ in offsets], dtype=float)
    wts = np.array([w for _, w in offsets], dtype=float)
    if np.any(wts < 0) or wts.sum() <= 0:
        raise ValueError("offset weights must be non-negative with positive sum")
    wts = wts / wts.sum()

    if init is None:
        rng = np.random.default_rng(seed)
        u = rng.normal(0.0, 0.5, size=(n_steps, 2))
    else:
        u = np.array(init, dtype=float)
        if u.shape != (n_steps, 2):
            raise ValueError("init must have shape (n_steps, 2)")

    def evaluate(controls, want_grad=True):
        total = 0.0
        grad = np.zeros_like(controls) if want_grad else None
        for eps, w in zip(offs, wts):
            fid, g, _ = _fidelity_and_grad(controls[:, 0], controls[:, 1],
                                           eps, dt, target_dag, want_grad)
            total += w * fid
            if want_grad:
                grad += w * g
        return total, grad

    obj, grad = evaluate(u)
    step = step_size
    iterations = 0
    converged = obj >= fidelity_goal
    while iterations < max_iter and not converged:
        improved = False
        for _ in range(40):
            trial = u + step * grad
            obj_trial, _ = evaluate(trial, want_grad=False)
            if obj_trial >= obj:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        u = trial
        obj, grad = evaluate(u)
        step = min(step * 1.5, step_size * 10.0)
        iterations += 1
        if obj >= fidelity_goal:
            converged = True

    fids = np.array([_fidelity_and_grad(u[:, 0], u[:, 1], eps, dt,
                                        target_dag, want_grad=False)[0]
                     for eps in offs])
    pulse = PulseShape(u[:, 0] + 1j * u[:, 1], dt=dt, phase=0.0)
    return GrapeResult(pulse=pulse, fidelities=fids, offsets=offs,
                       converged=converged, iterations=iterations,
                       objective=obj)


# ---------------------------------------------------------------------------
# waveform files
# ---------------------------------------------------------------------------

WAVEFORM_HEADER = ["t_us", "amp_x_rad_per_us", "amp_y_rad_per_us"]


def write_waveform(pulse: PulseShape, path) -> None:
    """CSV export of the physical-frame envelope, one row per sample."""
    iq = pulse.iq()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WAVEFORM_HEADER)
        for t, c in zip(pulse.times, iq):
            writer.writerow([f"{t:.9g}", f"{c.real:.12g}", f"{c.imag:.12g}"])


def read_waveform(path) -> PulseShape:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != WAVEFORM_HEADER:
            raise ValueError(f"unexpected waveform header: {header}")
        rows = [(float(t), float(x), float(y)) for t, x, y in reader]
    if not rows:
        raise ValueError("waveform file has no samples")
    t = np.array([r[0] for r in rows])
    samples = np.array([r[1] for r in rows]) + 1j * np.array([r[2] for r in rows])
    dt = float(np.median(np.diff(t))) if t.size > 1 else 2.0 * t[0]
    return PulseShape(samples=samples, dt=dt, phase=0.0)
