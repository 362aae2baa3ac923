"""Single-qubit Clifford randomized benchmarking.

Gate set: computational pi/2 rotations S in {X90, -X90, Y90, -Y90, Z90, -Z90}
interleaved with Pauli pi rotations P in {X180, -X180, Y180, -Y180, Z180, I}.
A Clifford is a Pauli followed (in time) by a computational gate; a sequence
truncated at length l reads

    P1 S1 P2 S2 ... Pl Sl P(l+1)  R  P(l+2)   [spin-echo readout]

in time order.  Non-z gates are realized as Gaussian pulses whose phase picks
the rotation axis; z rotations are zero-duration rotating-frame updates that
shift the phases of all subsequent pulses and rotate the detection axis.

Signals are the spin-echo amplitude (pi/2 -- delay -- pi -- delay) normalized
by the same readout on the thermal state, so preparation and measurement
imperfections land in the fit constant alpha.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    EnsembleModel,
    NoiseModel,
    _relax_factors,
    _rotation_matrices,
    free_bloch_map_batch,
    pulse_bloch_map_batch,
    unitary_bloch_map,
)
from .errors import DegenerateFitError, SpinbenchError
from .pulse import Plant, make_gaussian, ptc_correct
from .qcore import SIGMA_X, SIGMA_Y, SIGMA_Z, rotation_unitary

HALF_PI = math.pi / 2.0
_SIG = (SIGMA_X, SIGMA_Y, SIGMA_Z)

S_PARTS = ("X90", "-X90", "Y90", "-Y90", "Z90", "-Z90")
P_PARTS = ("X180", "-X180", "Y180", "-Y180", "Z180", "I")

# gate name -> (kind, pulse phase or frame angle, rotation angle)
_GATE_DEFS = {
    "X90": ("pulse", 0.0, HALF_PI),
    "-X90": ("pulse", math.pi, HALF_PI),
    "Y90": ("pulse", HALF_PI, HALF_PI),
    "-Y90": ("pulse", 3 * HALF_PI, HALF_PI),
    "Z90": ("frame", HALF_PI, 0.0),
    "-Z90": ("frame", -HALF_PI, 0.0),
    "X180": ("pulse", 0.0, math.pi),
    "-X180": ("pulse", math.pi, math.pi),
    "Y180": ("pulse", HALF_PI, math.pi),
    "-Y180": ("pulse", 3 * HALF_PI, math.pi),
    "Z180": ("frame", math.pi, 0.0),
    "I": ("pulse", 0.0, 0.0),   # zero-amplitude 35 ns slot, not a frame no-op
}


def gate_unitary(name: str) -> np.ndarray:
    """Ideal 2x2 unitary of a named gate."""
    try:
        kind, param, angle = _GATE_DEFS[name]
    except KeyError:
        raise ValueError(f"unknown gate {name!r}") from None
    if kind == "idle":
        return np.eye(2, dtype=complex)
    if kind == "frame":
        return rotation_unitary("z", param)
    axis = (math.cos(param), math.sin(param), 0.0)
    return rotation_unitary(axis, angle)


def _conjugation_map(U) -> dict:
    """axis -> (axis, sign) under sigma -> U sigma U†, snapped to integers.

    Raises if U does not map Paulis to signed Paulis within 1e-9.
    """
    out = {}
    for a in range(3):
        row = np.array([np.trace(_SIG[b] @ U @ _SIG[a] @ U.conj().T).real / 2.0
                        for b in range(3)])
        b = int(np.argmax(np.abs(row)))
        sign = 1 if row[b] > 0 else -1
        snapped = np.zeros(3)
        snapped[b] = sign
        if np.max(np.abs(row - snapped)) > 1e-9:
            raise SpinbenchError("gate does not conjugate Paulis to Paulis")
        out[a] = (b, sign)
    return out


_CONJ = {name: _conjugation_map(gate_unitary(name)) for name in _GATE_DEFS}


def track_pauli(gates, start=(2, 1)):
    """Propagate a signed Pauli (axis index, sign) through gates in time order."""
    axis, sign = start
    for name in gates:
        axis, s = _CONJ[name][axis]
        sign *= s
    return axis, sign


@dataclass(frozen=True)
class CliffordGate:
    """One Clifford: a computational part times a Pauli part, realized in time
    as the Pauli pulse followed by the computational pulse."""

    s_part: str
    p_part: str

    def __post_init__(self):
        if self.s_part not in S_PARTS or self.p_part not in P_PARTS:
            raise ValueError(f"not a gate-set pair: ({self.s_part}, {self.p_part})")

    @property
    def unitary(self) -> np.ndarray:
        return gate_unitary(self.s_part) @ gate_unitary(self.p_part)

    @property
    def gates(self) -> tuple:
        """Time-ordered realization."""
        return (self.p_part, self.s_part)


def clifford_table():
    """The 48 group elements: 6 signed pi/2 generators times 8 signed Pauli
    exponentials, the +-z and +-identity Pauli factors collapsing onto the
    physical Z180 and I realizations."""
    p_labels = ("X180", "-X180", "Y180", "-Y180", "Z180", "Z180", "I", "I")
    return tuple(CliffordGate(s, p) for s in S_PARTS for p in p_labels)


_LABEL_PAIRS = tuple((s, p) for s in S_PARTS for p in P_PARTS)


def _recovery_candidates():
    table = {0: [], 1: [], 2: []}
    for s, p in _LABEL_PAIRS:
        g = CliffordGate(s, p)
        conj = _conjugation_map(g.unitary)
        for axis in range(3):
            if conj[axis][0] == 2:
                table[axis].append(g)
    return {axis: tuple(v) for axis, v in table.items()}


_RECOVERY = _recovery_candidates()


def compute_recovery(prefix_gates, rng=None, final_pauli=None):
    """Choose a recovery Clifford for a tracked sequence prefix.

    Tracks sigma_z through ``prefix_gates``, picks uniformly at random among
    the 36 physical gate-set pairs whose Clifford maps the tracked axis back
    onto +-z, and returns (recovery, readout_phase_offset, final_sign); the
    phase offset (0 or pi) makes the measured eigenvalue positive after the
    optional ``final_pauli``.
    """
    axis, sign = track_pauli(prefix_gates)
    candidates = _RECOVERY[axis]
    if rng is None:
        rng = np.random.default_rng(0)
    recovery = candidates[int(rng.integers(len(candidates)))]
    tail = list(recovery.gates)
    if final_pauli is not None:
        tail.append(final_pauli)
    axis2, sign2 = track_pauli(tail, start=(axis, sign))
    if axis2 != 2:
        raise SpinbenchError("recovery failed to map the tracked Pauli to z")
    readout_phase = 0.0 if sign2 > 0 else math.pi
    return recovery, readout_phase, sign2


# ---------------------------------------------------------------------------
# suite generation
# ---------------------------------------------------------------------------

PAPER_L_SET = (1, 2, 7, 9, 10, 12, 14, 18, 20, 21, 25, 28, 32, 57, 60, 66,
               74, 97, 110, 128)

_STREAM_GATES = 1
_STREAM_SEQUENCE = 2


def _rng_for(seed: int, *key) -> np.random.Generator:
    """Deterministic child generator from the root seed and an integer key
    path (the documented seed-splitting rule)."""
    ss = np.random.SeedSequence(entropy=int(seed),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class ReadoutConfig:
    delay: float = 0.7
    base_phase: float = 0.0
    phase_steps: int | None = None   # e.g. 16384 for AWG phase resolution

    def quantize(self, phase: float) -> float:
        if not self.phase_steps:
            return phase
        step = 2.0 * math.pi / self.phase_steps
        return round(phase / step) * step


@dataclass(frozen=True)
class RBConfig:
    l_set: tuple = PAPER_L_SET
    n_g: int = 7
    n_p: int = 14
    seed: int = 2024
    gate_duration: float = 0.035
    dt: float = 0.001
    noise: NoiseModel | None = field(default_factory=NoiseModel)
    ensemble: EnsembleModel | None = None
    plant: Plant | None = None
    ptc_scale: float | None = None
    ptc_iterations: int = 1
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    spam: str = "echo"               # "echo" (full physics) or "ideal"
    inject_error: object = None      # optional fixed 2x2 unitary after each Clifford

    def __post_init__(self):
        ls = tuple(int(v) for v in self.l_set)
        if not ls or list(ls) != sorted(set(ls)) or min(ls) < 1:
            raise ValueError("l_set must be sorted, unique, positive")
        if self.n_g < 1 or self.n_p < 1:
            raise ValueError("sequence counts must be >= 1")
        if self.spam not in ("echo", "ideal"):
            raise ValueError("spam must be 'echo' or 'ideal'")
        object.__setattr__(self, "l_set", ls)

    @property
    def L(self) -> int:
        return self.l_set[-1]

    @property
    def n_l(self) -> int:
        return len(self.l_set)


@dataclass(frozen=True)
class RBSequence:
    """One randomized sequence: interleaved prefix through P(l+1), recovery,
    final Pauli, and the sign-correcting readout phase offset (0 or pi,
    relative to the configured base phase)."""

    prefix: tuple
    recovery: CliffordGate
    final_pauli: str
    readout_phase: float
    expected_sign: int
    l: int
    g_index: int
    p_index: int

    @property
    def gates(self) -> tuple:
        return self.prefix + self.recovery.gates + (self.final_pauli,)


def generate_suite(config: RBConfig):
    """All N_g x N_l x N_p sequences.  Truncations of one gate set share the
    computational prefix; every random draw comes from a child generator keyed
    by (seed, stream, indices), so the suite is reproducible element by
    element and independent of evaluation order.
    """
    sequences = []
    for g in range(config.n_g):
        rng_g = _rng_for(config.seed, _STREAM_GATES, g)
        s_gates = [S_PARTS[i] for i in rng_g.integers(6, size=config.L)]
        for li, l in enumerate(config.l_set):
            for p in range(config.n_p):
                rng_s = _rng_for(config.seed, _STREAM_SEQUENCE, g, li, p)
                paulis = [P_PARTS[i] for i in rng_s.integers(6, size=l + 2)]
                prefix = []
                for k in range(l):
                    prefix.append(paulis[k])
                    prefix.append(s_gates[k])
                prefix.append(paulis[l])
                recovery, phase, _ = compute_recovery(
                    prefix, rng=rng_s, final_pauli=paulis[l + 1])
                sequences.append(RBSequence(
                    prefix=tuple(prefix), recovery=recovery,
                    final_pauli=paulis[l + 1], readout_phase=phase,
                    expected_sign=1, l=l, g_index=g, p_index=p))
    return tuple(sequences)


# ---------------------------------------------------------------------------
# compilation: gates -> pulse schedule + detection axis
# ---------------------------------------------------------------------------


def _round_phase(phase: float) -> float:
    return round(math.remainder(phase, 2.0 * math.pi), 12)


@dataclass(frozen=True)
class CompiledSequence:
    ops: tuple          # ("pulse", angle, phase) | ("delay", dur) | ("unitary", tag)
    detect: tuple       # Bloch detection vector
    init_mz: float
    l: int
    g_index: int
    p_index: int
    gate_time: float    # pulse-train duration, readout excluded


def compile_sequence(seq: RBSequence, config: RBConfig) -> CompiledSequence:
    """Lower a gate sequence to pulses.

    Frame z-gates cost zero time: each subsequent pulse phase is shifted by
    minus the accumulated frame angle and the leftover frame rotation is
    folded into the detection axis.  In ``spam="ideal"`` mode the recovery
    and final Pauli are exact (folded into the detection axis, which becomes
    the tracked prefix Pauli) and <sigma_z> is read out directly instead of
    via the spin echo; the interleaved prefix itself stays physical.
    """
    ideal_spam = config.spam == "ideal"
    ops = []
    frame = 0.0
    gate_time = 0.0
    bulk = seq.prefix if ideal_spam else seq.gates
    init_mz = 1.0

    inject = config.inject_error is not None
    for name in bulk:
        kind, param, angle = _GATE_DEFS[name]
        if kind == "frame":
            frame += param
        elif kind == "pulse":
            # a zero-area slot is pure idle; its phase is irrelevant
            phase = _round_phase(param - frame) if angle != 0.0 else 0.0
            ops.append(("pulse", angle, phase))
            gate_time += config.gate_duration
        if inject and name in S_PARTS:
            ops.append(("unitary", "inject"))

    if ideal_spam:
        axis, sign = track_pauli(seq.prefix)
        e = [0.0, 0.0, 0.0]
        e[axis] = float(sign)
        c, s = math.cos(-frame), math.sin(-frame)
        detect = (c * e[0] - s * e[1], s * e[0] + c * e[1], e[2])
    else:
        ro = config.readout
        phase = ro.quantize(ro.base_phase + seq.readout_phase - frame)
        ops.append(("pulse", HALF_PI, _round_phase(phase)))
        ops.append(("delay", ro.delay))
        ops.append(("pulse", math.pi, _round_phase(phase)))
        ops.append(("delay", ro.delay))
        det = HALF_PI + phase - seq.readout_phase
        detect = (math.cos(det), math.sin(det), 0.0)
    return CompiledSequence(tuple(ops), detect, init_mz, seq.l,
                            seq.g_index, seq.p_index, gate_time)


def _reference_ops(config: RBConfig) -> CompiledSequence:
    """Readout alone on the thermal state (the normalization reference)."""
    ro = config.readout
    phase = ro.quantize(ro.base_phase)
    ops = (("pulse", HALF_PI, _round_phase(phase)),
           ("delay", ro.delay),
           ("pulse", math.pi, _round_phase(phase)),
           ("delay", ro.delay))
    det = HALF_PI + phase
    detect = (math.cos(det), math.sin(det), 0.0)
    return CompiledSequence(ops, detect, 1.0, 0, -1, -1, 0.0)


# ---------------------------------------------------------------------------
# simulation engines
# ---------------------------------------------------------------------------


def _packets(config: RBConfig):
    if config.ensemble is None:
        return np.array([0.0]), np.array([1.0]), np.array([1.0])
    e = config.ensemble
    return e.epsilon, e.b1, e.weight


def _build_map_cache(keys, config, eps, b1):
    """Affine Bloch maps for every distinct op, batched over packets."""
    npk = eps.size
    A = np.empty((len(keys), npk, 3, 3))
    b = np.empty((len(keys), npk, 3))
    for i, key in enumerate(keys):
        if key == ("id",):
            A[i] = np.eye(3)
            b[i] = 0.0
        elif key[0] == "pulse":
            _, angle, phase = key
            pulse = make_gaussian(config.gate_duration, angle, phase, config.dt)
            A[i], b[i] = pulse_bloch_map_batch(pulse.iq(), config.dt, eps, b1,
                                               config.noise)
        elif key[0] == "delay":
            A[i], b[i] = free_bloch_map_batch(key[1], eps, config.noise)
        elif key[0] == "unitary":
            A[i] = unitary_bloch_map(np.asarray(config.inject_error,
                                                dtype=complex))
            b[i] = 0.0
        else:
            raise SpinbenchError(f"unknown op key {key}")
    return A, b


def _run_compiled_fast(compiled, config, eps, b1, weights):
    """Lockstep propagation with per-gate cached affine maps; sequences of
    equal op count run as one batch, shorter ones pad with the identity.
    Valid for undistorted pulses (each gate's drive is self-contained)."""
    keys = [("id",)]
    index = {("id",): 0}
    seq_ops = []
    for cs in compiled:
        ids = []
        for op in cs.ops:
            if op not in index:
                index[op] = len(keys)
                keys.append(op)
            ids.append(index[op])
        seq_ops.append(ids)
    A_cache, b_cache = _build_map_cache(keys, config, eps, b1)

    signals = np.empty(len(compiled))
    by_len = {}
    for i, ids in enumerate(seq_ops):
        by_len.setdefault(len(ids), []).append(i)
    for n_ops, members in by_len.items():
        idx = np.array([seq_ops[i] for i in members], dtype=int)
        m = np.zeros((len(members), eps.size, 3))
        m[:, :, 2] = np.array([compiled[i].init_mz for i in members])[:, None]
        for j in range(n_ops):
            sel = idx[:, j]
            m = np.einsum("spij,spj->spi", A_cache[sel], m) + b_cache[sel]
        avg = np.einsum("spi,p->si", m, weights)
        det = np.array([compiled[i].detect for i in members])
        signals[members] = np.einsum("si,si->s", avg, det)
    return signals


def _assemble_waveform(cs: CompiledSequence, config: RBConfig, pulse_cache):
    segs = []
    for op in cs.ops:
        if op[0] == "pulse":
            _, angle, phase = op
            segs.append(pulse_cache[angle] * np.exp(1j * phase))
        elif op[0] == "delay":
            segs.append(np.zeros(int(round(op[1] / config.dt)), dtype=complex))
        else:
            raise SpinbenchError("waveform engine cannot realize exact-unitary ops")
    return np.concatenate(segs) if segs else np.zeros(0, dtype=complex)


def _filter_batch(wave_mat, dt, resonator):
    """Row-wise single-pole resonator response (the one_pole_response
    recurrence vectorized over sequences)."""
    tau = resonator.tau
    a = -1.0 / tau + 1j * 2.0 * math.pi * resonator.detuning_mhz
    e_full = np.exp(a * dt)
    e_half = np.exp(a * dt / 2.0)
    g_full = (e_full - 1.0) / (a * tau)
    g_half = (e_half - 1.0) / (a * tau)
    out = np.empty_like(wave_mat)
    y = np.zeros(wave_mat.shape[0], dtype=complex)
    for k in range(wave_mat.shape[1]):
        x = wave_mat[:, k]
        out[:, k] = e_half * y + g_half * x
        y = e_full * y + g_full * x
    return out


def _run_compiled_waveform(compiled, config, eps, b1, weights):
    """Full-physics propagation through each sequence's distorted drive:
    the resonator filter acts on the concatenated input waveform (so pulse
    ringdown spills into the following gate and the echo delays), then
    amplifier settling multiplies on absolute time from the unblank event."""
    plant = config.plant
    dt = config.dt
    base = {0.0: make_gaussian(config.gate_duration, 0.0, 0.0, dt).samples}
    for angle in (HALF_PI, math.pi):
        pulse = make_gaussian(config.gate_duration, angle, 0.0, dt)
        if config.ptc_scale:
            # PTC targets the (time-invariant) resonator transient; the
            # amplifier droop is what the unblank delay is for.
            reso_only = Plant(resonator=plant.resonator)
            pulse = ptc_correct(pulse, reso_only, scale=config.ptc_scale,
                                iterations=config.ptc_iterations).pulse
        base[angle] = pulse.samples

    t0 = plant.start_time()
    waves = [_assemble_waveform(cs, config, base) for cs in compiled]
    lengths = np.array([w.size for w in waves], dtype=int)
    ring = 0
    if plant.resonator is not None:
        ring = int(np.ceil(5.0 * plant.resonator.tau / dt))
    # echo sequences end on a long zero-drive delay, so detection happens at
    # the nominal sequence end; without a readout, let the tail ring down.
    end = lengths if config.spam == "echo" else lengths + ring
    n_max = int(end.max())
    wave_mat = np.zeros((len(waves), n_max), dtype=complex)
    for i, w in enumerate(waves):
        wave_mat[i, :w.size] = w
    if plant.resonator is not None:
        wave_mat = _filter_batch(wave_mat, dt, plant.resonator)
    if plant.amplifier is not None:
        t_abs = t0 + (np.arange(n_max) + 0.5) * dt
        wave_mat = wave_mat * plant.amplifier.factor(t_abs)[None, :]

    e2, e1 = _relax_factors(dt, config.noise)
    decay = np.array([e2, e2, e1])
    beq = np.array([0.0, 0.0, 1.0 - e1])
    avg = np.zeros((len(compiled), 3))
    for p in range(eps.size):
        m = np.zeros((len(compiled), 3))
        m[:, 2] = [cs.init_mz for cs in compiled]
        final = np.zeros_like(m)
        done = np.zeros(len(compiled), dtype=bool)
        for k in range(n_max):
            c = wave_mat[:, k]
            half = _rotation_matrices(b1[p] * c.real, b1[p] * c.imag,
                                      np.full(c.size, eps[p]), dt / 2.0)
            if config.noise is None:
                m = np.einsum("sij,sj->si", half @ half, m)
            else:
                step = half @ (decay[:, None] * half)
                m = np.einsum("sij,sj->si", step, m) + half @ beq
            hit = (end == k + 1) & ~done
            if np.any(hit):
                final[hit] = m[hit]
                done[hit] = True
        final[~done] = m[~done]
        avg += weights[p] * final
    det = np.array([cs.detect for cs in compiled])
    return np.einsum("si,si->s", avg, det)


# ---------------------------------------------------------------------------
# the experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayCurve:
    lengths: np.ndarray
    seq_time_us: np.ndarray
    mean_sz: np.ndarray
    stderr: np.ndarray
    n_seqs: np.ndarray

    def select(self, l_min=None, l_max=None) -> "DecayCurve":
        mask = np.ones(self.lengths.size, dtype=bool)
        if l_min is not None:
            mask &= self.lengths >= l_min
        if l_max is not None:
            mask &= self.lengths <= l_max
        return DecayCurve(self.lengths[mask], self.seq_time_us[mask],
                          self.mean_sz[mask], self.stderr[mask],
                          self.n_seqs[mask])


def simulate_rb(config: RBConfig) -> DecayCurve:
    """Run the full protocol and return the per-length decay curve."""
    return simulate_suite(generate_suite(config), config)


def simulate_suite(suite, config: RBConfig) -> DecayCurve:
    eps, b1, weights = _packets(config)
    compiled = [compile_sequence(seq, config) for seq in suite]
    if config.plant is None:
        signals = _run_compiled_fast(compiled, config, eps, b1, weights)
    else:
        signals = _run_compiled_waveform(compiled, config, eps, b1, weights)

    if config.spam == "echo":
        ref_cs = _reference_ops(config)
        if config.plant is None:
            ref = _run_compiled_fast([ref_cs], config, eps, b1, weights)[0]
        else:
            ref = _run_compiled_waveform([ref_cs], config, eps, b1, weights)[0]
        if abs(ref) < 1e-9:
            raise SpinbenchError("readout reference signal vanished")
        signals = signals / ref

    lengths = np.array(sorted(config.l_set), dtype=int)
    mean = np.empty(lengths.size)
    stderr = np.empty(lengths.size)
    times = np.empty(lengths.size)
    counts = np.empty(lengths.size, dtype=int)
    for i, l in enumerate(lengths):
        sel = [j for j, cs in enumerate(compiled) if cs.l == l]
        vals = signals[sel]
        mean[i] = vals.mean()
        stderr[i] = vals.std(ddof=1) / math.sqrt(vals.size) if vals.size > 1 else 0.0
        times[i] = float(np.mean([compiled[j].gate_time for j in sel]))
        counts[i] = vals.size
    return DecayCurve(lengths, times, mean, stderr, counts)


# ---------------------------------------------------------------------------
# decay fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    alpha: float
    p: float
    alpha_stderr: float
    p_stderr: float
    fit_lengths: tuple
    residuals: tuple      # per point, in units of its standard error
    n_points: int

    @property
    def error_per_gate(self) -> float:
        return self.p / 2.0

    @property
    def error_per_gate_stderr(self) -> float:
        return self.p_stderr / 2.0

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "p": self.p,
            "error_per_gate": self.error_per_gate,
            "alpha_stderr": self.alpha_stderr,
            "p_stderr": self.p_stderr,
            "error_per_gate_stderr": self.error_per_gate_stderr,
            "fit_range": [int(self.fit_lengths[0]), int(self.fit_lengths[-1])],
            "fit_lengths": [int(v) for v in self.fit_lengths],
            "residuals": list(self.residuals),
            "n_points": self.n_points,
        }


def fit_decay(curve: DecayCurve, fit_range=None) -> FitResult:
    """Two-parameter least squares of f_l = alpha*(1-p)^l by Gauss-Newton
    with step halving; ``fit_range`` is an optional (l_min, l_max) pair.

    Points are weighted by inverse variance when every standard error is
    positive (absolute-sigma convention for the parameter uncertainties);
    otherwise unit weights apply and the covariance is scaled by the residual
    variance.
    """
    sub = curve if fit_range is None else curve.select(*fit_range)
    l = sub.lengths.astype(float)
    y = np.asarray(sub.mean_sz, dtype=float)
    se = np.asarray(sub.stderr, dtype=float)
    if l.size < 3:
        raise DegenerateFitError("need at least 3 points in the fit range")
    weighted = bool(np.all(se > 0))
    sigma = se if weighted else np.ones_like(y)

    pos = y > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(l[pos], np.log(y[pos]), 1)
        p0 = float(np.clip(1.0 - math.exp(slope), -0.5, 0.95))
        a0 = float(np.clip(math.exp(intercept), 1e-6, 10.0))
    else:
        p0, a0 = 0.1, max(float(np.max(np.abs(y))), 1e-6)
    theta = np.array([a0, p0])

    def model(th):
        return th[0] * (1.0 - th[1]) ** l

    def cost(th):
        r = (y - model(th)) / sigma
        return float(r @ r)

    best = cost(theta)
    for _ in range(200):
        a, p = theta
        q = 1.0 - p
        f = a * q**l
        r = (y - f) / sigma
        J = np.column_stack([q**l / sigma, -a * l * q ** (l - 1.0) / sigma])
        JtJ = J.T @ J
        if not np.all(np.isfinite(JtJ)) or np.linalg.cond(JtJ) > 1e14:
            raise DegenerateFitError("singular normal equations")
        step = np.linalg.solve(JtJ, J.T @ r)
        scale = 1.0
        improved = False
        for _ in range(30):
            trial = theta + scale * step
            if trial[1] < 1.0:
                c_trial = cost(trial)
                if c_trial <= best:
                    improved = True
                    break
            scale *= 0.5
        if not improved:
            break
        moved = float(np.max(np.abs(scale * step) / (np.abs(theta) + 1e-12)))
        theta = trial
        best = c_trial
        if moved < 1e-12:
            break

    a, p = theta
    q = 1.0 - p
    J = np.column_stack([q**l / sigma, -a * l * q ** (l - 1.0) / sigma])
    resid = (y - model(theta)) / sigma
    dof = max(l.size - 2, 1)
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise DegenerateFitError("singular normal equations") from exc
    if not weighted:
        chi2 = float(resid @ resid)
        cov = cov * (chi2 / dof)
        rms = math.sqrt(chi2 / dof)
        resid_units = resid / rms if rms > 0 else resid
    else:
        resid_units = resid
    return FitResult(alpha=float(a), p=float(p),
                     alpha_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
                     p_stderr=float(math.sqrt(max(cov[1, 1], 0.0))),
                     fit_lengths=tuple(int(v) for v in sub.lengths),
                     residuals=tuple(float(v) for v in resid_units),
                     n_points=int(l.size))


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

DECAY_HEADER = ["l", "seq_time_us", "mean_sz", "stderr", "n_seqs"]


def write_decay(curve: DecayCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DECAY_HEADER)
        for i in range(curve.lengths.size):
            writer.writerow([int(curve.lengths[i]),
                             f"{curve.seq_time_us[i]:.9g}",
                             f"{curve.mean_sz[i]:.12g}",
                             f"{curve.stderr[i]:.12g}",
                             int(curve.n_seqs[i])])


def read_decay(path) -> DecayCurve:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != DECAY_HEADER:
            raise ValueError(f"unexpected decay header: {header}")
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError("decay file has no rows")
    arr = np.array([[float(v) for v in row] for row in rows])
    return DecayCurve(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], arr[:, 3],
                      arr[:, 4].astype(int))


def write_fit(fit: FitResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(fit.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
