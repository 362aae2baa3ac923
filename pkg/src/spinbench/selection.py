"""Spin-packet selection: a narrowband 2*pi pulse plus a dephasing delay,
repeated, keeps near-resonance packets polarized along +z and scrambles the
rest, effectively narrowing the static-offset distribution."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dynamics import (
    EnsembleModel,
    NoiseModel,
    free_bloch_map_batch,
    pulse_bloch_map_batch,
)
from .errors import AmbiguousLinewidthError, SelectionFailureError
from .pulse import PulseShape, grape_optimize
from .qcore import rotation_unitary


def make_selection_pulse(duration: float = 0.4, n_steps: int = 400,
                         seed: int = 7, jitter: float = 0.05,
                         max_iter: int = 300):
    """Optimize the selection pulse: a full 2*pi x rotation for on-resonance
    spins over ``duration``.

    The optimizer is seeded from a constant drive of area 2*pi plus small
    random jitter; starting in the nutating basin matters because a trivial
    zero pulse is also a perfect "2*pi rotation" up to global phase but has
    no offset selectivity.
    """
    amp = 2.0 * math.pi / duration
    rng = np.random.default_rng(seed)
    init = np.zeros((n_steps, 2))
    init[:, 0] = amp * (1.0 + jitter * rng.standard_normal(n_steps))
    init[:, 1] = amp * jitter * rng.standard_normal(n_steps)
    target = rotation_unitary("x", 2.0 * math.pi)
    return grape_optimize(target, duration, n_steps, offsets=((0.0, 1.0),),
                          max_iter=max_iter, seed=seed, init=init)


@dataclass(frozen=True)
class SelectionConfig:
    grape_pulse: PulseShape
    delay: float = 5.0
    repeats: int = 4

    def __post_init__(self):
        if self.repeats < 0:
            raise ValueError("repeats must be >= 0")

    @property
    def total_duration(self) -> float:
        return self.repeats * (self.grape_pulse.duration + self.delay)


def run_selection(ensemble: EnsembleModel, config: SelectionConfig,
                  noise: NoiseModel | None):
    """Propagate +z through [pulse -> delay] x repeats per packet and reweight
    the ensemble by the retained z polarization.

    Transverse remnants after each delay are discarded as dephased; packets
    driven to negative retained polarization are dropped (clamped to zero
    weight).  Returns (reweighted ensemble, retained_signal), the latter being
    the signed weighted sum of retained polarization.
    """
    if noise is not None and config.total_duration > noise.T1 / 4.0:
        warnings.warn("selection sequence longer than T1/4; retained signal "
                      "will be T1-limited", stacklevel=2)
    if config.repeats == 0:
        return ensemble, 1.0
    eps, b1 = ensemble.epsilon, ensemble.b1
    A_p, b_p = pulse_bloch_map_batch(config.grape_pulse.iq(),
                                     config.grape_pulse.dt, eps, b1, noise)
    A_d, b_d = free_bloch_map_batch(config.delay, eps, noise)
    m = np.zeros((ensemble.n_packets, 3))
    m[:, 2] = 1.0
    for _ in range(config.repeats):
        m = np.einsum("pij,pj->pi", A_p, m) + b_p
        m = np.einsum("pij,pj->pi", A_d, m) + b_d
        m[:, 0] = 0.0
        m[:, 1] = 0.0
    retained = m[:, 2]
    if np.all(retained <= 0):
        raise SelectionFailureError("selection retained no positive polarization")
    retained_signal = float(ensemble.weight @ retained)
    new = ensemble.reweighted(np.clip(retained, 0.0, None),
                              provenance=ensemble.provenance + " + selection")
    return new, retained_signal


def linewidth(freq_mhz, weight, prominence: float = 0.5) -> float:
    """Full width at half maximum of a sampled single-peaked distribution,
    with linear interpolation between grid points.

    Raises AmbiguousLinewidthError when a second peak reaches
    ``prominence`` times the main peak outside the main half-height region.
    """
    f = np.asarray(freq_mhz, dtype=float)
    w = np.asarray(weight, dtype=float)
    if f.size < 3:
        raise ValueError("need at least 3 grid points")
    order = np.argsort(f)
    f, w = f[order], w[order]
    peak_idx = int(np.argmax(w))
    peak = w[peak_idx]
    if peak <= 0:
        raise ValueError("distribution has no positive weight")
    half = peak / 2.0

    above = w >= half
    runs = []
    start = None
    for i, flag in enumerate(above):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, above.size - 1))
    main = next(r for r in runs if r[0] <= peak_idx <= r[1])
    for r in runs:
        if r != main and w[r[0]:r[1] + 1].max() >= prominence * peak:
            raise AmbiguousLinewidthError("distribution is multi-modal")

    lo, hi = main
    if lo == 0 or hi == above.size - 1:
        raise AmbiguousLinewidthError("half-height crossing outside the grid")
    left = np.interp(half, [w[lo - 1], w[lo]], [f[lo - 1], f[lo]])
    right = np.interp(half, [w[hi + 1], w[hi]], [f[hi + 1], f[hi]])
    return float(right - left)
