"""Analytic incoherent-error model: gate-dependent error taxonomy over the
static-offset distribution and the resulting sum-of-exponentials decay.

One benchmarking step applies a computational gate S then a Pauli gate P.
At a fixed offset epsilon the cumulative step error strength is

    xi = 1 - |Tr(P S U_inh†)|^2 / 4,

with U_inh the faulty pulse-level realization of the step.  Because z
rotations are zero-duration frame updates, the 36 (S, P) combinations fall
into 9 strength classes; averaging over uniformly drawn gates weights class i
by w_i = (cell count)/36, and the per-offset depolarizing parameter is
p_eps = sum_i w_i * (4/3) xi_i.  The ensemble decay after n steps is then
sum_eps g(eps) (1 - p_eps)^n.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .dynamics import EnsembleModel, propagate_unitary
from .errors import ModelInconsistencyError
from .qcore import error_strength_and_p, rotation_unitary
from .rb import _GATE_DEFS, P_PARTS, S_PARTS, gate_unitary

# classification of the 36 physical (S, P) combinations into strength types;
# rows are Pauli parts, columns computational parts
_TYPE_ROWS = {
    "X180": (1, 3, 4, 2, 7, 7),
    "-X180": (3, 1, 2, 4, 7, 7),
    "Y180": (2, 4, 1, 3, 7, 7),
    "-Y180": (4, 2, 3, 1, 7, 7),
    "Z180": (6, 6, 6, 6, 8, 8),
    "I": (5, 5, 5, 5, 9, 9),
}

ERROR_TYPE_TABLE = {
    (s, p): _TYPE_ROWS[p][S_PARTS.index(s)] for p in P_PARTS for s in S_PARTS
}

TYPE_WEIGHTS = (
    Fraction(1, 9), Fraction(1, 9), Fraction(1, 9), Fraction(1, 9),
    Fraction(1, 9), Fraction(1, 9), Fraction(2, 9), Fraction(1, 18),
    Fraction(1, 18),
)

TYPE_COUNTS = {1: 4, 2: 4, 3: 4, 4: 4, 5: 4, 6: 4, 7: 8, 8: 2, 9: 2}


def classify_pair(s_part: str, p_part: str) -> int:
    """Error-type index (1..9) of a computational/Pauli combination."""
    try:
        return ERROR_TYPE_TABLE[(s_part, p_part)]
    except KeyError:
        raise ValueError(f"not a gate-set pair: ({s_part}, {p_part})") from None


@dataclass(frozen=True)
class StepPulseModel:
    """Pulse-level realization used for the faulty step propagators."""

    gate_duration: float = 0.035
    dt: float = 0.001


def step_propagator(s_part: str, p_part: str, epsilon: float,
                    model: StepPulseModel = StepPulseModel()) -> np.ndarray:
    """Faulty unitary of one step (S then P in time) at a given offset:
    Gaussian pulses for non-z gates, frame updates for z gates."""
    from .pulse import make_gaussian

    frame = 0.0
    U = np.eye(2, dtype=complex)
    for name in (s_part, p_part):
        kind, param, angle = _GATE_DEFS[name]
        if kind == "frame":
            frame += param
        elif kind == "pulse":
            pulse = make_gaussian(model.gate_duration, angle, param - frame,
                                  model.dt)
            U = propagate_unitary(pulse, epsilon) @ U
    if frame != 0.0:
        U = rotation_unitary("z", frame) @ U
    return U


def step_strengths(epsilon: float,
                   model: StepPulseModel = StepPulseModel()) -> dict:
    """xi for all 36 (S, P) combinations at one offset."""
    out = {}
    for s in S_PARTS:
        for p in P_PARTS:
            U_inh = step_propagator(s, p, epsilon, model)
            xi, _ = error_strength_and_p(gate_unitary(s), gate_unitary(p), U_inh)
            out[(s, p)] = xi
    return out


def p_epsilon(epsilon: float, model: StepPulseModel = StepPulseModel(),
              check_tol: float = 1e-8) -> float:
    """Average depolarizing parameter of one step at offset ``epsilon``.

    Every member of each strength class is evaluated and required to agree
    within ``check_tol`` (a disagreement means a convention bug, not noise).
    """
    strengths = step_strengths(epsilon, model)
    xi_by_type = {}
    for pair, xi in strengths.items():
        xi_by_type.setdefault(classify_pair(*pair), []).append(xi)
    total = 0.0
    for t, w in zip(range(1, 10), TYPE_WEIGHTS):
        values = xi_by_type[t]
        spread = max(values) - min(values)
        if spread > check_tol:
            raise ModelInconsistencyError(
                f"error type {t} members disagree by {spread:.3e}")
        total += float(w) * (4.0 / 3.0) * values[0]
    return total


def p_epsilon_grid(epsilons, model: StepPulseModel = StepPulseModel()) -> np.ndarray:
    return np.array([p_epsilon(e, model) for e in np.asarray(epsilons, dtype=float)])


def _offset_grid(g):
    if isinstance(g, EnsembleModel):
        freq, w = g.offset_marginal()
        return 2.0 * math.pi * freq, w
    eps, w = g
    eps = np.asarray(eps, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.sum() <= 0:
        raise ValueError("offset weights must have positive sum")
    return eps, w / w.sum()


def analytic_decay(n_list, g, model: StepPulseModel = StepPulseModel(),
                   p_grid=None) -> np.ndarray:
    """curve(n) = sum_eps g(eps) (1 - p_eps)^n.

    ``g`` is an (epsilons rad/us, weights) pair or an EnsembleModel (its
    offset marginal is used).  ``p_grid`` short-circuits the per-offset
    evaluation when the caller has already computed it.
    """
    eps, w = _offset_grid(g)
    p = p_epsilon_grid(eps, model) if p_grid is None else np.asarray(p_grid)
    n = np.asarray(n_list, dtype=float)
    return (w[None, :] * (1.0 - p[None, :]) ** n[:, None]).sum(axis=1)


COMPARISON_HEADER = ["n", "analytic", "mc_mean", "mc_stderr"]


def write_comparison(path, n_list, analytic, mc_mean, mc_stderr) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_HEADER)
        for row in zip(n_list, analytic, mc_mean, mc_stderr):
            writer.writerow([int(row[0]), f"{row[1]:.12g}", f"{row[2]:.12g}",
                             f"{row[3]:.12g}"])


def comparison_summary(n_list, analytic, mc_mean, mc_stderr) -> dict:
    dev = np.abs(np.asarray(analytic) - np.asarray(mc_mean))
    units = dev / np.asarray(mc_stderr)
    worst = int(np.argmax(units))
    return {
        "max_deviation_stderr_units": float(units[worst]),
        "worst_n": int(np.asarray(n_list)[worst]),
        "n_points": int(len(n_list)),
    }


def write_comparison_summary(path, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
