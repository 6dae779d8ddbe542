"""Exact decoders by class enumeration, and failure-rate estimation.

Three decision rules over the logical classes consistent with a syndrome:
most-likely class (sum of element probabilities), most-likely single error
(maximum element), and minimum free energy of the compiled spin model at a
chosen inverse temperature. The free-energy rule interpolates between the
other two: at the Nishimori point it agrees with the class-sum rule on
every syndrome, and at large beta with the single-error rule.

All decoders are deterministic functions of the syndrome. Classes with
zero probability are excluded from the decision; ties resolve to the
smallest label, except that the single-error rule first prefers the class
holding more maximisers (the large-beta limit of the free-energy rule,
where the entropy term -log(multiplicity)/beta splits otherwise equal
scores).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..codes import (Code, ORACLE_CAP, Syndrome, attainable_syndromes,
                     class_log_statistics, coset_representative,
                     logical_class_label, syndrome)
from ..mapping import INFINITE, PARTITION_CAP, build_statmech_model, free_energy
from ..noise import sample_errors
from ..pauli import PauliOperator

TIE_TOL = 1e-9
MP_BETA = 1e3


@dataclass(frozen=True)
class DecodeResult:
    """Decision of one decoder on one syndrome.

    scores[l] is the decoder's figure of merit for class l: a log class
    probability (ml), a log maximum-element probability (mp, tn), or a
    free energy (mfe). Forbidden classes carry -inf (or +inf for free
    energies) and never win. The chosen label attains the extremum.
    """

    label: int
    scores: np.ndarray
    method: str
    chi: int | None = None


def _ties(scores, best):
    """Indices whose score is within a scale-aware tolerance of best."""
    scale = max(1.0, abs(best))
    return [l for l, v in enumerate(scores)
            if np.isfinite(v) and best - v <= TIE_TOL * scale]


def _argmax_label(scores):
    finite = [v for v in scores if np.isfinite(v)]
    if not finite:
        raise ValueError("no logical class has positive probability "
                         "for this syndrome under the noise model")
    return _ties(scores, max(finite))


def class_representatives(code: Code, s: Syndrome):
    """Operators C_s·L_l for every logical label l."""
    c = coset_representative(code, s)
    return [c * rep for rep in code.logical_representatives]


def decode_ml_exact(code: Code, noise, s: Syndrome,
                    cap=ORACLE_CAP) -> DecodeResult:
    """Most likely logical class: argmax_l of log Pr(class of C_s·L_l)."""
    scores = np.array([
        class_log_statistics(code, noise, rep, cap=cap)["logsum"]
        for rep in class_representatives(code, s)
    ])
    return DecodeResult(min(_argmax_label(scores)), scores, "ml")


def decode_mp_exact(code: Code, noise, s: Syndrome,
                    cap=ORACLE_CAP) -> DecodeResult:
    """Class of the most likely single error: argmax_l of the largest
    element log probability, ties preferring higher multiplicity."""
    stats = [class_log_statistics(code, noise, rep, cap=cap)
             for rep in class_representatives(code, s)]
    scores = np.array([st["logmax"] for st in stats])
    tied = _argmax_label(scores)
    top = max(stats[l]["multiplicity"] for l in tied)
    return DecodeResult(min(l for l in tied
                            if stats[l]["multiplicity"] == top),
                        scores, "mp")


def decode_mfe(code: Code, noise, s: Syndrome, beta,
               cap=PARTITION_CAP) -> DecodeResult:
    """Minimum free energy at inverse temperature beta.

    One spin model is compiled per syndrome and rebound per label, so the
    couplings are shared and only the disorder exponents differ.
    """
    reps = class_representatives(code, s)
    model = build_statmech_model(code, noise, reps[0], beta=beta)
    scores = np.empty(len(reps))
    for l, rep in enumerate(reps):
        scores[l] = free_energy(model.rebind(rep) if l else model, cap=cap)
    tied = _argmax_label([-v if v < INFINITE else -np.inf for v in scores])
    return DecodeResult(min(tied), scores, "mfe")


# -- Monte Carlo failure rate --------------------------------------------


@dataclass(frozen=True)
class FailureRate:
    rate: float
    failures: int
    trials: int
    interval: tuple


def wilson_interval(successes: int, trials: int, z=1.959963984540054):
    """Wilson score interval for a binomial proportion (default 95%)."""
    if trials <= 0:
        raise ValueError("Wilson interval needs at least one trial")
    phat = successes / trials
    denom = 1.0 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials
                         + z * z / (4 * trials * trials)) / denom
    # the boundary cases are exact; do not let rounding lift them
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return (lo, hi)


def logical_failure_rate(decoder, code: Code, noise, trials: int,
                         rng) -> FailureRate:
    """Pr(decoder(syndrome(E)) is not the class of E) over sampled errors.

    decoder maps a Syndrome to a DecodeResult or a plain label. Decisions
    are memoised per distinct syndrome, which is sound because decoders
    are deterministic functions of the syndrome.
    """
    if trials <= 0:
        raise ValueError(f"trial count must be positive, got {trials}")
    patterns = sample_errors(noise, rng, trials)
    cache = {}
    failures = 0
    for pat in patterns:
        e = PauliOperator(pat[:, 0].astype(np.int64),
                          pat[:, 1].astype(np.int64), code.d)
        s = syndrome(code, e)
        key = tuple(int(v) for v in s.values)
        if key not in cache:
            out = decoder(s)
            cache[key] = out.label if isinstance(out, DecodeResult) else int(out)
        failures += cache[key] != logical_class_label(code, e)
    return FailureRate(failures / trials, failures, trials,
                       wilson_interval(failures, trials))


def exact_failure_probability(code: Code, noise, decide, syndromes=None,
                              cap=ORACLE_CAP):
    """Exact failure probability of a decision rule, no sampling.

    Sums Pr(class l, syndrome s) over every class the rule does not pick:
    the result is the probability that the drawn error lies outside the
    decoded class. decide maps a Syndrome to a label. By default the sum
    runs over all attainable syndromes; passing an explicit collection
    that covers every syndrome of positive probability gives the same
    answer and skips the dead ones (restricted noise leaves most
    syndromes with zero mass). Cost scales with the syndrome count times
    the stabiliser orbit, so this is a small-instance benchmark, not a
    production estimator.
    """
    total = 0.0
    for s in (attainable_syndromes(code) if syndromes is None else syndromes):
        c_s = coset_representative(code, s)
        logsums = np.array([
            class_log_statistics(code, noise, c_s * rep, cap=cap)["logsum"]
            for rep in code.logical_representatives])
        live = np.isfinite(logsums)
        if not live.any():
            continue
        lost = live.copy()
        lost[decide(s)] = False
        if lost.any():
            total += float(np.exp(logsumexp(logsums[lost])))
    return total
