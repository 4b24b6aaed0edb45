"""The horizontal comparison-to-the-mean attack and key completion.

From a single segmented trace the attack computes the mean slot shape
and, for every sample index j, classifies each slot by comparing its
j-th value against the mean.  Each (sample index, polarity) pair yields
one full key-bit candidate; both polarities are emitted because the
physical sign of the leakage is device-dependent.

With known ground truth a candidate is scored by its relative
correctness (fraction of main-loop bits it gets right); without it,
candidates are verified by recomputing the public key.  Residual wrong
bits are brute-forced by flipping suspect positions in increasing
Hamming-weight order.

Welch's two-sample t-test over the '0'-labelled and '1'-labelled slots
is included as the designer-side leakage assessment.
"""

from __future__ import annotations

import csv
import enum
import itertools
from dataclasses import dataclass
from math import comb, inf
from typing import Optional

import numpy as np

from .curve import AffinePoint, CurveParams, Scalar, kp_point
from .traces import SlotMatrix


class Polarity(enum.Enum):
    SMALLER_IS_ONE = "smaller_is_one"
    SMALLER_IS_ZERO = "smaller_is_zero"


@dataclass(frozen=True)
class KeyCandidate:
    """One extracted bit string: slot order = key-bit processing order."""

    bits: tuple[int, ...]
    sample_index: int
    polarity: Polarity

    def complement(self) -> "KeyCandidate":
        return KeyCandidate(
            tuple(1 - b for b in self.bits), self.sample_index, self.polarity
        )


def mean_slot(matrix: SlotMatrix) -> np.ndarray:
    """Column-wise mean of all slots, computed without any key knowledge."""
    if matrix.num_slots < 2:
        raise ValueError("mean slot needs at least 2 slots")
    return matrix.slots.mean(axis=0)


def extract_candidates(matrix: SlotMatrix) -> list[KeyCandidate]:
    """One candidate per (sample index, polarity): 2 * slot_len in total.

    Bit i of the candidate at index j classifies slot i by comparing
    slots[i, j] with mean[j].  Under SMALLER_IS_ONE a strictly smaller
    value reads as '1' and ties fall into the "not smaller" branch,
    i.e. '0'; SMALLER_IS_ZERO mirrors both rules.
    """
    mean = mean_slot(matrix)
    smaller = matrix.slots < mean[np.newaxis, :]
    out = []
    for j in range(matrix.slot_len):
        bits_one = tuple(int(v) for v in smaller[:, j])
        out.append(KeyCandidate(bits_one, j, Polarity.SMALLER_IS_ONE))
    for j in range(matrix.slot_len):
        bits_zero = tuple(int(not v) for v in smaller[:, j])
        out.append(KeyCandidate(bits_zero, j, Polarity.SMALLER_IS_ZERO))
    return out


def correctness(candidate: KeyCandidate, truth_bits) -> tuple[float, list[int]]:
    """Relative correctness: matching-bit fraction plus the mismatch positions."""
    truth = tuple(truth_bits)
    if len(truth) != len(candidate.bits):
        raise ValueError(
            f"candidate has {len(candidate.bits)} bits, truth has {len(truth)}"
        )
    wrong = [i for i, (c, t) in enumerate(zip(candidate.bits, truth)) if c != t]
    delta = (len(truth) - len(wrong)) / len(truth)
    return delta, wrong


def welch_t(matrix: SlotMatrix, labels) -> np.ndarray:
    """Welch's two-sample t per cycle index between '0'- and '1'-labelled slots.

    Sign convention: t = (mean of the '0' class - mean of the '1'
    class) / sqrt(v0/n0 + v1/n1), with unbiased class variances.  Zero
    variance in both classes gives t = 0 for equal means and a signed
    infinity for unequal ones.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != matrix.num_slots:
        raise ValueError("labels must have one entry per slot")
    g0 = matrix.slots[labels == 0]
    g1 = matrix.slots[labels == 1]
    if g0.shape[0] < 2 or g1.shape[0] < 2:
        raise ValueError("each label class needs at least 2 slots")
    m0, m1 = g0.mean(axis=0), g1.mean(axis=0)
    v0 = g0.var(axis=0, ddof=1)
    v1 = g1.var(axis=0, ddof=1)
    denom = np.sqrt(v0 / g0.shape[0] + v1 / g1.shape[0])
    diff = m0 - m1
    t = np.zeros(matrix.slot_len)
    ok = denom > 0
    t[ok] = diff[ok] / denom[ok]
    degenerate = ~ok & (diff != 0)
    t[degenerate] = np.sign(diff[degenerate]) * inf
    return t


DEFAULT_WELCH_THRESHOLD = 4.5


def expand_candidate(candidate_bits, preloop_bit: int) -> Scalar:
    """Re-attach the implicit MSB '1' and the pre-loop bit to main-loop bits."""
    return Scalar.from_bits((1, preloop_bit) + tuple(candidate_bits))


def verify_candidate(
    candidate: KeyCandidate,
    g: AffinePoint,
    pub: AffinePoint,
    params: CurveParams,
    preloop_bits=(0, 1),
) -> bool:
    """True iff some expansion of the candidate reproduces the public key."""
    return recover_scalar(candidate, g, pub, params, preloop_bits) is not None


def recover_scalar(
    candidate: KeyCandidate,
    g: AffinePoint,
    pub: AffinePoint,
    params: CurveParams,
    preloop_bits=(0, 1),
) -> Optional[Scalar]:
    """The verified full scalar for this candidate, or None."""
    for pb in preloop_bits:
        k = expand_candidate(candidate.bits, pb)
        if kp_point(k, g, params) == pub:
            return k
    return None


@dataclass(frozen=True)
class BruteForceResult:
    key: Optional[Scalar]
    checks: int  # point multiplications actually performed
    budget_exhausted: bool


MAX_SUSPECTS = 24


def brute_force_complete(
    candidate: KeyCandidate,
    suspect_positions,
    g: AffinePoint,
    pub: AffinePoint,
    params: CurveParams,
    budget: int = 1 << 17,
    preloop_bits=(0, 1),
) -> BruteForceResult:
    """Flip subsets of the suspect positions until some key verifies.

    Subsets are enumerated in increasing Hamming weight (few errors are
    the most plausible), deterministically, so "first found" is well
    defined.  Every point multiplication counts against the budget;
    flipping all of s suspects with a pinned pre-loop bit costs at most
    2^s multiplications.
    """
    suspects = sorted(set(int(p) for p in suspect_positions))
    nbits = len(candidate.bits)
    if any(p < 0 or p >= nbits for p in suspects):
        raise ValueError("suspect positions outside the candidate")
    if len(suspects) > MAX_SUSPECTS:
        raise ValueError(
            f"{len(suspects)} suspects exceed the configured limit {MAX_SUSPECTS}"
        )
    checks = 0
    base = list(candidate.bits)
    for weight in range(len(suspects) + 1):
        for combo in itertools.combinations(suspects, weight):
            bits = base.copy()
            for p in combo:
                bits[p] ^= 1
            for pb in preloop_bits:
                if checks >= budget:
                    return BruteForceResult(None, checks, True)
                checks += 1
                k = expand_candidate(bits, pb)
                if kp_point(k, g, params) == pub:
                    return BruteForceResult(k, checks, False)
    return BruteForceResult(None, checks, False)


def worst_case_checks(num_suspects: int, num_preloop: int = 1) -> int:
    """Upper bound on point multiplications for a full enumeration."""
    return num_preloop * sum(comb(num_suspects, w) for w in range(num_suspects + 1))


@dataclass
class AttackReport:
    """Everything the attack produced for one segmented trace."""

    mean_slot: np.ndarray
    candidates: list[KeyCandidate]
    deltas: Optional[np.ndarray] = None           # per candidate, truth known
    wrong_positions: Optional[list[int]] = None   # of the best candidate
    best_index: Optional[int] = None
    verified: Optional[np.ndarray] = None         # per candidate, pub supplied

    @property
    def best_candidate(self) -> Optional[KeyCandidate]:
        return None if self.best_index is None else self.candidates[self.best_index]

    @property
    def best_delta(self) -> Optional[float]:
        if self.deltas is None or self.best_index is None:
            return None
        return float(self.deltas[self.best_index])

    def num_above(self, threshold: float = 0.80) -> Optional[int]:
        if self.deltas is None:
            return None
        return int(np.sum(self.deltas > threshold))

    def summary_lines(self) -> list[str]:
        """Human-readable summary mirroring the result-table columns."""
        lines = []
        if self.deltas is not None and self.best_index is not None:
            c = self.candidates[self.best_index]
            lines.append(
                "attack success as highest key correctness (corresponding clock cycle): "
                f"{self.best_delta * 100:.1f}% (cycle {c.sample_index}, {c.polarity.value})"
            )
            lines.append(
                f"key candidates with a correctness of more than 80%: {self.num_above(0.80)}"
            )
        if self.verified is not None:
            n = int(np.sum(self.verified))
            lines.append(f"candidates verified against the public key: {n}")
        if not lines:
            lines.append("no ground truth and no public key: candidates not scored")
        return lines


def evaluate(
    matrix: SlotMatrix,
    truth_bits=None,
    g: Optional[AffinePoint] = None,
    pub: Optional[AffinePoint] = None,
    params: Optional[CurveParams] = None,
) -> AttackReport:
    """Run extraction and score candidates by truth and/or verification."""
    candidates = extract_candidates(matrix)
    report = AttackReport(mean_slot=mean_slot(matrix), candidates=candidates)
    if truth_bits is not None:
        truth = tuple(truth_bits)
        deltas = np.empty(len(candidates))
        for i, c in enumerate(candidates):
            deltas[i], _ = correctness(c, truth)
        report.deltas = deltas
        report.best_index = int(np.argmax(deltas))
        _, report.wrong_positions = correctness(candidates[report.best_index], truth)
    if pub is not None:
        if g is None or params is None:
            raise ValueError("verification needs g and params alongside pub")
        verified = np.zeros(len(candidates), dtype=bool)
        for i, c in enumerate(candidates):
            verified[i] = verify_candidate(c, g, pub, params)
        report.verified = verified
        if report.best_index is None and verified.any():
            report.best_index = int(np.argmax(verified))
    return report


def report_to_csv(report: AttackReport, path, config_lines=()) -> None:
    """One row per candidate: sample index, polarity, delta, verified flag."""
    with open(path, "w", newline="") as fh:
        for line in config_lines:
            fh.write(f"# {line}\n")
        for line in report.summary_lines():
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "polarity", "delta", "verified"])
        for i, c in enumerate(report.candidates):
            delta = "" if report.deltas is None else f"{report.deltas[i]:.6f}"
            ver = "" if report.verified is None else ("yes" if report.verified[i] else "no")
            writer.writerow([c.sample_index, c.polarity.value, delta, ver])
