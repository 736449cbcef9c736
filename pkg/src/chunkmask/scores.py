"""Success-failure action variance per phase, online score buffers, and
floored keep probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grpo import RolloutGroup
from .phases import PHASES, PhaseLabel


class GroupCollapsedError(ValueError):
    """All rewards in the group are equal, so the variance signal is empty."""


@dataclass
class PhaseScoreReport:
    """Per-phase success-failure scores for one rollout group.

    A phase gets a score only when both outcome groups contain at least one
    of its chunks; otherwise it is flagged skipped.
    """

    scores: dict = field(default_factory=dict)          # phase -> C_c
    success_chunks: dict = field(default_factory=dict)  # phase -> chunk count
    failure_chunks: dict = field(default_factory=dict)
    skipped: set = field(default_factory=set)


def compute_phase_scores(group: RolloutGroup, labels=None) -> PhaseScoreReport:
    """Success-failure action variance per phase.

    Pools the per-timestep action vectors of every phase-c chunk across
    successful trajectories, likewise across failed ones, and scores the
    phase with the Euclidean norm of the difference of the two mean vectors.

    labels optionally overrides the per-trajectory labels (list of lists,
    aligned with the group's trajectories).
    """
    if group.reward_variance == 0.0:
        raise GroupCollapsedError("group rewards have zero variance")
    if labels is None:
        labels = [t.labels for t in group.trajectories]

    pools = {}  # phase -> {True/False: [actions]}, counts
    report = PhaseScoreReport()
    for traj, traj_labels in zip(group.trajectories, labels):
        success = traj.reward > 0.5
        for k in range(traj.num_chunks):
            phase = traj_labels[k]
            entry = pools.setdefault(phase, {True: [], False: [], "n": {True: 0, False: 0}})
            entry[success].append(traj.actions[k].reshape(-1, traj.actions.shape[-1]))
            entry["n"][success] += 1

    for phase, entry in pools.items():
        report.success_chunks[phase] = entry["n"][True]
        report.failure_chunks[phase] = entry["n"][False]
        if entry["n"][True] == 0 or entry["n"][False] == 0:
            report.skipped.add(phase)
            continue
        mu_pos = np.concatenate(entry[True]).mean(axis=0)
        mu_neg = np.concatenate(entry[False]).mean(axis=0)
        report.scores[phase] = float(np.linalg.norm(mu_pos - mu_neg))
    return report


@dataclass
class PhaseScoreState:
    """Online keep-probability state: short per-phase score buffers that are
    collapsed into floored, max-normalized keep probabilities every
    refresh_window scored batches."""

    refresh_window: int = 5
    floor: float = 0.1
    phases: tuple = PHASES
    buffers: dict = None
    keep_probs: dict = None  # None until the first refresh
    steps_since_refresh: int = 0

    def __post_init__(self):
        if self.refresh_window < 1:
            raise ValueError("refresh_window must be >= 1")
        if not (0.0 < self.floor <= 1.0):
            raise ValueError("floor must lie in (0, 1]")
        if self.buffers is None:
            self.buffers = {c: [] for c in self.phases}

    def append_scores(self, report: PhaseScoreReport) -> None:
        """Append each scored phase's value to its buffer; skipped phases get
        no entry (a zero would bias the share against phases that were merely
        unobserved)."""
        for phase, value in report.scores.items():
            self.buffers[phase].append(value)
        self.steps_since_refresh += 1

    @property
    def buffers_empty(self) -> bool:
        return all(not buf for buf in self.buffers.values())

    @property
    def refresh_due(self) -> bool:
        return self.keep_probs is None or self.steps_since_refresh >= self.refresh_window

    def refresh(self) -> dict:
        """Collapse buffers into keep probabilities and reset them.

        S_c = sum of the buffer, shares are S_c / sum(S), max-normalized and
        floored at `floor`. If every S_c is zero the previous probabilities
        are retained.
        """
        sums = {c: float(sum(self.buffers[c])) for c in self.phases}
        total = sum(sums.values())
        if total > 0.0:
            shares = {c: sums[c] / total for c in self.phases}
            top = max(shares.values())
            self.keep_probs = {
                c: max(self.floor, shares[c] / top) for c in self.phases
            }
        elif self.keep_probs is None:
            # Degenerate first refresh with no signal anywhere: fall back to
            # keeping everything until scores arrive.
            self.keep_probs = {c: 1.0 for c in self.phases}
        self.buffers = {c: [] for c in self.phases}
        self.steps_since_refresh = 0
        return self.keep_probs

    def chunk_weights(self, labels: list[PhaseLabel]) -> np.ndarray:
        """Per-chunk sampling weights: each chunk inherits its phase's keep
        probability. Requires a prior refresh."""
        if self.keep_probs is None:
            raise ValueError("keep probabilities are undefined before the first refresh")
        return np.array([self.keep_probs[c] for c in labels])
