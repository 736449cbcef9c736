"""Deterministic chunk-level phase labeling from gripper command traces.

A trajectory's gripper-close commands (reals in [0, 1]) are averaged per
chunk, sustained-close intervals are located, and each chunk gets one of
five semantic phase labels. Labels depend only on the gripper trace, never
on the trajectory outcome.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class PhaseLabel(Enum):
    ACTIVE_GRIP = "active_grip"
    PRE_GRASP = "pre_grasp"
    RELEASE_RAMP = "release_ramp"
    APPROACH = "approach"
    TAIL = "tail"


# Priority order for overlapping window rules (highest first).
PHASE_PRIORITY = (
    PhaseLabel.ACTIVE_GRIP,
    PhaseLabel.PRE_GRASP,
    PhaseLabel.RELEASE_RAMP,
    PhaseLabel.APPROACH,
    PhaseLabel.TAIL,
)

# Canonical ordering used for arrays indexed by phase.
PHASES = PHASE_PRIORITY


@dataclass(frozen=True)
class LabelingConfig:
    sustained_close_threshold: float = 0.75
    active_grip_threshold: float = 0.5
    pre_grasp_low: float = 0.1
    window_len: int = 3

    def __post_init__(self):
        if not (0.0 <= self.pre_grasp_low < self.active_grip_threshold
                <= self.sustained_close_threshold <= 1.0):
            raise ValueError(
                "thresholds must satisfy 0 <= pre_grasp_low < active_grip_threshold"
                " <= sustained_close_threshold <= 1"
            )
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")


@dataclass(frozen=True)
class GripperTrace:
    """Per-timestep gripper-close commands plus the chunking length."""

    commands: np.ndarray
    chunk_len: int

    def __post_init__(self):
        commands = np.asarray(self.commands, dtype=float)
        object.__setattr__(self, "commands", commands)
        if commands.ndim != 1 or commands.size == 0:
            raise ValueError("gripper trace must be a nonempty 1-D array")
        if self.chunk_len < 1:
            raise ValueError("chunk_len must be >= 1")
        if np.any(commands < 0.0) or np.any(commands > 1.0):
            raise ValueError("gripper commands must lie in [0, 1]")

    @property
    def num_chunks(self) -> int:
        return -(-self.commands.size // self.chunk_len)


def gripper_close_fraction(trace: GripperTrace) -> np.ndarray:
    """Mean close command per chunk; a trailing partial chunk averages over
    its actual timesteps."""
    length = trace.chunk_len
    commands = trace.commands
    return np.array([
        commands[j * length:(j + 1) * length].mean()
        for j in range(trace.num_chunks)
    ])


def find_sustained_intervals(g_f, threshold: float) -> list[tuple[int, int]]:
    """Maximal consecutive runs of chunks with g_f >= threshold, as inclusive
    [start, end] index pairs in increasing order."""
    g_f = np.asarray(g_f, dtype=float)
    if np.any(g_f < 0.0) or np.any(g_f > 1.0):
        raise ValueError("close fractions must lie in [0, 1]")
    closed = g_f >= threshold
    intervals = []
    start = None
    for j, flag in enumerate(closed):
        if flag and start is None:
            start = j
        elif not flag and start is not None:
            intervals.append((start, j - 1))
            start = None
    if start is not None:
        intervals.append((start, len(closed) - 1))
    return intervals


def label_phases(g_f, cfg: LabelingConfig = LabelingConfig()) -> list[PhaseLabel]:
    """Assign one phase label per chunk.

    Rules, resolved by the priority ACTIVE_GRIP > PRE_GRASP > RELEASE_RAMP >
    APPROACH > TAIL:
      - active-grip: g_f >= active_grip_threshold;
      - pre-grasp: up to window_len chunks immediately before a sustained-close
        interval, with pre_grasp_low <= g_f < active_grip_threshold;
      - release-ramp: up to window_len chunks immediately after a sustained
        interval, with g_f < active_grip_threshold;
      - tail: chunks after the last interval's release window with
        g_f < pre_grasp_low;
      - approach: everything else.

    Without any sustained interval there are no window or tail anchors, so
    only the active-grip and approach rules can fire.
    """
    g_f = np.asarray(g_f, dtype=float)
    n = g_f.size
    intervals = find_sustained_intervals(g_f, cfg.sustained_close_threshold)
    labels = [PhaseLabel.APPROACH] * n
    w = cfg.window_len

    if intervals:
        last_end = intervals[-1][1]
        for j in range(min(last_end + w + 1, n), n):
            if g_f[j] < cfg.pre_grasp_low:
                labels[j] = PhaseLabel.TAIL
    # Each pass below overrides the previous ones, implementing the priority
    # ordering from lowest to highest.
    for _, end in intervals:
        for j in range(end + 1, min(end + w + 1, n)):
            if g_f[j] < cfg.active_grip_threshold:
                labels[j] = PhaseLabel.RELEASE_RAMP
    for start, _ in intervals:
        for j in range(max(start - w, 0), start):
            if cfg.pre_grasp_low <= g_f[j] < cfg.active_grip_threshold:
                labels[j] = PhaseLabel.PRE_GRASP
    for j in range(n):
        if g_f[j] >= cfg.active_grip_threshold:
            labels[j] = PhaseLabel.ACTIVE_GRIP
    return labels


def label_trace(trace: GripperTrace, cfg: LabelingConfig = LabelingConfig()) -> list[PhaseLabel]:
    """Convenience wrapper: chunk the trace and label it in one step."""
    return label_phases(gripper_close_fraction(trace), cfg)
