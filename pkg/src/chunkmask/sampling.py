"""Fixed-budget weighted sampling without replacement over chunks, and the
physical shrinking of a rollout group to its selected chunks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grpo import ChunkedTrajectory, RolloutGroup

# Guards imported traces with corrupted (denormal) probabilities; weights are
# still required to be strictly positive.
_WEIGHT_CLAMP = 1e-12


@dataclass(frozen=True)
class SelectionMask:
    """Selected chunk indices for one trajectory; budget = min(B, N)."""

    trajectory_id: int
    indices: np.ndarray  # sorted, unique
    budget: int

    def __post_init__(self):
        indices = np.sort(np.asarray(self.indices, dtype=int))
        object.__setattr__(self, "indices", indices)
        if indices.size != self.budget:
            raise ValueError("mask size must equal the trajectory budget")
        if indices.size != np.unique(indices).size:
            raise ValueError("mask indices must be unique")


def weighted_sample_without_replacement(weights, m: int, rng,
                                        trajectory_id: int = 0) -> SelectionMask:
    """Draw min(m, N) distinct indices with sequential probability
    proportional to the remaining weights.

    Implemented with weight-scaled exponential keys (take the m smallest),
    which is distributionally identical to sequential draws without
    replacement and runs in linear time. Deterministic given the generator
    state.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ValueError("weights must be a nonempty 1-D array")
    if np.any(weights <= 0.0):
        raise ValueError("all sampling weights must be positive")
    if m < 1:
        raise ValueError("sample size must be >= 1")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    weights = np.maximum(weights, _WEIGHT_CLAMP)
    m = min(m, weights.size)
    keys = rng.exponential(size=weights.size) / weights
    selected = np.argpartition(keys, m - 1)[:m]
    return SelectionMask(trajectory_id=trajectory_id,
                         indices=np.sort(selected), budget=m)


def inclusion_probabilities(weights, m: int) -> np.ndarray:
    """Exact inclusion probabilities of sequential weighted sampling without
    replacement, by enumeration over ordered draw sequences. Exponential in m;
    intended as a small-instance oracle."""
    from itertools import permutations

    weights = np.asarray(weights, dtype=float)
    n = weights.size
    m = min(m, n)
    probs = np.zeros(n)
    for seq in permutations(range(n), m):
        p = 1.0
        remaining = weights.sum()
        for idx in seq:
            p *= weights[idx] / remaining
            remaining -= weights[idx]
        for idx in seq:
            probs[idx] += p
    return probs


def shrink_batch(group: RolloutGroup, masks: list[SelectionMask]) -> RolloutGroup:
    """Compact a group to its selected chunks.

    Every retained chunk keeps its observation, actions, phase label,
    original chunk index, and the trajectory's advantage; the compacted group
    remembers the source group size so loss normalization is unchanged.
    """
    if len(masks) != len(group.trajectories):
        raise ValueError("need exactly one mask per trajectory")
    compacted = []
    for traj, mask in zip(group.trajectories, masks):
        if mask.indices.size and mask.indices[-1] >= traj.num_chunks:
            raise ValueError(
                f"mask for trajectory {mask.trajectory_id} references chunk "
                f"{int(mask.indices[-1])} out of {traj.num_chunks}"
            )
        idx = mask.indices
        compacted.append(ChunkedTrajectory(
            observations=traj.observations[idx],
            actions=traj.actions[idx],
            gripper=traj.gripper,
            labels=[traj.labels[k] for k in idx],
            reward=traj.reward,
            chunk_indices=traj.chunk_indices[idx],
            trajectory_id=traj.trajectory_id,
        ))
    return RolloutGroup(trajectories=compacted, epsilon=group.epsilon,
                        advantages=group.advantages.copy(),
                        group_size=group.group_size)
