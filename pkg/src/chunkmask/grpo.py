"""Group-relative advantages, analytic Gaussian chunk policy, and loss
gradients with per-phase decomposition and variance estimates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phases import PhaseLabel


@dataclass
class ChunkedTrajectory:
    """One rollout: per-chunk observations and actions plus the gripper trace,
    phase labels, and binary reward.

    observations: (N, F); actions: (N, L, D); chunk_indices tracks the
    original chunk positions so compacted trajectories stay traceable.
    """

    observations: np.ndarray
    actions: np.ndarray
    gripper: np.ndarray
    labels: list[PhaseLabel]
    reward: float
    chunk_indices: np.ndarray = None
    trajectory_id: int = 0

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        n = self.observations.shape[0]
        if self.actions.shape[0] != n or len(self.labels) != n:
            raise ValueError("observations, actions, and labels must cover the same chunks")
        if self.chunk_indices is None:
            self.chunk_indices = np.arange(n)
        else:
            self.chunk_indices = np.asarray(self.chunk_indices, dtype=int)

    @property
    def num_chunks(self) -> int:
        return self.observations.shape[0]


@dataclass
class RolloutGroup:
    """G trajectories for one task prompt with group-relative advantages."""

    trajectories: list[ChunkedTrajectory]
    epsilon: float = 1e-6
    advantages: np.ndarray = None
    # Group size of the uncompacted source group; kept through shrinking so
    # the masked loss normalizes identically to the full loss.
    group_size: int = None

    def __post_init__(self):
        if self.group_size is None:
            self.group_size = len(self.trajectories)
        if self.advantages is None:
            self.advantages = group_advantages(self.rewards, self.epsilon)
        else:
            self.advantages = np.asarray(self.advantages, dtype=float)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.trajectories], dtype=float)

    @property
    def reward_variance(self) -> float:
        r = self.rewards
        return float(np.mean((r - r.mean()) ** 2))


def group_advantages(rewards, epsilon: float = 1e-6) -> np.ndarray:
    """Reward standardized against the group's population mean and standard
    deviation: A_i = (r_i - mean) / (std + epsilon)."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size < 2:
        raise ValueError("need at least 2 rollouts to form group-relative advantages")
    mu = rewards.mean()
    sigma = np.sqrt(np.mean((rewards - mu) ** 2))
    return (rewards - mu) / (sigma + epsilon)


@dataclass
class GaussianChunkPolicy:
    """Linear-Gaussian chunk policy.

    The action-mean for a chunk is obs @ weights, a flattened (L*D,) vector;
    every action entry carries the same standard deviation sigma. Log
    probabilities and their parameter gradients are analytic, so gradient
    claims can be checked exactly.
    """

    weights: np.ndarray  # (F, L*D)
    sigma: float
    chunk_len: int
    action_dim: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.sigma <= 0.0:
            raise ValueError("policy sigma must be positive")
        if self.weights.shape[1] != self.chunk_len * self.action_dim:
            raise ValueError("weights must map features to chunk_len * action_dim means")

    @property
    def num_features(self) -> int:
        return self.weights.shape[0]

    def mean(self, obs: np.ndarray) -> np.ndarray:
        """Flattened action mean(s); obs may be a single (F,) vector or a
        batch (..., F)."""
        return np.asarray(obs, dtype=float) @ self.weights

    def sample(self, obs: np.ndarray, rng: np.random.Generator,
               noise_scale: float = 1.0) -> np.ndarray:
        """Draw actions around the mean; noise_scale rescales sigma (1.0 is
        on-policy sampling, 0.0 is greedy)."""
        mu = self.mean(obs)
        return mu + noise_scale * self.sigma * rng.standard_normal(mu.shape)

    def log_prob(self, obs: np.ndarray, actions: np.ndarray) -> float:
        """Log density of a factorized Gaussian over all L*D action entries."""
        delta = np.asarray(actions, dtype=float).reshape(-1) - self.mean(obs)
        m = delta.size
        return float(
            -0.5 * np.dot(delta, delta) / self.sigma**2
            - m * np.log(self.sigma)
            - 0.5 * m * np.log(2.0 * np.pi)
        )

    def logprob_grad(self, obs: np.ndarray, actions: np.ndarray):
        """(log probability, gradient wrt weights) for one chunk.

        The score is outer(obs, (a - mu) / sigma^2), shape (F, L*D).
        """
        obs = np.asarray(obs, dtype=float)
        delta = np.asarray(actions, dtype=float).reshape(-1) - self.mean(obs)
        grad = np.outer(obs, delta / self.sigma**2)
        m = delta.size
        logp = (
            -0.5 * np.dot(delta, delta) / self.sigma**2
            - m * np.log(self.sigma)
            - 0.5 * m * np.log(2.0 * np.pi)
        )
        return float(logp), grad

    def copy(self) -> "GaussianChunkPolicy":
        return GaussianChunkPolicy(self.weights.copy(), self.sigma,
                                   self.chunk_len, self.action_dim)


def _stack_chunks(group: RolloutGroup):
    """Flatten a group into (obs, actions, advantages, labels) chunk arrays."""
    obs, acts, advs, labels = [], [], [], []
    for traj, a_i in zip(group.trajectories, group.advantages):
        for k in range(traj.num_chunks):
            obs.append(traj.observations[k])
            acts.append(traj.actions[k].reshape(-1))
            advs.append(a_i)
            labels.append(traj.labels[k])
    if not obs:
        return None
    return np.array(obs), np.array(acts), np.array(advs), labels


def _score_terms(group: RolloutGroup, policy: GaussianChunkPolicy):
    """Per-chunk advantage-weighted score terms A_i * dlogpi/dtheta, flattened
    to (M, F*L*D), plus the chunk phase labels."""
    stacked = _stack_chunks(group)
    if stacked is None:
        return np.zeros((0, policy.weights.size)), []
    obs, acts, advs, labels = stacked
    delta = (acts - obs @ policy.weights) / policy.sigma**2  # (M, L*D)
    scores = obs[:, :, None] * delta[:, None, :]  # (M, F, L*D)
    terms = advs[:, None] * scores.reshape(len(labels), -1)
    return terms, labels


def full_loss(group: RolloutGroup, policy: GaussianChunkPolicy) -> float:
    """Value of the group objective -(1/G) sum_i A_i sum_k log pi(a_k|s_k)."""
    total = 0.0
    for traj, a_i in zip(group.trajectories, group.advantages):
        for k in range(traj.num_chunks):
            total += a_i * policy.log_prob(traj.observations[k], traj.actions[k])
    return -total / group.group_size


def full_loss_grad(group: RolloutGroup, policy: GaussianChunkPolicy,
                   old_policy: GaussianChunkPolicy = None,
                   clip_ratio: float = None) -> np.ndarray:
    """Gradient of the group objective -E_i[sum_k A_i log pi(a|s)] wrt the
    policy weights, flattened.

    With clip_ratio set, applies PPO-style ratio clipping against old_policy:
    clipped chunks contribute zero gradient.
    """
    if clip_ratio is None:
        terms, _ = _score_terms(group, policy)
        return -terms.sum(axis=0) / group.group_size
    if old_policy is None:
        raise ValueError("clip_ratio requires an old_policy for the ratio")
    grad = np.zeros(policy.weights.size)
    for traj, a_i in zip(group.trajectories, group.advantages):
        for k in range(traj.num_chunks):
            obs, act = traj.observations[k], traj.actions[k]
            logp, g = policy.logprob_grad(obs, act)
            ratio = np.exp(logp - old_policy.log_prob(obs, act))
            surrogate = ratio * a_i
            clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * a_i
            if surrogate <= clipped:  # unclipped branch is active
                grad -= a_i * ratio * g.reshape(-1)
    return grad / group.group_size


def masked_loss_grad(compacted: RolloutGroup, policy: GaussianChunkPolicy) -> np.ndarray:
    """Gradient of the masked objective: same form as full_loss_grad over the
    selected chunks only, with no 1/p_c importance weights. Normalization uses
    the source group size carried through shrinking."""
    terms, _ = _score_terms(compacted, policy)
    return -terms.sum(axis=0) / compacted.group_size


def reweighted_loss_grad(compacted: RolloutGroup, policy: GaussianChunkPolicy,
                         keep_probs: dict) -> np.ndarray:
    """Importance-weighted unbiased counterpart of masked_loss_grad: each
    selected chunk is scaled by 1 / p_phase. Used for variance comparisons,
    not as the training update."""
    grad = np.zeros(policy.weights.size)
    for traj, a_i in zip(compacted.trajectories, compacted.advantages):
        for k in range(traj.num_chunks):
            _, g = policy.logprob_grad(traj.observations[k], traj.actions[k])
            grad -= a_i * g.reshape(-1) / keep_probs[traj.labels[k]]
    return grad / compacted.group_size


@dataclass
class PhaseGradientStats:
    """Per-phase mean score terms, phase gradients, and scalar variances.

    mean_scores[c] is the mean of the per-chunk terms A_i * dlogpi; the phase
    gradient is -(count_c / G) * mean_scores[c], so that the phase gradients
    sum to the full loss gradient. variances[c] is the trace of the sample
    covariance of the terms (absent for phases with < 2 chunks).
    """

    mean_scores: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    variances: dict = field(default_factory=dict)
    group_size: int = 1

    def phase_gradient(self, phase: PhaseLabel) -> np.ndarray:
        return -self.counts[phase] * self.mean_scores[phase] / self.group_size

    @property
    def phases(self):
        return list(self.mean_scores)

    def total_gradient(self) -> np.ndarray:
        return sum(self.phase_gradient(c) for c in self.mean_scores)


def phase_gradient_stats(group: RolloutGroup, policy: GaussianChunkPolicy) -> PhaseGradientStats:
    """Phase-wise decomposition of the group gradient plus per-phase scalar
    variance of the advantage-weighted score terms."""
    terms, labels = _score_terms(group, policy)
    stats = PhaseGradientStats(group_size=group.group_size)
    for phase in set(labels):
        idx = [j for j, c in enumerate(labels) if c is phase]
        block = terms[idx]
        stats.mean_scores[phase] = block.mean(axis=0)
        stats.counts[phase] = len(idx)
        if len(idx) >= 2:
            centered = block - block.mean(axis=0)
            stats.variances[phase] = float(
                (centered**2).sum() / (len(idx) - 1)
            )
    return stats
