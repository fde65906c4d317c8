"""Coarse-to-fine parameter search run independently by each agent.

Every agent walks the same recursion: a coarse layer spanning the full
(eps, min_pts) box for its partition, then progressively finer layers
centered on the best parameters seen so far.  Per-agent results merge
back into one labeling by offsetting cluster ids.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .config import RunConfig
from .dataset import Dataset, LabeledSubset
from .dbscan_core import NOISE, ClusterResult, DbscanParams, run_dbscan
from .search_env import (
    Bounds,
    ClusterEvaluator,
    EpisodeTrace,
    PolicyNetworks,
    ReplayBuffer,
    RewardConfig,
    SearchEnv,
    TD3Hyper,
    run_episode,
)

TraceSink = Callable[[int, int, EpisodeTrace], None]


@dataclass(frozen=True)
class SearchLayer:
    """One refinement level of the parameter space."""

    index: int
    bounds: Bounds
    outer: Bounds  # layer-0 box, never left by any refinement
    theta_eps: float
    theta_minpts: int
    start: DbscanParams
    pi_eps: int
    pi_minpts: int


@dataclass(frozen=True)
class AgentResult:
    """Outcome of one agent's search over its partition.

    ``assignment`` and the per-round assignments are local: entry i
    labels the point ``partition[i]``.  ``round_rewards`` is the
    best-so-far labeled-subset score after each clustering round.
    """

    partition_id: int
    partition: np.ndarray
    params: DbscanParams
    reward: float
    assignment: np.ndarray
    round_assignments: List[np.ndarray]
    round_rewards: List[float]
    rounds_used: int
    layer_history: Tuple[DbscanParams, ...]
    stop_reasons: Dict[str, int]


@dataclass(frozen=True)
class MergedResult:
    final: ClusterResult
    round_assignments: List[np.ndarray]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def layer_zero_bounds(dim: int, partition_size: int,
                      minpts_cap_fraction: float) -> Bounds:
    """Full search box: eps up to the normalized diameter sqrt(dim),
    min_pts up to a fraction of the partition size (at least 1)."""
    cap = max(1, _round_half_up(minpts_cap_fraction * partition_size))
    return Bounds(0.0, math.sqrt(dim), 1, cap)


def first_layer(dim: int, partition_size: int, config: RunConfig) -> SearchLayer:
    bounds = layer_zero_bounds(
        dim, partition_size, config.resolved_minpts_cap_fraction())
    theta_eps = (bounds.eps_hi - bounds.eps_lo) / config.pi_eps
    theta_minpts = max((bounds.minpts_hi - 1) // config.pi_minpts, 1)
    start = DbscanParams(
        (bounds.eps_lo + bounds.eps_hi) / 2.0,
        _round_half_up((bounds.minpts_lo + bounds.minpts_hi) / 2.0),
    )
    return SearchLayer(0, bounds, bounds, theta_eps, theta_minpts, start,
                       config.pi_eps, config.pi_minpts)


def next_layer(prev: SearchLayer, p_o: DbscanParams) -> SearchLayer:
    """Refine around the best parameters of the previous layer.

    Step sizes shrink by the per-axis split counts; the new box spans
    half the split count of steps either side of p_o, clipped so no
    layer ever escapes the layer-0 box.
    """
    theta_eps = prev.theta_eps / prev.pi_eps
    theta_minpts = max(_round_half_up(prev.theta_minpts / prev.pi_minpts), 1)
    half_eps = (prev.pi_eps / 2.0) * theta_eps
    half_minpts = (prev.pi_minpts / 2.0) * theta_minpts
    outer = prev.outer
    bounds = Bounds(
        max(outer.eps_lo, p_o.eps - half_eps),
        min(outer.eps_hi, p_o.eps + half_eps),
        max(outer.minpts_lo, _round_half_up(p_o.min_pts - half_minpts)),
        min(outer.minpts_hi, _round_half_up(p_o.min_pts + half_minpts)),
    )
    return SearchLayer(prev.index + 1, bounds, outer, theta_eps,
                       theta_minpts, p_o, prev.pi_eps, prev.pi_minpts)


def run_agent(partition: np.ndarray, dataset: Dataset, labeled: LabeledSubset,
              config: RunConfig, seed: int, partition_id: int = 0,
              trace_sink: Optional[TraceSink] = None) -> AgentResult:
    """Search (eps, min_pts) for one partition and return its labeling.

    The round budget spans all layers; parameters already clustered are
    replayed from cache without consuming rounds.  A partition holding
    none of the labeled points cannot score candidates, so it takes the
    snapped layer-0 midpoint without searching.
    """
    part = np.sort(np.asarray(partition, dtype=np.int64))
    points = dataset.points[part]
    dim = points.shape[1]

    in_part = np.isin(labeled.indices, part)
    global_labeled = labeled.indices[in_part]
    local_idx = np.searchsorted(part, global_labeled)
    layer = first_layer(dim, part.size, config)

    if global_labeled.size == 0:
        result = run_dbscan(points, layer.start)
        return AgentResult(
            partition_id=partition_id,
            partition=part,
            params=layer.start,
            reward=0.0,
            assignment=result.assignment,
            round_assignments=[result.assignment.copy()],
            round_rewards=[0.0],
            rounds_used=1,
            layer_history=(layer.start,),
            stop_reasons={},
        )

    truth = dataset.labels[global_labeled]
    evaluator = ClusterEvaluator(points, local_idx, truth, config.round_budget)
    hyper = TD3Hyper(config.gamma, config.batch_size, config.tau,
                     config.actor_delay, config.noise_sigma, config.noise_clip)
    reward_cfg = RewardConfig(config.delta, config.max_steps)
    root_rng = np.random.default_rng(seed)

    p_o = layer.start
    layer_history: List[DbscanParams] = []
    stop_counts: Counter = Counter()

    for layer_index in range(config.resolved_l_max()):
        if layer_index > 0:
            layer = next_layer(layer, p_o)
        nets_rng = np.random.default_rng(root_rng.integers(2 ** 63))
        env_rng = np.random.default_rng(root_rng.integers(2 ** 63))
        networks = PolicyNetworks.create(
            dim, nets_rng, hidden=config.hidden_width,
            body=config.body_width, lr=config.learning_rate)
        env = SearchEnv(evaluator, layer.bounds, layer.theta_eps,
                        layer.theta_minpts, layer.start, networks,
                        ReplayBuffer(config.buffer_capacity), hyper,
                        reward_cfg, env_rng)
        best_key: Optional[Tuple[float, int]] = None
        best_reward = -math.inf

        for episode in range(config.episodes):
            if config.episodes > 1:
                frac = episode / (config.episodes - 1)
            else:
                frac = 0.0
            explore = config.epsilon_start - frac * (
                config.epsilon_start - config.epsilon_end)
            trace = run_episode(env, explore)
            if trace_sink is not None:
                trace_sink(layer_index, episode, trace)

            observed: List[Tuple[Tuple[float, int], float]] = []
            start_key = (layer.start.eps, layer.start.min_pts)
            cached = evaluator.cache.get(start_key)
            if cached is not None:
                observed.append((start_key, cached[1]))
            for step in trace.steps:
                observed.append(
                    ((step.params.eps, step.params.min_pts), step.immediate))
            for key, value in observed:
                if value > best_reward:
                    best_reward = value
                    best_key = key
            stop_counts[trace.stop_reason] += 1

            if evaluator.exhausted:
                break

        if best_key is not None:
            p_o = DbscanParams(best_key[0], int(best_key[1]))
        layer_history.append(p_o)
        if evaluator.exhausted:
            break

    final_key = (p_o.eps, p_o.min_pts)
    final_result, final_reward = evaluator.cache[final_key]

    round_assignments: List[np.ndarray] = []
    round_rewards: List[float] = []
    running_key: Optional[Tuple[float, int]] = None
    running_reward = -math.inf
    for key in evaluator.eval_order:
        value = evaluator.cache[key][1]
        if value > running_reward:
            running_reward = value
            running_key = key
        round_assignments.append(evaluator.cache[running_key][0].assignment.copy())
        round_rewards.append(running_reward)

    return AgentResult(
        partition_id=partition_id,
        partition=part,
        params=p_o,
        reward=final_reward,
        assignment=final_result.assignment.copy(),
        round_assignments=round_assignments,
        round_rewards=round_rewards,
        rounds_used=evaluator.rounds_used,
        layer_history=tuple(layer_history),
        stop_reasons=dict(stop_counts),
    )


def _scatter(n: int, results: List[AgentResult],
             pick: List[np.ndarray]) -> np.ndarray:
    merged = np.full(n, NOISE, dtype=np.int64)
    offset = 0
    for res, local in zip(results, pick):
        local = np.asarray(local)
        shifted = np.where(local == NOISE, NOISE, local + offset)
        merged[res.partition] = shifted
        offset += int(local.max()) + 1 if (local != NOISE).any() else 0
    return merged


def merge_agent_results(results: List[AgentResult], n: int,
                        num_rounds: Optional[int] = None) -> MergedResult:
    """Combine per-partition labelings into one global labeling.

    Cluster ids are offset agent by agent (in partition-id order) so
    they stay disjoint; noise stays noise.  Round series are aligned by
    repeating an early stopper's last round, padded out to
    ``num_rounds`` when given.
    """
    results = sorted(results, key=lambda r: r.partition_id)
    all_idx = np.concatenate([r.partition for r in results]) if results else \
        np.empty(0, dtype=np.int64)
    uniq = np.unique(all_idx)
    if uniq.size != all_idx.size:
        raise ValueError("agent partitions overlap")
    if uniq.size != n or (n > 0 and (uniq[0] != 0 or uniq[-1] != n - 1)):
        raise ValueError("agent partitions do not cover all points")

    final = _scatter(n, results, [r.assignment for r in results])
    num_clusters = int(final.max()) + 1 if (final != NOISE).any() else 0

    total = max(len(r.round_assignments) for r in results)
    if num_rounds is not None:
        total = max(total, num_rounds)
    rounds: List[np.ndarray] = []
    for i in range(total):
        pick = [r.round_assignments[min(i, len(r.round_assignments) - 1)]
                for r in results]
        rounds.append(_scatter(n, results, pick))

    return MergedResult(ClusterResult(final, num_clusters), rounds)
