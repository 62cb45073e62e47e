"""PPO training loop: rollouts, returns, advantages and clipped updates.

Rewards are terminal-only (the scheme is scored once the last plot is
planned), so returns are discounted copies of the final score and the
advantage is the Monte-Carlo return minus the critic value.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .advisor import ABSTAIN, Advisor, AdvisorTransportError, MockAdvisor, build_plot_context
from .domain import Region, apply_action, region_stats, state_features
from .policy import (
    PolicyBundle,
    PpoBatch,
    StepStats,
    actor_forward,
    apply_enhancement,
    backward_and_step,
    rec_mask,
    sample_action,
    save_checkpoint,
)
from .rewards import SchemeReport, compose_report, satisfaction_score, summarize_scheme


class TrainerError(RuntimeError):
    pass


@dataclass
class Transition:
    features: np.ndarray  # (45,)
    e_feats: np.ndarray  # (16,)
    action: int
    behavior_prob: float
    reward: float
    done: bool
    rec_set: object = ABSTAIN  # needed to re-evaluate the enhanced policy


@dataclass
class Trajectory:
    transitions: List[Transition]
    report: SchemeReport
    region: Region


@dataclass
class TrainSettings:
    batch_episodes: int = 8
    inner_epochs: int = 4
    normalize_advantages: bool = False
    checkpoint_interval: int = 1000
    eval_episodes: int = 5
    enhance: bool = True
    log_timings: bool = False


@dataclass
class TrainLog:
    """Append-only per-episode training telemetry."""

    records: List[dict] = field(default_factory=list)

    def append(self, record: dict):
        self.records.append(record)

    def write_jsonl(self, path):
        with Path(path).open("w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


@dataclass
class TrainResult:
    bundle: PolicyBundle
    log: TrainLog
    eval_reports: List[SchemeReport]
    checkpoint_path: Optional[str] = None

    @property
    def eval_obj_score(self) -> float:
        return float(np.mean([r.obj_score for r in self.eval_reports]))

    @property
    def eval_total(self) -> float:
        return float(np.mean([r.total for r in self.eval_reports]))


def rollout_episode(
    template: Region,
    bundle: PolicyBundle,
    advisor: Advisor,
    rng: np.random.Generator,
    sat_advisor: Optional[Advisor] = None,
    enhance_on: bool = True,
    greedy: bool = False,
) -> Trajectory:
    """Plan every vacant plot once and score the completed scheme.

    The terminal transition carries the scheme's total score as its
    reward; all earlier transitions carry zero. An advisor transport
    failure downgrades that step to an abstention.
    """
    region = template.clone()
    demands = region.demands
    if demands is None:
        raise TrainerError("region template carries no demands")
    sat_advisor = sat_advisor or advisor

    transitions: List[Transition] = []
    for idx in region.vacant_order:
        feats = state_features(region, idx)
        probs = actor_forward(bundle, feats)
        rec = ABSTAIN
        if enhance_on:
            try:
                rec = advisor.recommend_types(
                    build_plot_context(region, idx),
                    region_stats(region),
                    demands,
                    region.facility_tally(),
                )
            except AdvisorTransportError:
                rec = ABSTAIN
        dist = apply_enhancement(probs, rec, bundle.config)
        action = sample_action(dist, rng, greedy=greedy)
        transitions.append(
            Transition(
                features=feats,
                e_feats=feats[29:45].copy(),
                action=int(action),
                behavior_prob=float(dist.probs[action]),
                reward=0.0,
                done=False,
                rec_set=rec,
            )
        )
        apply_action(region, idx, action)

    summary = summarize_scheme(region, demands)
    stakeholders = sat_advisor.score_satisfaction(summary)
    sat = satisfaction_score(stakeholders)
    report = compose_report(summary.metrics, sat, stakeholders)
    if transitions:
        transitions[-1].reward = report.total
        transitions[-1].done = True
    return Trajectory(transitions=transitions, report=report, region=region)


def compute_returns(traj: Trajectory, gamma: float) -> np.ndarray:
    """Discounted reward-to-go for every step."""
    returns = np.zeros(len(traj.transitions))
    acc = 0.0
    for t in range(len(traj.transitions) - 1, -1, -1):
        acc = traj.transitions[t].reward + gamma * acc
        returns[t] = acc
    return returns


def advantages(traj: Trajectory, bundle: PolicyBundle, normalize: bool = False) -> np.ndarray:
    """Monte-Carlo return minus critic value per step."""
    returns = compute_returns(traj, bundle.config.gamma)
    e = np.stack([t.e_feats for t in traj.transitions])
    values = bundle.critic.forward(e)[:, 0]
    adv = returns - values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def build_batch(
    trajectories: Sequence[Trajectory],
    bundle: PolicyBundle,
    normalize_advantages: bool = False,
) -> PpoBatch:
    feats, e_feats, actions, old_probs, rets, advs, masks, enh = [], [], [], [], [], [], [], []
    for traj in trajectories:
        returns = compute_returns(traj, bundle.config.gamma)
        e = np.stack([t.e_feats for t in traj.transitions])
        values = bundle.critic.forward(e)[:, 0]
        for i, t in enumerate(traj.transitions):
            feats.append(t.features)
            e_feats.append(t.e_feats)
            actions.append(t.action)
            old_probs.append(t.behavior_prob)
            rets.append(returns[i])
            advs.append(returns[i] - values[i])
            masks.append(rec_mask(t.rec_set))
            enh.append(not t.rec_set.is_abstain)
    adv = np.array(advs)
    if normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return PpoBatch(
        features=np.stack(feats),
        e_feats=np.stack(e_feats),
        actions=np.array(actions, dtype=np.int64),
        old_probs=np.array(old_probs),
        returns=np.array(rets),
        advantages=adv,
        rec_masks=np.stack(masks),
        enhanced=np.array(enh, dtype=bool),
    )


def ppo_update(
    bundle: PolicyBundle,
    trajectories: Sequence[Trajectory],
    inner_epochs: int = 4,
    normalize_advantages: bool = False,
) -> List[StepStats]:
    """K clipped-surrogate epochs over one rollout batch."""
    if not trajectories:
        raise TrainerError("empty update batch")
    batch = build_batch(trajectories, bundle, normalize_advantages)
    return [backward_and_step(bundle, batch) for _ in range(inner_epochs)]


def evaluate_policy(
    template: Region,
    bundle: PolicyBundle,
    advisor: Advisor,
    episodes: int = 5,
    enhance_on: bool = True,
    sat_advisor: Optional[Advisor] = None,
    seed: int = 0,
) -> List[SchemeReport]:
    """Greedy-argmax rollouts for reporting."""
    rng = np.random.default_rng(seed)
    return [
        rollout_episode(
            template, bundle, advisor, rng,
            sat_advisor=sat_advisor, enhance_on=enhance_on, greedy=True,
        ).report
        for _ in range(episodes)
    ]


def train(
    template: Region,
    advisor: Advisor,
    settings: Optional[TrainSettings] = None,
    sat_advisor: Optional[Advisor] = None,
    out_dir=None,
) -> TrainResult:
    """Full training run driven by the region template's PlanningConfig.

    Rollouts happen in batches of `batch_episodes`; each batch feeds one
    multi-epoch PPO update. Checkpoints land in `out_dir` every
    `checkpoint_interval` episodes plus a final one, and the per-episode
    log is streamed to train_log.jsonl.
    """
    settings = settings or TrainSettings()
    config = template.config
    if sat_advisor is None:
        sat_advisor = advisor if isinstance(advisor, MockAdvisor) else MockAdvisor(config.seed)

    ss = np.random.SeedSequence(config.seed)
    init_seed, rollout_seed, eval_seed = ss.spawn(3)
    bundle = PolicyBundle.create(config, np.random.default_rng(init_seed))
    rng = np.random.default_rng(rollout_seed)

    log = TrainLog()
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    last_ckpt: Optional[str] = None

    def checkpoint(episode: int) -> str:
        nonlocal last_ckpt
        path = out_path / f"ckpt_{episode}.bin"
        try:
            save_checkpoint(bundle, path, episode=episode)
        except OSError as exc:
            raise TrainerError(
                f"checkpoint write failed at episode {episode}: {exc}; "
                f"last good checkpoint: {last_ckpt}"
            ) from exc
        last_ckpt = str(path)
        return last_ckpt

    episode = 0
    next_ckpt = settings.checkpoint_interval if settings.checkpoint_interval > 0 else None
    while episode < config.episodes:
        n = min(settings.batch_episodes, config.episodes - episode)
        t0 = time.perf_counter()
        trajs = [
            rollout_episode(
                template, bundle, advisor, rng,
                sat_advisor=sat_advisor, enhance_on=settings.enhance,
            )
            for _ in range(n)
        ]
        stats = ppo_update(
            bundle, trajs,
            inner_epochs=settings.inner_epochs,
            normalize_advantages=settings.normalize_advantages,
        )
        elapsed = time.perf_counter() - t0
        last = stats[-1]
        for traj in trajs:
            episode += 1
            rec = {
                "episode": episode,
                "service": traj.report.service,
                "ecology": traj.report.ecology,
                "economy": traj.report.economy,
                "equity": traj.report.equity,
                "satisfaction": traj.report.satisfaction,
                "total_reward": traj.report.total,
                "actor_loss": last.actor_loss,
                "critic_loss": last.critic_loss,
                "clip_fraction": last.clip_fraction,
            }
            if settings.log_timings:
                rec["wall_time"] = elapsed / n
            log.append(rec)
        if out_path is not None and next_ckpt is not None and episode >= next_ckpt:
            if episode < config.episodes:
                checkpoint(episode)
            while next_ckpt <= episode:
                next_ckpt += settings.checkpoint_interval

    ckpt_path = checkpoint(episode) if out_path is not None else None
    if out_path is not None:
        log.write_jsonl(out_path / "train_log.jsonl")

    eval_reports = evaluate_policy(
        template, bundle, advisor,
        episodes=settings.eval_episodes,
        enhance_on=settings.enhance,
        sat_advisor=sat_advisor,
        seed=int(eval_seed.generate_state(1)[0]),
    )
    return TrainResult(bundle=bundle, log=log, eval_reports=eval_reports, checkpoint_path=ckpt_path)
