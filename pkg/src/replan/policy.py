"""Actor/critic networks, knowledge enhancement and gradient machinery.

The networks are small dense MLPs (tanh hidden layers, identity output)
implemented directly on numpy with analytic backprop, so training is
dependency-light and bit-reproducible. Enhancement multiplies the
probabilities of advisor-recommended actions by a configured strength and
renormalizes through a softmax; the PPO gradient flows through that
reweighting.
"""

import base64
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .advisor import RecSet
from .domain import FEATURE_DIM, FuncType, N_FUNC, PlanningConfig, STAT_DIM

ACTOR_SIZES = (FEATURE_DIM, 128, 64, 32, N_FUNC)
CRITIC_SIZES = (STAT_DIM, 128, 64, 32, 1)

CHECKPOINT_SCHEMA = 1


class PolicyError(ValueError):
    pass


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (1-D input treated as a single row)."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if single else out


def softmax_backward(s: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Backprop through row-wise softmax with output `s`."""
    inner = (grad * s).sum(axis=1, keepdims=True)
    return s * (grad - inner)


class Mlp:
    """Dense net with tanh hidden activations and identity output."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None):
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            fan_in, fan_out = self.sizes[i], self.sizes[i + 1]
            if rng is None or i == n_layers - 1:
                # zero-initialized output layer gives a uniform starting policy
                w = np.zeros((fan_out, fan_in))
            else:
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    def params(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Forward pass keeping per-layer activations for backprop."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        if a.shape[1] != self.sizes[0]:
            raise PolicyError(f"expected input width {self.sizes[0]}, got {a.shape[1]}")
        if not np.isfinite(a).all():
            raise PolicyError("non-finite network input")
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            acts.append(np.tanh(z) if i < last else z)
        return acts[-1], acts

    def backward(self, acts: List[np.ndarray], grad_out: np.ndarray) -> List[np.ndarray]:
        """Gradients for every parameter given dLoss/dOutput.

        Returns a flat list matching params(): [dW0, db0, dW1, db1, ...].
        """
        grads: List[Optional[np.ndarray]] = [None] * (2 * len(self.weights))
        grad = np.atleast_2d(grad_out)
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[i]
            grads[2 * i] = grad.T @ a_prev
            grads[2 * i + 1] = grad.sum(axis=0)
            if i > 0:
                grad = grad @ self.weights[i]
                grad = grad * (1.0 - acts[i] ** 2)  # tanh'
        return grads


class Adam:
    """Adam over a fixed list of parameter arrays."""

    def __init__(self, params: List[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class PolicyBundle:
    actor: Mlp
    critic: Mlp
    actor_opt: Adam
    critic_opt: Adam
    config: PlanningConfig

    @classmethod
    def create(cls, config: PlanningConfig, rng: np.random.Generator) -> "PolicyBundle":
        actor = Mlp(ACTOR_SIZES, rng)
        critic = Mlp(CRITIC_SIZES, rng)
        return cls(
            actor=actor,
            critic=critic,
            actor_opt=Adam(actor.params(), lr=config.learning_rate),
            critic_opt=Adam(critic.params(), lr=config.learning_rate),
            config=config,
        )


@dataclass
class ActionDist:
    """Final 8-way action distribution, possibly advisor-enhanced."""

    probs: np.ndarray
    enhanced: bool
    rec_set: RecSet

    def __post_init__(self):
        if self.probs.shape != (N_FUNC,):
            raise PolicyError(f"expected {N_FUNC} probabilities, got {self.probs.shape}")
        if not np.isfinite(self.probs).all() or (self.probs < 0).any():
            raise PolicyError("invalid probability vector")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise PolicyError("probabilities must sum to 1")


def actor_forward(bundle: PolicyBundle, features: np.ndarray) -> np.ndarray:
    """Base action probabilities: softmax over the actor logits."""
    features = np.asarray(features, dtype=float)
    if features.shape != (FEATURE_DIM,):
        raise PolicyError(f"expected {FEATURE_DIM}-dim features, got {features.shape}")
    logits = bundle.actor.forward(features)[0]
    return softmax(logits)


def critic_forward(bundle: PolicyBundle, e: np.ndarray) -> float:
    """Scalar value estimate from the region statistics vector."""
    e = np.asarray(e, dtype=float)
    if e.shape != (STAT_DIM,):
        raise PolicyError(f"expected {STAT_DIM}-dim stats vector, got {e.shape}")
    return float(bundle.critic.forward(e)[0, 0])


def rec_mask(rec_set: RecSet) -> np.ndarray:
    mask = np.zeros(N_FUNC, dtype=bool)
    for t in rec_set.types:
        mask[t] = True
    return mask


def enhance(probs: np.ndarray, rec_set: RecSet, strength: float) -> ActionDist:
    """Scale recommended entries by `strength`, renormalize via softmax.

    An abstaining recommendation leaves the distribution untouched. Note
    the renormalization is a softmax over the scaled probabilities, not a
    division by their sum, so even strength 1 reshapes a non-uniform
    input; the alternative is available via `renormalize`.
    """
    probs = np.asarray(probs, dtype=float)
    if rec_set.is_abstain:
        return ActionDist(probs=probs.copy(), enhanced=False, rec_set=rec_set)
    scaled = np.where(rec_mask(rec_set), strength * probs, probs)
    return ActionDist(probs=softmax(scaled), enhanced=True, rec_set=rec_set)


def renormalize(probs: np.ndarray, rec_set: RecSet, strength: float) -> ActionDist:
    """Alternative enhancement: divide the scaled vector by its sum."""
    probs = np.asarray(probs, dtype=float)
    if rec_set.is_abstain:
        return ActionDist(probs=probs.copy(), enhanced=False, rec_set=rec_set)
    scaled = np.where(rec_mask(rec_set), strength * probs, probs)
    return ActionDist(probs=scaled / scaled.sum(), enhanced=True, rec_set=rec_set)


def sample_action(dist: ActionDist, rng: np.random.Generator, greedy: bool = False) -> FuncType:
    """Categorical draw in training mode; lowest-index argmax when greedy."""
    if greedy:
        return FuncType(int(np.argmax(dist.probs)))
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(dist.probs), u, side="right"))
    return FuncType(min(idx, N_FUNC - 1))


# -- PPO losses and gradients ------------------------------------------------


@dataclass
class PpoBatch:
    """Flattened step data for one update, with rollout-time behavior probs."""

    features: np.ndarray  # (N, 45)
    e_feats: np.ndarray  # (N, 16)
    actions: np.ndarray  # (N,) int
    old_probs: np.ndarray  # (N,) behavior probability of the taken action
    returns: np.ndarray  # (N,)
    advantages: np.ndarray  # (N,)
    rec_masks: np.ndarray  # (N, 8) bool
    enhanced: np.ndarray  # (N,) bool, False where the advisor abstained


@dataclass
class StepStats:
    actor_loss: float
    critic_loss: float
    clip_fraction: float
    skipped: int
    actor_grad_norm: float = 0.0
    critic_grad_norm: float = 0.0
    stepped: bool = True


def apply_enhancement(probs: np.ndarray, rec_set: RecSet, config: PlanningConfig) -> ActionDist:
    """Enhancement under the configured renormalization mode."""
    if config.enhance_mode == "renormalize":
        return renormalize(probs, rec_set, config.enhance_strength)
    return enhance(probs, rec_set, config.enhance_strength)


def policy_probs_batch(bundle: PolicyBundle, batch: PpoBatch):
    """Base and enhanced distributions for every step in the batch."""
    logits, acts = bundle.actor.forward_cached(batch.features)
    p = softmax(logits)
    strength = bundle.config.enhance_strength
    scale = np.where(batch.rec_masks, strength, 1.0)
    u = p * scale
    if bundle.config.enhance_mode == "renormalize":
        u_sum = u.sum(axis=1, keepdims=True)
        pi_enh = u / u_sum
    else:
        u_sum = None
        pi_enh = softmax(u)
    pi = np.where(batch.enhanced[:, None], pi_enh, p)
    return p, pi, scale, u_sum, acts


def ppo_loss(bundle: PolicyBundle, batch: PpoBatch) -> StepStats:
    """Clipped-surrogate actor loss and MSE critic loss, no parameter update."""
    stats, _, _ = _loss_and_grads(bundle, batch, want_grads=False)
    return stats


def ppo_gradients(bundle: PolicyBundle, batch: PpoBatch):
    """Analytic parameter gradients of the actor and critic losses."""
    return _loss_and_grads(bundle, batch, want_grads=True)


def _loss_and_grads(bundle: PolicyBundle, batch: PpoBatch, want_grads: bool):
    eps = bundle.config.clip_eps
    n = len(batch.actions)
    rows = np.arange(n)

    p, pi, scale, u_sum, acts = policy_probs_batch(bundle, batch)
    pi_a = pi[rows, batch.actions]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = pi_a / batch.old_probs
    finite = np.isfinite(ratio)
    skipped = int((~finite).sum())
    n_eff = max(int(finite.sum()), 1)

    surr1 = ratio * batch.advantages
    surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * batch.advantages
    per_step = np.where(finite, np.minimum(surr1, surr2), 0.0)
    actor_loss = -float(per_step.sum()) / n_eff
    clip_fraction = float((np.abs(ratio[finite] - 1.0) > eps).mean()) if n_eff else 0.0

    v_out, v_acts = bundle.critic.forward_cached(batch.e_feats)
    v = v_out[:, 0]
    err = v - batch.returns
    critic_loss = float((err**2).mean())

    stats = StepStats(
        actor_loss=actor_loss,
        critic_loss=critic_loss,
        clip_fraction=clip_fraction,
        skipped=skipped,
    )
    if not want_grads:
        return stats, None, None

    # d(-min(surr1, surr2))/d ratio: advantage where the unclipped branch
    # is active, zero where the clip has flattened it.
    active = finite & (surr1 <= surr2)
    d_ratio = np.where(active, -batch.advantages, 0.0) / n_eff
    d_pi_a = d_ratio / np.where(finite, batch.old_probs, 1.0)
    g_pi = np.zeros_like(pi)
    g_pi[rows, batch.actions] = np.where(finite, d_pi_a, 0.0)

    if bundle.config.enhance_mode == "renormalize":
        # pi = u / sum(u): dL/du_j = (g_j - sum_k g_k pi_k) / sum(u)
        inner = (g_pi * pi).sum(axis=1, keepdims=True)
        g_u = (g_pi - inner) / u_sum
    else:
        g_u = softmax_backward(pi, g_pi)
    g_p = np.where(batch.enhanced[:, None], g_u * scale, g_pi)
    g_logits = softmax_backward(p, g_p)
    actor_grads = bundle.actor.backward(acts, g_logits)

    g_v = (2.0 * err / n)[:, None]
    critic_grads = bundle.critic.backward(v_acts, g_v)
    return stats, actor_grads, critic_grads


def _grad_norm(grads: List[np.ndarray]) -> float:
    return float(np.sqrt(sum(float((g**2).sum()) for g in grads)))


def backward_and_step(bundle: PolicyBundle, batch: PpoBatch) -> StepStats:
    """One Adam step on both networks from the analytic PPO gradients.

    A non-finite gradient aborts the step (parameters untouched) and is
    reported through `stepped=False`.
    """
    stats, actor_grads, critic_grads = ppo_gradients(bundle, batch)
    stats.actor_grad_norm = _grad_norm(actor_grads)
    stats.critic_grad_norm = _grad_norm(critic_grads)
    if not (np.isfinite(stats.actor_grad_norm) and np.isfinite(stats.critic_grad_norm)):
        stats.stepped = False
        return stats
    bundle.actor_opt.step(bundle.actor.params(), actor_grads)
    bundle.critic_opt.step(bundle.critic.params(), critic_grads)
    return stats


# -- checkpointing -----------------------------------------------------------


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(text: str, shape: Tuple[int, ...]) -> np.ndarray:
    flat = np.frombuffer(base64.b64decode(text), dtype="<f8")
    return flat.reshape(shape).copy()


def config_hash(config: PlanningConfig) -> str:
    doc = json.dumps(vars(config), sort_keys=True)
    return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _net_doc(net: Mlp) -> dict:
    return {
        "sizes": list(net.sizes),
        "params": [_encode(p) for p in net.params()],
    }


def _opt_doc(opt: Adam) -> dict:
    return {
        "t": opt.t,
        "lr": opt.lr,
        "m": [_encode(a) for a in opt.m],
        "v": [_encode(a) for a in opt.v],
    }


def save_checkpoint(bundle: PolicyBundle, path, episode: int = 0) -> None:
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "episode": episode,
        "config": vars(bundle.config),
        "config_hash": config_hash(bundle.config),
        "actor": _net_doc(bundle.actor),
        "critic": _net_doc(bundle.critic),
        "opt": {"actor": _opt_doc(bundle.actor_opt), "critic": _opt_doc(bundle.critic_opt)},
    }
    Path(path).write_bytes(json.dumps(doc, sort_keys=True).encode("utf-8"))


def _param_shapes(sizes: Sequence[int]) -> List[Tuple[int, ...]]:
    shapes: List[Tuple[int, ...]] = []
    for i in range(len(sizes) - 1):
        shapes.append((sizes[i + 1], sizes[i]))
        shapes.append((sizes[i + 1],))
    return shapes


def _load_net(doc: dict) -> Mlp:
    net = Mlp(doc["sizes"])
    shapes = _param_shapes(net.sizes)
    arrays = [_decode(t, s) for t, s in zip(doc["params"], shapes)]
    net.weights = arrays[0::2]
    net.biases = arrays[1::2]
    return net


def _load_opt(doc: dict, params: List[np.ndarray]) -> Adam:
    opt = Adam(params, lr=doc["lr"])
    opt.t = int(doc["t"])
    opt.m = [_decode(t, p.shape) for t, p in zip(doc["m"], params)]
    opt.v = [_decode(t, p.shape) for t, p in zip(doc["v"], params)]
    return opt


def load_checkpoint(path) -> Tuple[PolicyBundle, int]:
    doc = json.loads(Path(path).read_bytes().decode("utf-8"))
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise PolicyError(f"unsupported checkpoint schema {doc.get('schema')!r}")
    config = PlanningConfig(**doc["config"])
    actor = _load_net(doc["actor"])
    critic = _load_net(doc["critic"])
    bundle = PolicyBundle(
        actor=actor,
        critic=critic,
        actor_opt=_load_opt(doc["opt"]["actor"], actor.params()),
        critic_opt=_load_opt(doc["opt"]["critic"], critic.params()),
        config=config,
    )
    return bundle, int(doc.get("episode", 0))
