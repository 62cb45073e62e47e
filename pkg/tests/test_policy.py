import math

import numpy as np
import pytest

from replan.advisor import ABSTAIN, RecSet
from replan.domain import FuncType, PlanningConfig
from replan.policy import (
    ActionDist,
    Adam,
    Mlp,
    PolicyBundle,
    PolicyError,
    PpoBatch,
    actor_forward,
    backward_and_step,
    critic_forward,
    enhance,
    load_checkpoint,
    policy_probs_batch,
    ppo_gradients,
    ppo_loss,
    renormalize,
    sample_action,
    save_checkpoint,
    softmax,
)


def fresh_bundle(seed=0, **cfg_kwargs):
    cfg = PlanningConfig(seed=seed, **cfg_kwargs)
    return PolicyBundle.create(cfg, np.random.default_rng(seed))


def random_batch(bundle, rng, n=16, on_policy=True):
    feats = rng.normal(0, 1, (n, 45))
    e = rng.normal(0, 1, (n, 16))
    actions = rng.integers(0, 8, n)
    rec_masks = rng.random((n, 8)) < 0.3
    enhanced = rec_masks.any(axis=1)
    rec_masks[~enhanced] = False
    probe = PpoBatch(feats, e, actions, np.ones(n), np.zeros(n), np.zeros(n),
                     rec_masks, enhanced)
    _, pi, _, _, _ = policy_probs_batch(bundle, probe)
    old = pi[np.arange(n), actions] if on_policy else rng.uniform(0.05, 0.3, n)
    return PpoBatch(
        features=feats, e_feats=e, actions=actions, old_probs=old,
        returns=rng.normal(1.0, 0.5, n), advantages=rng.normal(0, 1, n),
        rec_masks=rec_masks, enhanced=enhanced,
    )


class TestActorForward:
    def test_zero_init_uniform(self):
        bundle = fresh_bundle()
        probs = actor_forward(bundle, np.zeros(45))
        assert np.allclose(probs, 0.125)

    def test_probs_sum_to_one_fuzz(self):
        rng = np.random.default_rng(3)
        bundle = fresh_bundle(3)
        bundle.actor.weights[-1][:] = rng.normal(0, 1, bundle.actor.weights[-1].shape)
        for _ in range(50):
            p = actor_forward(bundle, rng.normal(0, 2, 45))
            assert p.sum() == pytest.approx(1.0, abs=1e-12)
            assert (p >= 0).all()

    def test_deterministic(self):
        f = np.random.default_rng(1).normal(0, 1, 45)
        a = actor_forward(fresh_bundle(7), f)
        b = actor_forward(fresh_bundle(7), f)
        assert np.array_equal(a, b)

    def test_nonfinite_rejected(self):
        bundle = fresh_bundle()
        bad = np.zeros(45)
        bad[3] = np.nan
        with pytest.raises(PolicyError):
            actor_forward(bundle, bad)


class TestEnhance:
    def test_uniform_single_rec_strength_two(self):
        probs = np.full(8, 0.125)
        dist = enhance(probs, RecSet((FuncType.PARK,)), 2.0)
        expected = math.exp(0.25) / (math.exp(0.25) + 7 * math.exp(0.125))
        assert dist.probs[FuncType.PARK] == pytest.approx(expected, abs=1e-5)
        others = [dist.probs[i] for i in range(8) if i != FuncType.PARK]
        assert all(o == pytest.approx(math.exp(0.125) / (math.exp(0.25) + 7 * math.exp(0.125)),
                                      abs=1e-5) for o in others)

    def test_abstain_identity(self):
        probs = np.array([0.4, 0.2, 0.1, 0.05, 0.05, 0.05, 0.05, 0.1])
        dist = enhance(probs, ABSTAIN, 2.0)
        assert np.array_equal(dist.probs, probs)
        assert not dist.enhanced

    def test_strength_one_is_softmax_not_identity(self):
        uniform = np.full(8, 0.125)
        assert np.allclose(enhance(uniform, RecSet((FuncType.PARK,)), 1.0).probs, 0.125)
        skewed = np.array([0.5, 0.3, 0.05, 0.05, 0.025, 0.025, 0.025, 0.025])
        out = enhance(skewed, RecSet((FuncType.PARK,)), 1.0).probs
        assert not np.allclose(out, skewed)
        assert np.allclose(out, softmax(skewed))

    def test_non_recommended_order_preserved(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            probs = softmax(rng.normal(0, 1, 8))
            rec = RecSet((FuncType.SCHOOL, FuncType.PARK))
            out = enhance(probs, rec, 2.0).probs
            others = [i for i in range(8) if i not in (FuncType.SCHOOL, FuncType.PARK)]
            before = np.argsort([probs[i] for i in others])
            after = np.argsort([out[i] for i in others])
            assert np.array_equal(before, after)

    def test_mass_on_rec_increases_with_strength(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            probs = softmax(rng.normal(0, 1, 8))
            rec = RecSet((FuncType.BUSINESS, FuncType.OFFICE, FuncType.PARK))
            base = enhance(probs, rec, 1.0).probs
            for strength in (1.5, 2.0, 4.0):
                boosted = enhance(probs, rec, strength).probs
                assert boosted[list(rec.types)].sum() > base[list(rec.types)].sum()

    def test_renormalize_mode(self):
        probs = np.full(8, 0.125)
        out = renormalize(probs, RecSet((FuncType.PARK,)), 2.0).probs
        assert out[FuncType.PARK] == pytest.approx(2 / 9)
        assert out.sum() == pytest.approx(1.0)
        skewed = np.array([0.5, 0.3, 0.05, 0.05, 0.025, 0.025, 0.025, 0.025])
        assert np.allclose(renormalize(skewed, RecSet((FuncType.PARK,)), 1.0).probs, skewed)


class TestSampleAction:
    def test_degenerate(self):
        dist = ActionDist(np.eye(8)[0], False, ABSTAIN)
        rng = np.random.default_rng(0)
        assert all(sample_action(dist, rng) is FuncType.RESIDENTIAL for _ in range(20))

    def test_uniform_frequencies(self):
        dist = ActionDist(np.full(8, 0.125), False, ABSTAIN)
        rng = np.random.default_rng(42)
        counts = np.zeros(8)
        n = 1_000_000
        draws = rng.random(n)
        idx = np.searchsorted(np.cumsum(dist.probs), draws, side="right")
        for i in idx:
            counts[i] += 1
        freqs = counts / n
        assert np.all(np.abs(freqs - 0.125) < 0.002)

    def test_argmax_tie_lowest_index(self):
        probs = np.array([0.1, 0.2, 0.2, 0.2, 0.1, 0.1, 0.05, 0.05])
        dist = ActionDist(probs, False, ABSTAIN)
        assert sample_action(dist, np.random.default_rng(0), greedy=True) is FuncType.BUSINESS

    def test_chi_square_goodness_of_fit(self):
        from scipy.stats import chisquare

        probs = softmax(np.random.default_rng(9).normal(0, 1, 8))
        dist = ActionDist(probs, False, ABSTAIN)
        rng = np.random.default_rng(123)
        n = 100_000
        counts = np.bincount(
            np.searchsorted(np.cumsum(probs), rng.random(n), side="right"), minlength=8
        )
        _, p_value = chisquare(counts, probs * n)
        assert p_value > 0.001


class TestCritic:
    def test_zero_init_outputs_zero(self):
        assert critic_forward(fresh_bundle(), np.zeros(16)) == 0.0

    def test_deterministic_and_finite(self):
        bundle = fresh_bundle(2)
        rng = np.random.default_rng(2)
        for _ in range(30):
            e = rng.normal(0, 3, 16)
            v1 = critic_forward(bundle, e)
            v2 = critic_forward(bundle, e)
            assert v1 == v2 and math.isfinite(v1)

    def test_wrong_width_rejected(self):
        with pytest.raises(PolicyError):
            critic_forward(fresh_bundle(), np.zeros(8))


class TestGradients:
    @pytest.mark.parametrize("mode", ["softmax", "renormalize"])
    def test_matches_finite_differences(self, mode):
        rng = np.random.default_rng(17)
        h = 1e-5
        for draw in range(5):
            bundle = fresh_bundle(seed=100 + draw, learning_rate=1e-3, enhance_mode=mode)
            for w in bundle.actor.weights:
                w += rng.normal(0, 0.2, w.shape)
            for w in bundle.critic.weights:
                w += rng.normal(0, 0.2, w.shape)
            batch = random_batch(bundle, rng, on_policy=False)
            _, actor_grads, critic_grads = ppo_gradients(bundle, batch)

            for net, grads, attr in (
                (bundle.actor, actor_grads, "actor_loss"),
                (bundle.critic, critic_grads, "critic_loss"),
            ):
                for t_idx, par in enumerate(net.params()):
                    flat = par.ravel()
                    for i in rng.choice(flat.size, size=min(5, flat.size), replace=False):
                        orig = flat[i]
                        flat[i] = orig + h
                        lp = getattr(ppo_loss(bundle, batch), attr)
                        flat[i] = orig - h
                        lm = getattr(ppo_loss(bundle, batch), attr)
                        flat[i] = orig
                        fd = (lp - lm) / (2 * h)
                        an = grads[t_idx].ravel()[i]
                        assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-2)

    def test_zero_advantage_zero_actor_gradient(self):
        bundle = fresh_bundle(3)
        rng = np.random.default_rng(3)
        batch = random_batch(bundle, rng)
        batch.advantages = np.zeros_like(batch.advantages)
        _, actor_grads, _ = ppo_gradients(bundle, batch)
        assert all(np.all(g == 0) for g in actor_grads)

    def test_identical_runs_identical_params(self):
        def run():
            bundle = fresh_bundle(5, learning_rate=1e-3)
            rng = np.random.default_rng(5)
            for _ in range(10):
                backward_and_step(bundle, random_batch(bundle, rng))
            return bundle

        a, b = run(), run()
        for pa, pb in zip(a.actor.params() + a.critic.params(),
                          b.actor.params() + b.critic.params()):
            assert np.array_equal(pa, pb)

    def test_nonfinite_ratio_skipped(self):
        bundle = fresh_bundle(4, learning_rate=1e-3)
        rng = np.random.default_rng(4)
        batch = random_batch(bundle, rng)
        batch.old_probs = batch.old_probs.copy()
        batch.old_probs[0] = 0.0  # underflowed behavior probability
        stats = backward_and_step(bundle, batch)
        assert stats.skipped == 1
        assert stats.stepped


class TestAdam:
    def test_matches_reference_update(self):
        p = np.array([1.0, -2.0])
        opt = Adam([p], lr=0.1)
        g = np.array([0.5, -0.25])
        opt.step([p], [g])
        # first step: m_hat = g, v_hat = g^2 -> p -= lr * g/(|g|+eps) = lr*sign(g)
        assert p[0] == pytest.approx(1.0 - 0.1, abs=1e-6)
        assert p[1] == pytest.approx(-2.0 + 0.1, abs=1e-6)


class TestCheckpoint:
    def test_bitwise_roundtrip(self, tmp_path):
        bundle = fresh_bundle(11, learning_rate=1e-3)
        rng = np.random.default_rng(11)
        for _ in range(3):
            backward_and_step(bundle, random_batch(bundle, rng))
        path = tmp_path / "ckpt_3.bin"
        save_checkpoint(bundle, path, episode=3)
        loaded, episode = load_checkpoint(path)
        assert episode == 3
        for pa, pb in zip(bundle.actor.params() + bundle.critic.params(),
                          loaded.actor.params() + loaded.critic.params()):
            assert np.array_equal(pa, pb)
        assert loaded.actor_opt.t == bundle.actor_opt.t
        for ma, mb in zip(bundle.actor_opt.m, loaded.actor_opt.m):
            assert np.array_equal(ma, mb)
        assert loaded.config == bundle.config

        path2 = tmp_path / "again.bin"
        save_checkpoint(loaded, path2, episode=3)
        assert path.read_bytes() == path2.read_bytes()

    def test_forward_identical_after_roundtrip(self, tmp_path):
        bundle = fresh_bundle(12)
        rng = np.random.default_rng(12)
        for w in bundle.actor.weights:
            w += rng.normal(0, 0.1, w.shape)
        save_checkpoint(bundle, tmp_path / "c.bin")
        loaded, _ = load_checkpoint(tmp_path / "c.bin")
        f = rng.normal(0, 1, 45)
        assert np.array_equal(actor_forward(bundle, f), actor_forward(loaded, f))


class TestMlpShapes:
    def test_layer_dimensions(self):
        bundle = fresh_bundle()
        assert bundle.actor.sizes == (45, 128, 64, 32, 8)
        assert bundle.critic.sizes == (16, 128, 64, 32, 1)

    def test_bad_input_width(self):
        with pytest.raises(PolicyError):
            Mlp((4, 3)).forward(np.zeros(5))
