import itertools
import math
import random

import numpy as np
import pytest

from simile.embed import init_embeddings
from simile.errors import NumericalError
from simile.metrics import CostKind
from simile.risk import (
    Candidate,
    MleTrainConfig,
    NBestList,
    RiskTrainConfig,
    ToyLexModel,
    decode,
    nbest,
    nesterov_step,
    risk_grad,
    risk_loss,
    score_candidates,
    seq_logprob,
    token_ls_grad,
    token_ls_loss,
    train_mle,
    train_risk,
    weighted_loss,
)


def make_model(theta):
    theta = np.asarray(theta, dtype=np.float64)
    src = {f"s{i}": i for i in range(theta.shape[0])}
    tgt = {f"t{i}": i for i in range(theta.shape[1])}
    return ToyLexModel(theta, src, tgt)


def brute_force_nbest(model, x, k, reference=None):
    """Full enumeration oracle: every target sequence, sorted by
    (-logprob, target ids), reference removed."""
    n_tgt = len(model.target_vocab)
    entries = []
    for ids in itertools.product(range(n_tgt), repeat=len(x)):
        tokens = tuple(model.target_tokens[i] for i in ids)
        entries.append((seq_logprob(model, x, tokens), ids, tokens))
    entries.sort(key=lambda e: (-e[0], e[1]))
    out = [(tokens, lp) for lp, _, tokens in entries if reference is None or tokens != tuple(reference)]
    return out[:k]


def fd_risk_theta_grad(model, nb, h=1e-6):
    """Finite differences through the renormalized expected cost with the
    candidate set held fixed."""
    costs = np.array([c.cost for c in nb.candidates])

    def value(m):
        lps = np.array([seq_logprob(m, nb.source, c.tokens) for c in nb.candidates])
        w = np.exp(lps - lps.max())
        return float((w / w.sum()) @ costs)

    grad = np.zeros_like(model.theta)
    for s in range(model.theta.shape[0]):
        for t in range(model.theta.shape[1]):
            probe = model.copy()
            probe.theta[s, t] += h
            up = value(probe)
            probe.theta[s, t] -= 2 * h
            down = value(probe)
            grad[s, t] = (up - down) / (2 * h)
    return grad


class TestSeqLogprob:
    def test_uniform_theta(self):
        model = make_model(np.zeros((2, 4)))
        got = seq_logprob(model, ["s0", "s1"], ["t0", "t3"])
        assert got == pytest.approx(2 * math.log(0.25), abs=1e-12)

    def test_dominant_score_approaches_zero(self):
        values = []
        for scale in (1.0, 5.0, 20.0):
            theta = np.zeros((1, 3))
            theta[0, 1] = scale
            model = make_model(theta)
            values.append(seq_logprob(model, ["s0"], ["t1"]))
        assert values[0] < values[1] < values[2] < 0.0

    def test_vocab_relabeling_invariance(self):
        rng = np.random.default_rng(3)
        theta = rng.normal(size=(2, 4))
        model = make_model(theta)
        perm = [2, 0, 3, 1]
        theta_p = theta[:, perm]
        permuted = ToyLexModel(theta_p, dict(model.source_vocab), {f"t{j}": i for i, j in enumerate(perm)})
        for u in itertools.product([f"t{i}" for i in range(4)], repeat=2):
            assert seq_logprob(model, ["s0", "s1"], u) == pytest.approx(
                seq_logprob(permuted, ["s0", "s1"], u), abs=1e-12
            )

    def test_length_mismatch_rejected(self):
        model = make_model(np.zeros((2, 3)))
        with pytest.raises(ValueError):
            seq_logprob(model, ["s0", "s1"], ["t0"])

    def test_unknown_token_rejected(self):
        model = make_model(np.zeros((1, 2)))
        with pytest.raises(ValueError):
            seq_logprob(model, ["nope"], ["t0"])
        with pytest.raises(ValueError):
            seq_logprob(model, ["s0"], ["nope"])


class TestNBest:
    def test_k1_is_argmax(self):
        rng = np.random.default_rng(4)
        model = make_model(rng.normal(size=(3, 5)))
        x = ["s0", "s2", "s1"]
        nb = nbest(model, x, 1)
        assert nb.candidates[0].tokens == decode(model, x)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            model = make_model(rng.normal(size=(rng.integers(1, 4), rng.integers(2, 5))))
            m = int(rng.integers(1, 4))
            x = [f"s{rng.integers(0, len(model.source_vocab))}" for _ in range(m)]
            k = int(rng.integers(1, 9))
            nb = nbest(model, x, k)
            expect = brute_force_nbest(model, x, k)
            assert [c.tokens for c in nb.candidates] == [t for t, _ in expect]
            for cand, (_, lp) in zip(nb.candidates, expect):
                assert cand.logprob == pytest.approx(lp, abs=1e-12)

    def test_ties_resolve_by_token_id(self):
        # Uniform scores: all sequences share one logprob; order must be
        # lexicographic in target ids.
        model = make_model(np.zeros((2, 3)))
        nb = nbest(model, ["s0", "s1"], 4)
        assert [c.tokens for c in nb.candidates] == [
            ("t0", "t0"),
            ("t0", "t1"),
            ("t0", "t2"),
            ("t1", "t0"),
        ]

    def test_reference_excluded_and_refilled(self):
        model = make_model(np.zeros((1, 3)))
        ref = ("t0",)
        nb = nbest(model, ["s0"], 2, reference=ref)
        assert ref not in [c.tokens for c in nb.candidates]
        assert [c.tokens for c in nb.candidates] == [("t1",), ("t2",)]
        assert not nb.exhausted

    def test_exhausted_flag(self):
        model = make_model(np.zeros((1, 2)))
        nb = nbest(model, ["s0"], 5)
        assert len(nb.candidates) == 2
        assert nb.exhausted

    def test_candidates_sorted_and_distinct(self):
        rng = np.random.default_rng(6)
        model = make_model(rng.normal(size=(2, 4)))
        nb = nbest(model, ["s0", "s1"], 8)
        lps = [c.logprob for c in nb.candidates]
        assert lps == sorted(lps, reverse=True)
        assert len({c.tokens for c in nb.candidates}) == len(nb.candidates)


def two_candidate_fixture():
    return NBestList(
        source=("s0",),
        reference=("t9",),
        candidates=[Candidate(("t0",), -1.0, 0.2), Candidate(("t1",), -2.0, 0.8)],
    )


class TestRiskLoss:
    def test_single_candidate(self):
        nb = NBestList(("s0",), ("t9",), [Candidate(("t0",), -3.0, 0.37)])
        assert risk_loss(nb) == pytest.approx(0.37, abs=1e-15)

    def test_uniform_logprobs_give_mean_cost(self):
        nb = NBestList(
            ("s0",),
            ("t9",),
            [Candidate(("t0",), -1.5, 0.1), Candidate(("t1",), -1.5, 0.5), Candidate(("t2",), -1.5, 0.9)],
        )
        assert risk_loss(nb) == pytest.approx(0.5, abs=1e-12)

    def test_two_candidate_hand_value(self):
        # softmax(-1, -2) = (1, e^-1) / (1 + e^-1)
        expected = (0.2 + 0.8 * math.exp(-1.0)) / (1.0 + math.exp(-1.0))
        assert risk_loss(two_candidate_fixture()) == pytest.approx(expected, abs=1e-12)
        assert risk_loss(two_candidate_fixture()) == pytest.approx(0.36128, abs=1e-4)

    def test_shift_invariance(self):
        nb = two_candidate_fixture()
        shifted = NBestList(
            nb.source,
            nb.reference,
            [Candidate(c.tokens, c.logprob + 7.3, c.cost) for c in nb.candidates],
        )
        assert risk_loss(shifted) == pytest.approx(risk_loss(nb), abs=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            risk_loss(NBestList(("s0",), ("t9",), []))

    def test_unpopulated_costs_rejected(self):
        nb = NBestList(("s0",), ("t9",), [Candidate(("t0",), -1.0)])
        with pytest.raises(ValueError):
            risk_loss(nb)


class TestRiskGrad:
    def make_scored(self, seed=7, costs=None):
        rng = np.random.default_rng(seed)
        model = make_model(rng.normal(size=(2, 4)))
        nb = nbest(model, ["s0", "s1"], 4)
        values = costs if costs is not None else rng.uniform(0, 1, size=len(nb.candidates))
        for cand, c in zip(nb.candidates, values):
            cand.cost = float(c)
        return model, nb

    def test_equal_costs_give_zero_gradient(self):
        model, nb = self.make_scored(costs=[0.4, 0.4, 0.4, 0.4])
        d_lp, d_theta = risk_grad(model, nb)
        assert np.allclose(d_lp, 0.0, atol=1e-15)
        assert np.allclose(d_theta, 0.0, atol=1e-15)

    def test_two_candidate_hand_value(self):
        model = make_model(np.zeros((1, 2)))
        nb = two_candidate_fixture()
        d_lp, _ = risk_grad(model, nb)
        p1 = 1.0 / (1.0 + math.exp(-1.0))
        loss = (0.2 + 0.8 * math.exp(-1.0)) / (1.0 + math.exp(-1.0))
        assert d_lp[0] == pytest.approx(p1 * (0.2 - loss), abs=1e-12)
        assert d_lp[0] == pytest.approx(-0.1180, abs=1e-4)

    def test_candidate_gradients_sum_to_zero(self):
        for seed in range(5):
            model, nb = self.make_scored(seed=seed)
            d_lp, _ = risk_grad(model, nb)
            assert abs(float(d_lp.sum())) < 1e-12

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            model = make_model(rng.normal(size=(rng.integers(1, 4), rng.integers(2, 6))))
            m = int(rng.integers(1, 4))
            x = [f"s{rng.integers(0, len(model.source_vocab))}" for _ in range(m)]
            nb = nbest(model, x, int(rng.integers(1, 5)))
            for cand in nb.candidates:
                cand.cost = float(rng.uniform(0, 1))
            _, analytic = risk_grad(model, nb)
            numeric = fd_risk_theta_grad(model, nb)
            denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
            assert np.linalg.norm(analytic - numeric) / denom < 1e-5


class TestTokenLsLoss:
    def test_zero_smoothing_is_nll(self):
        rng = np.random.default_rng(10)
        model = make_model(rng.normal(size=(2, 4)))
        x = ["s0", "s1"]
        u = ["t2", "t1"]
        assert token_ls_loss(model, x, u, 0.0) == pytest.approx(-seq_logprob(model, x, u), abs=1e-12)

    def test_full_smoothing_uniform_theta(self):
        model = make_model(np.zeros((3, 5)))
        x = ["s0", "s1", "s2"]
        u = ["t0", "t1", "t2"]
        assert token_ls_loss(model, x, u, 1.0) == pytest.approx(3 * math.log(5), abs=1e-12)

    def test_decomposes_into_nll_and_uniform_term(self):
        rng = np.random.default_rng(11)
        model = make_model(rng.normal(size=(2, 4)))
        x = ["s1", "s0"]
        u = ["t3", "t0"]
        eps = 0.1
        nll = token_ls_loss(model, x, u, 0.0)
        uniform_ce = token_ls_loss(model, x, u, 1.0)
        combined = token_ls_loss(model, x, u, eps)
        assert combined == pytest.approx((1 - eps) * nll + eps * uniform_ce, abs=1e-12)

    def test_bounded_below_by_target_entropy(self):
        rng = np.random.default_rng(12)
        model = make_model(rng.normal(size=(1, 4)))
        eps = 0.3
        q = np.full(4, eps / 4)
        q[2] += 1 - eps
        entropy = -float(q @ np.log(q))
        assert token_ls_loss(model, ["s0"], ["t2"], eps) >= entropy - 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        model = make_model(rng.normal(size=(2, 4)))
        x = ["s0", "s1", "s0"]
        u = ["t1", "t3", "t1"]
        analytic = token_ls_grad(model, x, u, 0.1)
        h = 1e-6
        numeric = np.zeros_like(model.theta)
        for s in range(2):
            for t in range(4):
                probe = model.copy()
                probe.theta[s, t] += h
                up = token_ls_loss(probe, x, u, 0.1)
                probe.theta[s, t] -= 2 * h
                down = token_ls_loss(probe, x, u, 0.1)
                numeric[s, t] = (up - down) / (2 * h)
        assert np.allclose(analytic, numeric, atol=1e-6)


class TestWeightedLoss:
    def setup_case(self):
        rng = np.random.default_rng(14)
        model = make_model(rng.normal(size=(3, 5)))
        table = init_embeddings([f"t{i}" for i in range(5)], dim=4, seed=2)
        batch = [(("s0", "s1"), ("t0", "t1")), (("s2",), ("t4",))]
        return model, table, batch

    def test_pure_mle(self):
        model, table, batch = self.setup_case()
        cfg = RiskTrainConfig(mle_weight=1.0)
        expect = np.mean([token_ls_loss(model, x, r, cfg.smoothing) for x, r in batch])
        assert weighted_loss(model, batch, cfg, table) == pytest.approx(expect, abs=1e-12)

    def test_pure_risk(self):
        model, table, batch = self.setup_case()
        cfg = RiskTrainConfig(mle_weight=0.0)
        risks = []
        for x, r in batch:
            nb = nbest(model, x, cfg.k, reference=r)
            score_candidates(nb, table, cfg.cost_kind)
            risks.append(risk_loss(nb))
        assert weighted_loss(model, batch, cfg, table) == pytest.approx(np.mean(risks), abs=1e-12)

    def test_convex_combination(self):
        model, table, batch = self.setup_case()
        lo = weighted_loss(model, batch, RiskTrainConfig(mle_weight=0.0), table)
        hi = weighted_loss(model, batch, RiskTrainConfig(mle_weight=1.0), table)
        mid = weighted_loss(model, batch, RiskTrainConfig(mle_weight=0.3), table)
        assert mid == pytest.approx(0.3 * hi + 0.7 * lo, abs=1e-12)


class TestNesterovStep:
    def test_zero_gradient_keeps_params(self):
        params = np.array([1.0, -2.0, 3.0])
        out, vel = nesterov_step(params, np.zeros(3), 0.5, 0.9, 0.1, np.zeros(3))
        assert np.array_equal(out, params)
        assert np.array_equal(vel, np.zeros(3))

    def test_momentum_zero_is_plain_sgd(self):
        params = np.array([1.0, 2.0])
        grads = np.array([0.03, -0.04])  # norm 0.05 < clip
        out, _ = nesterov_step(params, grads, 0.1, 0.0, 0.1, np.zeros(2))
        assert np.allclose(out, params - 0.1 * grads, atol=1e-15)

    def test_hand_traced_two_steps(self):
        # p0 = 1, loss p^2 so g = 2p, lr 0.1, momentum 0.9, clip inactive:
        # step 1: g=2,    v=2;    p = 1 - 0.1*(2 + 1.8)        = 0.62
        # step 2: g=1.24, v=3.04; p = 0.62 - 0.1*(1.24 + 2.736) = 0.2224
        p = np.array([1.0])
        v = np.zeros(1)
        p, v = nesterov_step(p, 2 * p, 0.1, 0.9, 10.0, v)
        assert p[0] == pytest.approx(0.62, abs=1e-12)
        p, v = nesterov_step(p, 2 * p, 0.1, 0.9, 10.0, v)
        assert p[0] == pytest.approx(0.2224, abs=1e-12)

    def test_clipping_rescales_down_only(self):
        # g = 2 with clip 0.1: scaled to 0.1; p = 1 - 0.1*(0.1 + 0.09) = 0.981
        p = np.array([1.0])
        p2, _ = nesterov_step(p, np.array([2.0]), 0.1, 0.9, 0.1, np.zeros(1))
        assert p2[0] == pytest.approx(0.981, abs=1e-12)
        # below the norm the gradient passes through unscaled
        p3, _ = nesterov_step(p, np.array([0.05]), 0.1, 0.0, 0.1, np.zeros(1))
        assert p3[0] == pytest.approx(1.0 - 0.1 * 0.05, abs=1e-15)

    def test_non_finite_gradient_aborts(self):
        with pytest.raises(NumericalError):
            nesterov_step(np.array([1.0]), np.array([np.nan]), 0.1, 0.9, 0.1, np.zeros(1))


def tiny_task(seed=0, n_train=24, n_valid=8):
    """Length-matched lexical translation data with synonym ambiguity."""
    rng = random.Random(seed)
    n_src = 6
    pairs = []
    for _ in range(n_train + n_valid):
        length = rng.randint(2, 4)
        xs = [f"s{rng.randrange(n_src)}" for _ in range(length)]
        us = []
        for tok in xs:
            base = int(tok[1:])
            us.append(f"t{2 * base}" if rng.random() < 0.7 else f"t{2 * base + 1}")
        pairs.append((tuple(xs), tuple(us)))
    model = make_model(np.zeros((n_src, 2 * n_src)))
    table = init_embeddings([f"t{i}" for i in range(2 * n_src)], dim=8, seed=seed)
    return model, pairs[:n_train], pairs[n_train:], table


class TestTrainMle:
    def test_loss_decreases(self):
        model, train, valid, _ = tiny_task()
        cfg = MleTrainConfig(learning_rate=0.5, momentum=0.9, clip_norm=1.0, anneal_factor=1.0, epochs=10, seed=1)
        trained, log = train_mle(model, train, valid, cfg)
        assert log[-1][2] < log[0][2]
        assert log[-1][3] < log[0][3]

    def test_annealing_schedule(self):
        model, train, valid, _ = tiny_task()
        cfg = MleTrainConfig(learning_rate=0.25, anneal_factor=10.0, anneal_floor=1e-4, epochs=6, seed=1)
        _, log = train_mle(model, train, valid, cfg)
        lrs = [row[1] for row in log]
        # reduced tenfold each epoch until below 1e-4, then held
        assert lrs[:6] == pytest.approx([0.25, 0.25, 0.025, 0.0025, 0.00025, 2.5e-05])
        assert lrs[6] == pytest.approx(2.5e-05)


class TestTrainRisk:
    def pretrained(self):
        model, train, valid, table = tiny_task(seed=3)
        cfg = MleTrainConfig(learning_rate=0.5, momentum=0.9, clip_norm=1.0, anneal_factor=1.0, epochs=8, seed=2)
        model, _ = train_mle(model, train, valid, cfg)
        return model, train, valid, table

    def test_zero_learning_rate_flat(self):
        model, train, valid, table = self.pretrained()
        cfg = RiskTrainConfig(learning_rate=0.0, epochs=3, seed=4)
        result = train_risk(model, train, valid, cfg, table)
        assert np.array_equal(result.model.theta, model.theta)
        costs = [(r.expected_bleu_cost, r.expected_simile_cost) for r in result.log]
        assert all(c == costs[0] for c in costs)

    def test_deterministic(self):
        model, train, valid, table = self.pretrained()
        cfg = RiskTrainConfig(epochs=3, seed=5)
        a = train_risk(model, train, valid, cfg, table)
        b = train_risk(model, train, valid, cfg, table)
        assert np.array_equal(a.model.theta, b.model.theta)
        assert a.log == b.log
        assert a.epoch1_eval == b.epoch1_eval

    def test_expected_cost_improves(self):
        model, train, valid, table = self.pretrained()
        cfg = RiskTrainConfig(epochs=5, cost_kind=CostKind.SIMILE, seed=6)
        result = train_risk(model, train, valid, cfg, table)
        assert result.log[5].expected_simile_cost < result.log[0].expected_simile_cost
        assert result.epoch1_eval is not None
        assert set(result.epoch1_eval) == {"bleu", "sim"}

    def test_best_epoch_has_lowest_weighted_loss(self):
        model, train, valid, table = self.pretrained()
        cfg = RiskTrainConfig(epochs=4, seed=7)
        result = train_risk(model, train, valid, cfg, table)
        losses = [row.val_weighted_loss for row in result.log]
        assert losses[result.best_epoch] == min(losses)
