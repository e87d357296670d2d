"""Acceptance checks, one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s -v`` or
``python3 tests/test_acceptance.py``.
"""

import os
import sys
import time

import numpy as np
import pytest

from heco import contrast as C
from heco import negatives as N
from heco.config import RunConfig
from heco.encoders import EncoderInputs, encode
from heco.evaluation import ari, classification_metrics, evaluate_embeddings, nmi, silhouette
from heco.hin import build_positive_negative_sets, compose_metapath_adjacency
from heco.io import SynthSpec, generate_synthetic_hin, load_dataset
from heco.model import HeCo
from heco.negatives import GanSchedule, MixupConfig
from heco.presets import synthetic_config
from heco.tensor import Tape, Tensor
from heco.train import train

from oracles import (
    ari_bruteforce,
    auc_bruteforce,
    central_difference,
    edge_sets,
    f1_scores_bruteforce,
    metapath_neighbors_bruteforce,
    nmi_bruteforce,
    parse_steps,
    positives_bruteforce,
    random_hin,
    silhouette_bruteforce,
)


def verdict(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} | {detail}")
    assert ok, detail


def scores(z, ds):
    rep = evaluate_embeddings(z, ds.graph.labels, {20: ds.splits[20]}, seed=0)
    return rep.get("macro_f1", "20")[0], rep.get("nmi", "all")[0]


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic_hin(SynthSpec(), 0)


@pytest.fixture(scope="module")
def heco_run(synth):
    t0 = time.process_time()
    model = HeCo(synth.graph, synthetic_config("heco", 0))
    res = train(model, early_stop=False)
    return model, res, time.process_time() - t0


def test_criterion_1_gradient_check(capsys):
    t0 = time.process_time()
    spec = SynthSpec(targets_per_class=10, aux_types={"author": 12, "subject": 6}, p_in=0.3, p_out=0.05)
    # seed 1 leaves no target isolated; an isolated target has an all-zero
    # schema embedding, where the cosine is not differentiable
    g = generate_synthetic_hin(spec, 1).graph
    assert g.num_targets == 30
    assert set(np.concatenate([r.edges[:, 0] for r in g.relations.values()]).tolist()) == set(range(30))
    model = HeCo(g, RunConfig(variant="hecopp", dim=8, t_pos=3, lambda1=0.5, lambda2=0.8, tau=0.6,
                              tau_sc=0.4, tau_mp=0.9))
    sampled = model.sample(np.random.default_rng(1))
    named = model.trainable()

    def loss():
        return model.objective(model.forward(sampled, None)).total

    with Tape() as tape:
        total = loss()
    grads = dict(zip(named, tape.gradient(total, list(named.values()))))
    rng = np.random.default_rng(0)
    names = sorted(named)
    worst = 0.0
    for _ in range(50):
        name = names[rng.integers(len(names))]
        p = named[name]
        coord = tuple(int(rng.integers(s)) for s in p.shape)
        fd = central_difference(lambda: loss().item(), p.data, h=1e-5, coords=[coord])[0]
        an = grads[name][coord]
        # 1e-8 floor: exactly-zero gradients (a softmax over one neighbour) come back as +-1e-18
        err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
        worst = max(worst, err)
    elapsed = time.process_time() - t0
    verdict(capsys, 1, "autodiff vs central differences", worst <= 1e-4 and elapsed < 120,
            f"max rel err {worst:.2e} (<= 1e-4), {elapsed:.1f}s CPU (< 120s)")


def test_criterion_2_oracle_equivalence(capsys):
    t0 = time.process_time()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        g = random_hin(rng, max_nodes=50)
        assert sum(g.num_nodes.values()) <= 50
        es = edge_sets(g)
        adjs = [compose_metapath_adjacency(g, p) for p in g.metapaths]
        brute = []
        for p, adj in zip(g.metapaths, adjs):
            want = metapath_neighbors_bruteforce(es, g.num_nodes, parse_steps(p.steps), g.num_targets)
            brute.append(want)
            mismatches += [set(adj.neighbors[i].tolist()) for i in range(g.num_targets)] != want
        t_pos = int(rng.integers(1, 8))
        got = build_positive_negative_sets(adjs, t_pos)
        mismatches += [p.tolist() for p in got.positives] != positives_bruteforce(brute, t_pos)
    elapsed = time.process_time() - t0
    verdict(capsys, 2, "meta-path composition and positive sets vs brute force",
            mismatches == 0 and elapsed < 60, f"{mismatches} mismatches over 200 graphs, {elapsed:.1f}s CPU (< 60s)")


def test_criterion_3_degeneracy(capsys, synth):
    kw = dict(epochs=20, feat_drop=0.2, attn_drop=0.2)
    heco = HeCo(synth.graph, synthetic_config("heco", 5, **kw))
    hecopp = HeCo(synth.graph, synthetic_config("hecopp", 5, lambda1=0.0, lambda2=0.0, **kw))
    a = train(heco, early_stop=False)
    b = train(hecopp, early_stop=False)
    same_loss = [r["total"] for r in a.loss_log] == [r["total"] for r in b.loss_log]
    same_z = heco.embeddings().tobytes() == hecopp.embeddings().tobytes()
    verdict(capsys, 3, "HeCo++ with zero intra weights equals HeCo", same_loss and same_z and len(a.loss_log) == 20,
            f"20 epoch losses bitwise equal: {same_loss}; final embeddings bitwise equal: {same_z}")


def test_criterion_4_view_mask(capsys, synth):
    model = HeCo(synth.graph, synthetic_config("heco", 0))
    for a in model.encoder.node_att.values():
        a.data[:] = 0.0
    sampled = model.sample(np.random.default_rng(0))
    base = model.forward(sampled, None).z_sc.data
    worst = 0.0
    for i in (0, 17, 150, 299):
        feats = dict(model.inputs.features)
        x = feats[synth.graph.target].data.copy()
        x[i] += 10.0
        feats[synth.graph.target] = Tensor(x)
        inputs = EncoderInputs(model.inputs.target, feats, model.inputs.gcn)
        z = encode(inputs, model.encoder, sampled, None, ("sc",)).z_sc.data
        worst = max(worst, float(np.max(np.abs(z[i] - base[i]))))
    verdict(capsys, 4, "schema-view embedding independent of own features", worst <= 1e-12,
            f"max |dz_i| = {worst:.1e} (<= 1e-12)")


@pytest.mark.slow
def test_criterion_5_planted_partition(capsys, synth, heco_run):
    t0 = time.process_time()
    model, _, heco_time = heco_run
    f1_h, nmi_h = scores(model.embeddings(), synth)
    f1_r, nmi_r = scores(np.asarray(synth.graph.features[synth.graph.target]), synth)
    pp = HeCo(synth.graph, synthetic_config("hecopp", 0))
    train(pp, early_stop=False)
    f1_p, nmi_p = scores(pp.embeddings(), synth)
    elapsed = heco_time + time.process_time() - t0
    ok = (f1_h >= 0.85 and nmi_h >= 0.60 and f1_h - f1_r >= 0.05 and nmi_h - nmi_r >= 0.05
          and f1_p >= f1_h - 0.02 and nmi_p >= nmi_h - 0.02 and elapsed < 300)
    verdict(capsys, 5, "planted-partition recovery", ok,
            f"HeCo Ma-F1 {f1_h:.3f} NMI {nmi_h:.3f}; raw Ma-F1 {f1_r:.3f} NMI {nmi_r:.3f}; "
            f"HeCo++ (l1={pp.config.lambda1:g}, l2={pp.config.lambda2:g}) Ma-F1 {f1_p:.3f} NMI {nmi_p:.3f}; "
            f"{elapsed:.0f}s CPU (< 300s)")


@pytest.mark.slow
def test_criterion_6_training_dynamics(capsys, heco_run):
    _, res, _ = heco_run
    first, last = res.losses[0], res.losses[-1]
    sums = {}
    for epoch, level, _, beta in res.attention_log:
        sums[(epoch, level)] = sums.get((epoch, level), 0.0) + beta
    levels = {lvl for _, lvl in sums}
    worst = max(abs(s - 1.0) for s in sums.values())
    ok = len(res.losses) == 200 and last <= 0.8 * first and levels == {"type", "metapath"} and worst <= 1e-9
    verdict(capsys, 6, "loss decrease and attention trends", ok,
            f"loss {first:.4f} -> {last:.4f} (ratio {last / first:.3f} <= 0.8); "
            f"{len(sums)} beta rows, max |sum - 1| = {worst:.1e}")


@pytest.mark.slow
def test_criterion_7_mixup(capsys, synth, heco_run):
    model, _, _ = heco_run
    emb = model.embed_views()
    p_sc = C.project(emb.z_sc, model.heads.cross).data
    p_mp = C.project(emb.z_mp, model.heads.cross).data
    k = 10
    neg = ~model.pos_mask
    mix = N.mix_hard_negatives(p_sc, p_mp, neg, MixupConfig(k), np.random.default_rng(3))
    again = N.mix_hard_negatives(p_sc, p_mp, neg, MixupConfig(k), np.random.default_rng(3))
    count_ok = mix.vectors.shape == (len(p_sc), k, p_sc.shape[1])
    worst_res, worst_neg, worst_sum = 0.0, 0.0, 0.0
    unit = lambda x: x / np.linalg.norm(x, axis=-1, keepdims=True)  # noqa: E731
    hardest_ok = True
    for i in range(0, len(p_sc), 7):
        cand = np.flatnonzero(neg[i])
        sims = unit(p_mp[cand]) @ unit(p_sc[i])
        top = cand[np.argsort(-sims, kind="stable")[:k]]
        hardest_ok &= sorted(top.tolist()) == sorted(mix.hardest[i].tolist())
        H = p_mp[top].T  # d x k
        for r in range(k):
            coef, *_ = np.linalg.lstsq(H, mix.vectors[i, r], rcond=None)
            worst_res = max(worst_res, float(np.abs(H @ coef - mix.vectors[i, r]).max()))
            worst_neg = max(worst_neg, float(-coef.min()))
            worst_sum = max(worst_sum, abs(coef.sum() - 1.0))
    det = mix.vectors.tobytes() == again.vectors.tobytes()
    ok = count_ok and hardest_ok and det and worst_res < 1e-9 and worst_neg < 1e-8 and worst_sum < 1e-8
    verdict(capsys, 7, "mixed hard negatives", ok,
            f"k={k} per anchor: {count_ok}; top-k matches: {hardest_ok}; recovered coefficients: "
            f"min >= {-worst_neg:.1e}, |sum-1| <= {worst_sum:.1e}, residual {worst_res:.1e}; deterministic: {det}")


@pytest.mark.slow
def test_criterion_8_gan_schedule(capsys, synth, heco_run):
    t0 = time.process_time()
    model_h, _, heco_time = heco_run
    sched = GanSchedule(k0=50, i_dg=2, k_d=20, k_g=20, k_h=50)
    model = HeCo(synth.graph, synthetic_config("heco_gan", 0, gan=sched))
    res = train(model, early_stop=False)
    phases, current = [], None
    for row in res.gan_log:
        if row["phase"] in ("D", "G"):
            if current is None or current[0] != row["phase"] or len(current[1]) == (sched.k_d if row["phase"] == "D" else sched.k_g):
                current = (row["phase"], [])
                phases.append(current)
            current[1].append(row)
    d_ok = [p[1][-1]["L_D"] < p[1][0]["L_D"] for p in phases if p[0] == "D"]
    g_ok = [p[1][-1]["D_fake"] > p[1][0]["D_fake"] for p in phases if p[0] == "G"]
    f1_g, _ = scores(model.embeddings(), synth)
    f1_h, _ = scores(model_h.embeddings(), synth)
    elapsed = heco_time + time.process_time() - t0
    ok = bool(d_ok) and all(d_ok) and bool(g_ok) and all(g_ok) and f1_g >= f1_h - 0.03 and elapsed < 600
    verdict(capsys, 8, "GAN schedule", ok,
            f"{sum(d_ok)}/{len(d_ok)} D phases lower L_D, {sum(g_ok)}/{len(g_ok)} G phases raise D(fake); "
            f"Ma-F1 GAN {f1_g:.3f} vs HeCo {f1_h:.3f} (>= -0.03); {elapsed:.0f}s CPU (< 600s)")


def test_criterion_9_metric_correctness(capsys):
    rng = np.random.default_rng(99)
    worst = 0.0
    for _ in range(100):
        n, c = int(rng.integers(6, 25)), int(rng.integers(2, 5))
        truth = np.concatenate([np.arange(c), rng.integers(0, c, n - c)])
        pred = rng.integers(0, c, n)
        probs = rng.dirichlet(np.ones(c), n).round(2)
        ma, mi, auc = classification_metrics(pred, probs, truth)
        bma, bmi = f1_scores_bruteforce(truth.tolist(), pred.tolist())
        bauc = auc_bruteforce(truth.tolist(), probs.tolist())
        other = rng.integers(0, int(rng.integers(1, 5)), n)
        x = rng.standard_normal((n, 3))
        worst = max(worst, abs(ma - bma), abs(mi - bmi), abs(auc - bauc),
                    abs(nmi(truth, other) - nmi_bruteforce(truth.tolist(), other.tolist())),
                    abs(ari(truth, other) - ari_bruteforce(truth.tolist(), other.tolist())),
                    abs(silhouette(x, truth) - silhouette_bruteforce(x.tolist(), truth.tolist())))
    verdict(capsys, 9, "metrics vs brute force", worst <= 1e-9, f"max abs diff {worst:.1e} over 100 instances (<= 1e-9)")


ACM = os.environ.get("HECO_ACM_BUNDLE")


@pytest.mark.skipif(not ACM, reason="set HECO_ACM_BUNDLE to a converted ACM bundle directory")
def test_criterion_10_acm(capsys):
    t0 = time.process_time()
    ds = load_dataset(ACM, l2_normalize=True)
    g = ds.graph
    assert g.num_nodes["paper"] == 4019
    model = HeCo(g, RunConfig(variant="heco", seed=0, lr=8e-4, tau=0.8, lam=0.5, t_pos=5, patience=5,
                              feat_drop=0.3, attn_drop=0.5, epochs=10_000, sample_sizes={"author": 7, "subject": 1}))
    train(model)
    rep = evaluate_embeddings(model.embeddings(), g.labels, {20: ds.splits[20]}, seed=0, cluster=False)
    f1 = rep.get("macro_f1", "20")[0]
    elapsed = time.process_time() - t0
    verdict(capsys, 10, "ACM Ma-F1(20)", 100 * f1 >= 85.0 and elapsed < 1800,
            f"Ma-F1(20) {100 * f1:.2f} (>= 85.0), {elapsed:.0f}s CPU (< 1800s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-v"]))
