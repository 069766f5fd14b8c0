"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line."""

import time

import numpy as np
import pytest
from conftest import flat_terrain
from scipy.stats import chisquare
from test_nn import _check_layer, _close, _numeric_grad, _tiny_net
from test_pca import _scenario
from test_replay import _filled, _frequencies, _t
from test_rl import TINY_NET, _agent, _batch, _fill

from uavrelay.channel import ChannelParams, fspl_bs, fspl_uav, ked_loss, knife_edge_j
from uavrelay.config import load_config
from uavrelay.coverage import map_mae
from uavrelay.harness import fit_scenario_pca, paired_ordering, pca_fidelity_report, run_campaign
from uavrelay.nn import ConcatAux, Conv2D, Dense, Flatten, LeakyReLU, Network, Tanh, build_spec, huber_loss, soft_update
from uavrelay.pca import CoveragePCA, sample_pose_maps
from uavrelay.replay import PrioritizedReplayBuffer
from uavrelay.rl import RelayEnv, build_agent
from uavrelay.world import Position3D, elevation_at, generate_terrain


def test_channel_oracle(verdict):
    t0 = time.perf_counter()
    # independent closed forms: 20log10(4*pi*d*f/c) with c from the 147.55 dB constant
    bs = fspl_bs(1000.0, 2.4e9)
    uav = fspl_uav(1000.0, 2.4e9)
    bs_ref = -(20 * 3 + 20 * np.log10(2.4e9) - 147.55)
    uav_ref = -(21.3 * 3 + 21.3 * np.log10(2.4e9) - 157.2)
    d_bs = fspl_bs(2000.0, 2.4e9) - bs
    d_uav = fspl_uav(2000.0, 2.4e9) - uav
    elapsed = time.perf_counter() - t0
    verdict("channel oracle", {
        "fspl_bs(1000, 2.4e9) = -100.054": abs(bs - -100.054) <= 1e-3 and abs(bs - bs_ref) <= 1e-9,
        "fspl_uav(1000, 2.4e9) = -106.499": abs(uav - -106.499) <= 1e-3 and abs(uav - uav_ref) <= 1e-9,
        "doubling -6.0206": abs(d_bs - -20 * np.log10(2)) <= 1e-9 and abs(d_bs - -6.0206) <= 1e-4,
        "doubling -6.4119": abs(d_uav - -21.3 * np.log10(2)) <= 1e-9 and abs(d_uav - -6.4119) <= 1e-4,
        "runtime < 1 s": elapsed < 1.0,
    }, f"bs {bs:.4f} dB, uav {uav:.4f} dB, {elapsed:.3f} s")


def test_knife_edge(verdict):
    t0 = time.perf_counter()
    j0 = float(knife_edge_j(0.0))
    flat = flat_terrain(n=33, cell_size=50.0, height=20.0)
    rng = np.random.default_rng(0)
    flat_losses = [
        ked_loss(flat, Position3D(*rng.uniform(0, 1600, 2), rng.uniform(21, 300)),
                 Position3D(*rng.uniform(0, 1600, 2), 21.5), 2.4e9)
        for _ in range(50)
    ]
    sweep_ok = True
    for seed in range(5):
        t = generate_terrain(seed, 17, 17, 100.0, 80.0, 0.0)
        r = np.random.default_rng(seed)
        x, y = r.uniform(0, t.extent_x, 2)
        rx = Position3D(x, y, elevation_at(t, x, y) + 1.5)
        tx_xy = r.uniform(0, t.extent_x, 2)
        losses = [ked_loss(t, Position3D(*tx_xy, z), rx, 2.4e9) for z in np.linspace(10, 20000, 25)]
        sweep_ok &= losses[-1] == 0.0 and all(l <= 0 for l in losses)
    elapsed = time.perf_counter() - t0
    verdict("knife-edge diffraction", {
        "J(0) = 6.03 +- 0.05": abs(j0 - 6.03) <= 0.05,
        "flat terrain gives 0 loss": all(l == 0.0 for l in flat_losses),
        "altitude sweep reaches exactly 0": sweep_ok,
        "runtime < 5 s": elapsed < 5.0,
    }, f"J(0) = {j0:.4f} dB, {elapsed:.2f} s")


def test_pca_suite(verdict):
    t0 = time.perf_counter()
    params = ChannelParams()
    maps = sample_pose_maps(_scenario(0), params, 40, 0)
    model = CoveragePCA(1.0).fit(maps)
    X = np.stack([m.values.ravel() for m in maps])
    ref = np.sort(np.linalg.eigvalsh(np.cov(X, rowvar=False)))[::-1][: model.rank_]
    eig_ok = np.allclose(model.eigenvalues_, ref, rtol=1e-8, atol=1e-8 * ref[0])
    round_trip = max(map_mae(m, model.reconstruct(model.project(m))) for m in maps)

    partial = model.retarget(0.98)
    k = partial.n_components_
    ident_ok = True
    for m in maps:
        x = m.values.ravel()
        err = np.sum((x - partial.inverse_transform(partial.transform(x))[0]) ** 2)
        discarded = np.sum(partial.full_scores(x)[0][k:] ** 2)
        ident_ok &= abs(err - discarded) <= 1e-6 * max(discarded, 1e-12) + 1e-9

    mono_ok = True
    for seed in range(5):
        sm = sample_pose_maps(_scenario(seed, 12), params, 30, seed)
        base = CoveragePCA(1.0).fit(sm)
        maes = [np.mean([map_mae(m, base.retarget(t).reconstruct(base.retarget(t).project(m))) for m in sm])
                for t in (0.96, 0.98, 0.995, 1.0)]
        mono_ok &= all(b <= a + 1e-12 for a, b in zip(maes, maes[1:]))
    elapsed = time.perf_counter() - t0
    verdict("PCA suite", {
        "eigenvalues match dense oracle to 1e-8": eig_ok,
        "full-rank round trip MAE <= 1e-6 dB": round_trip <= 1e-6,
        "MAE nonincreasing over targets on 5 scenarios": mono_ok,
        "reconstruction-error identity 1e-6": ident_ok,
        "runtime < 30 s": elapsed < 30.0,
    }, f"round trip {round_trip:.2e} dB, {elapsed:.2f} s")


def test_nn_gradients(verdict):
    t0 = time.perf_counter()
    checks = {}
    for seed in range(5):
        rng = np.random.default_rng(seed)
        for name, layer, shape, kw in (
            ("conv2d", Conv2D(2, 3, 3, 2), (2, 9, 8), {}),
            ("dense", Dense(5), (7,), {}),
            ("leaky_relu", LeakyReLU(0.01), (3, 4), {}),
            ("tanh", Tanh(), (6,), {}),
            ("flatten", Flatten(), (2, 3, 2), {}),
            ("concat_aux", ConcatAux(3), (4,), {"aux_len": 3}),
        ):
            try:
                _check_layer(layer, shape, rng, **kw)
                ok = True
            except AssertionError:
                ok = False
            checks[f"{name} finite differences"] = checks.get(f"{name} finite differences", True) and ok
        pred = rng.normal(scale=2.0, size=(6, 1))
        pred[np.abs(np.abs(pred) - 1.0) < 1e-3] += 0.01
        target = np.zeros((6, 1))
        _, g = huber_loss(pred, target)
        num = _numeric_grad(lambda: huber_loss(pred, target)[0], pred, range(6))
        checks["huber finite differences"] = checks.get("huber finite differences", True) and _close(g.ravel(), num)
        net = _tiny_net(seed)
        image, aux, r = rng.normal(size=(2, 1, 9, 9)), rng.normal(size=(2, 4)), rng.normal(size=(2, 2))
        net.forward(image, aux)
        d_img, _ = net.backward(r)
        idx = rng.choice(image.size, 10, replace=False)
        num = _numeric_grad(lambda: float(np.sum(net.forward(image, aux) * r)), image, idx)
        checks["network finite differences"] = checks.get("network finite differences", True) and _close(d_img.flat[idx], num)
    net = Network(build_spec(51, 1), (1, 30, 30))
    convs = [s for s, l in zip(net.shapes[1:], net.layers) if isinstance(l, (Conv2D, Flatten))]
    checks["full-width shape chain 30x30 to 10816"] = convs == [(32, 14, 14), (64, 13, 13), (64, 13, 13), (10816,)]
    elapsed = time.perf_counter() - t0
    checks["runtime < 60 s"] = elapsed < 60.0
    verdict("NN gradients", checks, f"chain {convs}, {elapsed:.2f} s")


def test_huber_values(verdict):
    small = huber_loss(np.array([0.5]), np.array([0.0]), 1.0)[0]
    large = huber_loss(np.array([2.0]), np.array([0.0]), 1.0)[0]
    gap = max(
        abs(huber_loss(np.array([s * (1 - 1e-9)]), np.array([0.0]))[0] - huber_loss(np.array([s * (1 + 1e-9)]), np.array([0.0]))[0])
        for s in (1.0, -1.0)
    )
    verdict("Huber values", {
        "0.125 at e=0.5": small == 0.125,
        "1.5 at e=2": large == 1.5,
        "continuous at |e|=delta within 1e-6": gap <= 1e-6,
    }, f"{small}, {large}, gap {gap:.1e}")


def test_prioritized_replay(verdict):
    t0 = time.perf_counter()
    pvals = []
    for seed in range(4):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 65))
        pri = rng.uniform(0.05, 3.0, size=n)
        buf = _filled(pri, alpha=0.6, seed=seed)
        expected = pri**0.6 / np.sum(pri**0.6)
        counts = _frequencies(buf, 100_000)
        pvals.append(chisquare(counts, expected * counts.sum()).pvalue)
    rng = np.random.default_rng(0)
    buf = PrioritizedReplayBuffer(37, alpha=0.6, seed=1)
    worst = 0.0
    for op in range(10_000):
        r = rng.random()
        if r < 0.4 or len(buf) < 8:
            buf.push(_t(op))
        elif r < 0.7:
            buf.sample(8, beta=rng.random())
        else:
            buf.update_priorities(rng.choice(buf.stored_serials(), size=4), rng.exponential(2.0, size=4))
        leaves = buf.priorities[: len(buf)] ** 0.6
        worst = max(worst, abs(buf.tree.total - leaves.sum()) / leaves.sum())
    elapsed = time.perf_counter() - t0
    verdict("prioritized replay", {
        "chi-square at 99%": min(pvals) > 0.01,
        "sum-tree root within 1e-9 over 1e4 ops": worst <= 1e-9,
        "runtime < 60 s": elapsed < 60.0,
    }, f"min p-value {min(pvals):.3f}, worst rel. error {worst:.1e}, {elapsed:.1f} s")


def test_td3_mechanics(verdict):
    b, term = _batch(), _batch(done=True)
    gamma0 = np.array_equal(_agent(gamma=0.0).compute_targets(b), b.reward)
    masked = np.array_equal(_agent(gamma=0.99).compute_targets(term), term.reward)
    soft = True
    for tau in (0.0, 1.0, 0.005):
        target, online = [np.zeros((3, 3))], [np.ones((3, 3))]
        soft_update(target, online, tau)
        soft &= np.all(target[0] == tau)
    agent = _agent(policy_delay=2)
    _fill(agent, 10)
    flags = [agent.train_step()["actor_loss"] is not None for _ in range(6)]
    verdict("TD3 mechanics", {
        "gamma=0 gives target = reward": gamma0,
        "terminal masking": masked,
        "soft update exact for tau 0, 1, 0.005": soft,
        "actor updates every d steps": flags == [False, True] * 3 and agent.n_actor_updates_ == 3,
    }, f"actor update pattern {flags}")


def _etd3_rewards(config, seed):
    scenario = config.scenario.build(seed)
    agent = build_agent("E_TD3", config.hyper_for("E_TD3"), network=config.network,
                        max_step=config.env.max_step, seed=seed)
    env = RelayEnv(scenario, config.env, fit_scenario_pca(scenario, config, seed), "pca", agent.n_frames)
    agent.fit(env, 10)
    return [(r["mean_step_reward"], r["critic1_loss"], r["actor_loss"]) for r in agent.history_]


def test_end_to_end_determinism(verdict):
    t0 = time.perf_counter()
    config = load_config("desk")
    a = _etd3_rewards(config, 3)
    b = _etd3_rewards(config, 3)
    elapsed = time.perf_counter() - t0
    same = len(a) == 10 and np.array_equal(np.array(a), np.array(b), equal_nan=True)
    verdict("end-to-end determinism", {
        "10-episode E-TD3 log bit-identical": same,
        "runtime < 5 min": elapsed < 300.0,
    }, f"{elapsed:.1f} s for two runs")


@pytest.mark.slow
def test_convergence_ordering(verdict, tmp_path):
    config = load_config("desk").replace(runs=10, episodes=150, agents=("TD3", "E_TD3"))
    t0 = time.perf_counter()
    report = run_campaign(config)
    elapsed = time.perf_counter() - t0
    order = paired_ordering(report, fast="E_TD3", slow="TD3")
    verdict("convergence ordering", {
        "E-TD3 at or before TD3 in >= 7 of 10 paired seeds": order["paired_wins"] >= 7,
        "E-TD3 final-50 mean reward >= TD3": order["final_mean_fast"] >= order["final_mean_slow"],
    }, (
        f"paired wins {order['paired_wins']}/{order['runs']}, "
        f"median episodes E-TD3 {order['median_fast']:g} vs TD3 {order['median_slow']:g}, "
        f"final-50 reward E-TD3 {order['final_mean_fast']:.4f} vs TD3 {order['final_mean_slow']:.4f}, "
        f"per-run E-TD3 {report.agents['E_TD3'].per_run_episodes} TD3 {report.agents['TD3'].per_run_episodes}, "
        f"{elapsed / 60:.1f} min"
    ))


def test_pca_fidelity_reference(verdict):
    t0 = time.perf_counter()
    config = load_config("desk")
    rows = []
    for seed in range(3):
        scenario = config.scenario.build(seed)
        rows.append(pca_fidelity_report(scenario, [0.995], config.channel, n_maps=config.pca.fidelity_maps, seed=seed)[0])
    elapsed = time.perf_counter() - t0
    mae = float(np.mean([r.mean_mae for r in rows]))
    frac = max(r.fraction_components for r in rows)
    verdict("PCA fidelity reference", {
        "mean per-map MAE <= 6 dB": all(r.mean_mae <= 6.0 for r in rows),
        "retained fraction < 50%": frac < 0.5,
        "runtime < 2 min": elapsed < 120.0,
    }, (
        f"MAE per scenario {[round(r.mean_mae, 3) for r in rows]} dB, "
        f"components {[f'{r.n_components}/{r.rank}' for r in rows]}, {elapsed:.1f} s"
    ))
