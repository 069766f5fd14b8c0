"""Training campaigns, convergence measurement and PCA fidelity tables."""

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .coverage import map_mae
from .pca import CoveragePCA, fraction_of_components, sample_pose_maps
from .rl.agent import CLI_NAMES, LOG_FIELDS, build_agent, normalize_kind
from .rl.env import RelayEnv
from .validation import check_fraction, check_int

# convergence points read off the published learning curves, kept as metadata only
REFERENCE = {
    "episodes_to_convergence": {"E_TD3": 120, "TD3_PCA": 300, "TD3": 450},
    "pca_mae_db_at_0.995": 3.0,
    "pca_fraction_at_0.995": 0.22,
    "campaign": {"runs": 100, "episodes": 500},
}

FILE_NAMES = {kind: cli for cli, kind in CLI_NAMES.items()}


# -- convergence detection --------------------------------------------------


@dataclass(frozen=True)
class ConvergencePoint:
    episode: int
    start: float
    plateau: float
    threshold: float


def forward_smooth(curve, window):
    """``out[t] = mean(curve[t:t+window])``, truncated at the end of the curve."""
    c = np.asarray(curve, dtype=float)
    csum = np.concatenate([[0.0], np.cumsum(c)])
    idx = np.arange(len(c))
    hi = np.minimum(idx + window, len(c))
    return (csum[hi] - csum[idx]) / (hi - idx)


BASELINES = ("start", "zero")


def convergence_point(curve, window=10, theta=0.9, baseline="start"):
    """First episode at which a reward curve has covered ``theta`` of its total change.

    ``start`` is the mean of the first ``window`` episodes and ``plateau`` the
    mean of the last ``window``; the threshold is
    ``start + theta * (plateau - start)``. ``baseline='zero'`` measures from 0
    instead (threshold ``theta * plateau``), which only makes sense for
    curves that begin near zero. The detected episode is the first
    ``t`` where both the raw value and the forward-smoothed mean
    ``mean(curve[t:t+window])`` are at (or, for a falling curve, below) the
    threshold. A curve stepping from 0 to 1 at episode ``E`` therefore yields
    ``E``; a flat curve yields 0, and a curve that never qualifies yields its
    length.
    """
    c = np.asarray(curve, dtype=float).ravel()
    if c.size == 0:
        raise ValueError("convergence_point needs a non-empty curve")
    if not np.all(np.isfinite(c)):
        raise ValueError("curve contains non-finite values")
    check_int(window, "window", minimum=1)
    check_fraction(theta, "theta", low_open=True)
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}, got {baseline!r}")
    w = min(window, c.size)
    smooth = forward_smooth(c, w)
    start = float(smooth[0]) if baseline == "start" else 0.0
    plateau = float(np.mean(c[-w:]))
    threshold = start + theta * (plateau - start)
    if plateau >= start:
        ok = np.minimum(c, smooth) >= threshold
    else:
        ok = np.maximum(c, smooth) <= threshold
    hits = np.flatnonzero(ok)
    # a noisy tail can keep every episode short of the threshold: report the curve length
    episode = int(hits[0]) if hits.size else c.size
    return ConvergencePoint(episode, start, plateau, threshold)


def episodes_to_threshold(curve, window=10, theta=0.9, baseline="start"):
    return convergence_point(curve, window, theta, baseline).episode


# -- campaigns ---------------------------------------------------------------


def fit_scenario_pca(scenario, config, seed):
    maps = sample_pose_maps(scenario, config.channel, config.pca.n_maps, seed)
    return CoveragePCA(config.pca.variance_target).fit(maps)


def run_single(config, run, agents=None):
    """Train every agent kind for one run; returns ``{kind: [log rows]}``.

    The scenario (and the PCA fitted on it) is shared by all kinds in the run,
    so per-seed comparisons are paired.
    """
    config = load_config(config)
    agents = tuple(normalize_kind(k) for k in (agents or config.campaign.agents))
    seed = config.campaign.scenario_seed(run)
    agent_seed = config.campaign.seed_base + run
    try:
        scenario = config.scenario.build(seed)
        pca = None
        logs = {}
        for kind in agents:
            agent = build_agent(
                kind, config.hyper_for(kind), network=config.network,
                max_step=config.env.max_step, seed=agent_seed,
            )
            if agent.state_mode == "pca" and pca is None:
                pca = fit_scenario_pca(scenario, config, seed)
            env = RelayEnv(
                scenario, config.env, pca if agent.state_mode == "pca" else None,
                agent.state_mode, agent.n_frames,
            )
            agent.fit(env, config.campaign.episodes, run_id=run)
            logs[kind] = agent.history_
    except Exception as exc:
        raise RuntimeError(f"run {run} (scenario seed {seed}) failed: {exc}") from exc
    return logs


def _run_job(args):
    return run_single(*args)


@dataclass
class AgentCurves:
    """Per-agent campaign outcome; ``curves`` is ``(runs, episodes)``."""

    kind: str
    curves: np.ndarray
    logs: list
    convergence: ConvergencePoint
    per_run_episodes: list

    @property
    def mean_curve(self):
        return self.curves.mean(axis=0)

    @property
    def std_curve(self):
        return self.curves.std(axis=0)

    @property
    def n_runs(self):
        return self.curves.shape[0]

    def final_mean(self, last=50):
        return float(self.curves[:, -last:].mean())


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    agents: dict = field(default_factory=dict)

    def to_dict(self):
        conv = self.config.convergence
        out = {
            "config": self.config.to_dict(),
            "config_hash": self.config.hash(),
            "convergence_rule": {"window": conv.window, "theta": conv.theta, "baseline": conv.baseline},
            "agents": {},
            "reference": REFERENCE,
        }
        for kind, a in self.agents.items():
            cp = a.convergence
            out["agents"][kind] = {
                "episodes_to_threshold": cp.episode,
                "threshold": cp.threshold,
                "start": cp.start,
                "plateau": cp.plateau,
                "runs": a.n_runs,
                "per_run_episodes_to_threshold": list(a.per_run_episodes),
                "median_episodes_to_threshold": float(np.median(a.per_run_episodes)),
                "final_window_mean_reward": a.final_mean(min(50, a.curves.shape[1])),
            }
        return out


def _collect(config, kind, per_run_logs):
    conv = config.convergence
    logs = [row for rows in per_run_logs for row in rows]
    curves = np.array([[row["mean_step_reward"] for row in rows] for rows in per_run_logs])
    per_run = [episodes_to_threshold(c, conv.window, conv.theta, conv.baseline) for c in curves]
    point = convergence_point(curves.mean(axis=0), conv.window, conv.theta, conv.baseline)
    return AgentCurves(kind, curves, logs, point, per_run)


def run_campaign(config, agents=None, parallel=None):
    """Train ``runs`` seeded runs per agent and aggregate their reward curves.

    Runs are independent; with ``parallel > 1`` they are spread over worker
    processes and gathered in run order, so results do not depend on
    scheduling.
    """
    config = load_config(config)
    agents = tuple(normalize_kind(k) for k in (agents or config.campaign.agents))
    runs = range(config.campaign.runs)
    workers = config.campaign.parallel if parallel is None else check_int(parallel, "parallel", minimum=1)
    jobs = [(config, r, agents) for r in runs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    report = ConvergenceReport(config)
    for kind in agents:
        report.agents[kind] = _collect(config, kind, [res[kind] for res in results])
    return report


def _fmt(x):
    return repr(float(x))


def write_curves_csv(curves, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["episode", "mean_reward", "std_reward"])
        for ep, (m, s) in enumerate(zip(curves.mean_curve, curves.std_curve)):
            w.writerow([ep, _fmt(m), _fmt(s)])


def write_log_csv(logs, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for row in logs:
            w.writerow([row[k] if isinstance(row[k], int) else _fmt(row[k]) for k in LOG_FIELDS])


def write_campaign(report, out_dir):
    """Write ``curves_<agent>.csv``, ``log_<agent>.csv`` and ``report.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind, curves in report.agents.items():
        name = FILE_NAMES[kind]
        paths.append(out / f"curves_{name}.csv")
        write_curves_csv(curves, paths[-1])
        paths.append(out / f"log_{name}.csv")
        write_log_csv(curves.logs, paths[-1])
    paths.append(out / "report.json")
    with open(paths[-1], "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


# -- PCA fidelity --------------------------------------------------------------


@dataclass(frozen=True)
class FidelityRow:
    target: float
    n_components: int
    rank: int
    fraction_components: float
    mean_mae: float
    per_map_mae: tuple


def pca_fidelity_report(scenario, variance_targets, params, n_maps=100, seed=0, maps=None):
    """Per-target reconstruction error of a PCA fitted on a batch of pose maps.

    The decomposition is computed once; each target only changes how many
    leading components are kept. MAE is measured on the fitting batch itself.
    """
    targets = [check_fraction(t, "variance target", low_open=True) for t in variance_targets]
    if not targets:
        raise ValueError("at least one variance target is required")
    if maps is None:
        maps = sample_pose_maps(scenario, params, check_int(n_maps, "n_maps", minimum=2), seed)
    base = CoveragePCA(targets[0]).fit(maps)
    rows = []
    for t in targets:
        model = base.retarget(t)
        maes = tuple(map_mae(m, model.reconstruct(model.project(m))) for m in maps)
        rows.append(FidelityRow(
            t, model.n_components_, model.rank_, fraction_of_components(model),
            float(np.mean(maes)), maes,
        ))
    return rows


def write_fidelity_csv(rows, path, per_map_path=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "n_components", "rank", "fraction_components", "mean_mae_db"])
        for r in rows:
            w.writerow([_fmt(r.target), r.n_components, r.rank, _fmt(r.fraction_components), _fmt(r.mean_mae)])
    if per_map_path is not None:
        with open(per_map_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["target", "map_index", "mae_db"])
            for r in rows:
                for i, m in enumerate(r.per_map_mae):
                    w.writerow([_fmt(r.target), i, _fmt(m)])


def read_curves_csv(path):
    """Inverse of ``write_curves_csv``: ``(episodes, mean, std)`` arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0].astype(int), data[:, 1], data[:, 2]


def paired_ordering(report, fast="E_TD3", slow="TD3"):
    """Seed-paired comparison of episodes-to-threshold and final rewards."""
    a, b = report.agents[fast], report.agents[slow]
    wins = sum(x <= y for x, y in zip(a.per_run_episodes, b.per_run_episodes))
    last = min(50, a.curves.shape[1])
    return {
        "paired_wins": int(wins),
        "runs": len(a.per_run_episodes),
        "median_fast": float(np.median(a.per_run_episodes)),
        "median_slow": float(np.median(b.per_run_episodes)),
        "final_mean_fast": a.final_mean(last),
        "final_mean_slow": b.final_mean(last),
    }
