"""Hyperparameter probe for the desk-scale directional run."""

import sys
import time

import numpy as np

from energaize import envsim, kpi, maddpg, scenario
from energaize.reward import RewardWeights


def probe(tag, hp, weights):
    s = scenario.generate_synthetic(7, 3, 28)
    t0 = time.time()
    res = maddpg.train(s, hp, weights)
    dt = time.time() - t0
    tr, deps = maddpg.evaluate_with_events(s, res.agents)
    base = kpi.trace_from_rollout(s, envsim.rollout_policy(s, envsim.baseline_actions))
    shortfalls = [max(0.0, d.required_soc - d.achieved_soc) for d in deps]
    rr = kpi.kpi_ramping_R(tr) / kpi.kpi_ramping_R(base)
    pr = kpi.kpi_daily_peak_P(tr)[0] / kpi.kpi_daily_peak_P(base)[0]
    cheap = np.asarray(s.price) == 0.10
    ch = np.maximum(tr.ev_grid, 0).sum(axis=1)
    print(
        f"{tag}: {dt:.0f}s ramping={rr:.3f} peak={pr:.3f} "
        f"shortfall={np.mean(shortfalls):.4f} (max {np.max(shortfalls):.3f}) "
        f"cheap={ch[cheap].mean():.3f} exp={ch[~cheap].mean():.3f} "
        f"ok={rr <= 0.95 and pr <= 0.97 and np.mean(shortfalls) <= 0.05 and ch[cheap].mean() > ch[~cheap].mean()}"
    )
    sys.stdout.flush()


HP = dict(episodes=30, actor_hidden=(64, 64), critic_units=(128, 128), batch_size=64, seed=7)

CONFIGS = {
    "A beta1.4 zeta.05 scale.05": (
        maddpg.Hyperparams(**HP),
        RewardWeights(alpha=0.2, beta=1.4, zeta=0.05, rec_square_scale=0.05),
    ),
    "B beta1.4 zeta.1 scale.02": (
        maddpg.Hyperparams(**HP),
        RewardWeights(alpha=0.2, beta=1.4, zeta=0.1, rec_square_scale=0.02),
    ),
    "C beta1.0 scale.02": (
        maddpg.Hyperparams(**HP),
        RewardWeights(alpha=0.2, beta=1.0, zeta=0.1, rec_square_scale=0.02),
    ),
}

if __name__ == "__main__":
    which = sys.argv[1:] or list(CONFIGS)
    for tag in which:
        hp, w = CONFIGS[tag]
        probe(tag, hp, w)
