"""Reproducible run pipeline: config loading plus the baseline / train /
eval / report stages, each writing its artifacts and a manifest that records
exactly how to re-execute it. The CLI and the HTTP service are both thin
wrappers over these functions."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import tomli

from . import envsim, kpi, maddpg
from .maddpg import Hyperparams
from .rbc import RbcConfig
from .reward import RewardWeights
from .scenario import (
    Scenario,
    generate_synthetic,
    load_scenario,
    save_scenario,
    scenario_fingerprint,
)

MANIFEST_FORMAT = "run-manifest-v1"


class ConfigError(ValueError):
    pass


class ArtifactMismatchError(RuntimeError):
    pass


_HP_KEYS = {
    "gamma", "tau", "batch_size", "buffer_capacity", "warmup_steps",
    "noise_sigma_start", "noise_sigma_end", "noise_decay_steps",
    "updates_per_step", "actor_hidden", "critic_units", "lr_actor",
    "lr_critic", "episodes", "noise_on_observations", "seed",
}
_WEIGHT_KEYS = {"alpha", "beta", "zeta", "ev_shortfall_scale", "rec_square_scale"}
_RBC_KEYS = {"cheap_hours", "storage_charge_hours", "storage_discharge_hours"}
_TOP_KEYS = {"scenario", "out"}


@dataclass(frozen=True)
class RunConfig:
    scenario_path: Path
    out_dir: Path
    hp: Hyperparams
    weights: RewardWeights
    rbc: RbcConfig

    def as_doc(self) -> dict:
        doc = {"scenario": str(self.scenario_path), "out": str(self.out_dir)}
        doc.update(maddpg.hp_to_doc(self.hp))
        doc.update(
            alpha=self.weights.alpha,
            beta=self.weights.beta,
            zeta=self.weights.zeta,
            ev_shortfall_scale=self.weights.ev_shortfall_scale,
            rec_square_scale=self.weights.rec_square_scale,
            cheap_hours=sorted(self.rbc.cheap_hours),
            storage_charge_hours=sorted(self.rbc.storage_charge_hours),
            storage_discharge_hours=sorted(self.rbc.storage_discharge_hours),
        )
        return doc


def build_config(values: dict, base_dir: Path | None = None) -> RunConfig:
    """Assemble a RunConfig from a flat key-value mapping. Unknown keys are
    rejected so typos fail loudly."""
    values = dict(values)
    unknown = set(values) - _HP_KEYS - _WEIGHT_KEYS - _RBC_KEYS - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "scenario" not in values:
        raise ConfigError("config must name a scenario descriptor ('scenario' key)")
    base = base_dir or Path(".")
    scenario_path = Path(values.pop("scenario"))
    if not scenario_path.is_absolute():
        scenario_path = base / scenario_path
    out_dir = Path(values.pop("out", "runs/default"))
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    try:
        hp_kwargs = {}
        for k in _HP_KEYS & set(values):
            v = values.pop(k)
            if k in ("actor_hidden", "critic_units"):
                v = tuple(int(x) for x in v)
            hp_kwargs[k] = v
        hp = Hyperparams(**hp_kwargs)
        weights = RewardWeights(**{k: float(values.pop(k)) for k in _WEIGHT_KEYS & set(values)})
        rbc = RbcConfig(
            **{k: frozenset(int(h) for h in values.pop(k)) for k in _RBC_KEYS & set(values)}
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(scenario_path, out_dir, hp, weights, rbc)


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Flat TOML config file; `overrides` (CLI flags) win over file values,
    file values win over defaults. Relative paths resolve against the config
    file's directory."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            values = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return build_config(values, base_dir=path.parent)


def config_sha256(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.as_doc(), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _write_manifest(directory: Path, command: str, cfg: RunConfig, s: Scenario, **extra) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "command": command,
        "config": cfg.as_doc(),
        "config_sha256": config_sha256(cfg),
        "scenario_fingerprint": scenario_fingerprint(s),
        "seed": cfg.hp.seed,
    }
    doc.update(extra)
    with open(directory / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_baseline(cfg: RunConfig) -> dict:
    """No-control rollout: plug-and-charge EVs, idle storages."""
    s = load_scenario(cfg.scenario_path)
    out = cfg.out_dir / "baseline"
    out.mkdir(parents=True, exist_ok=True)
    ro = envsim.rollout_policy(s, envsim.baseline_actions)
    trace = kpi.trace_from_rollout(s, ro)
    kpi.write_trace_csv(trace, out / "trace.csv")
    _write_manifest(out, "baseline", cfg, s)
    return {
        "trace_csv": str(out / "trace.csv"),
        "steps": s.horizon_steps,
        "dwellings": s.n_dwellings,
        "community_import_kwh": kpi.kpi_consumption_D(trace),
    }


def run_train(cfg: RunConfig) -> dict:
    s = load_scenario(cfg.scenario_path)
    out = cfg.out_dir / "train"
    out.mkdir(parents=True, exist_ok=True)
    result = maddpg.train(s, cfg.hp, cfg.weights, cfg.rbc)
    ckpt_dir = out / "checkpoints"
    maddpg.save_checkpoint(
        ckpt_dir,
        result.agents,
        cfg.hp,
        scenario_fingerprint(s),
        extra={"reward_weights": {
            "alpha": cfg.weights.alpha,
            "beta": cfg.weights.beta,
            "zeta": cfg.weights.zeta,
            "ev_shortfall_scale": cfg.weights.ev_shortfall_scale,
            "rec_square_scale": cfg.weights.rec_square_scale,
        }},
    )
    maddpg.write_training_log(result.log, out / "training_log.csv")
    _write_manifest(
        out, "train", cfg, s,
        warmup_steps=result.warmup_steps,
        noise_decay_steps=result.noise_decay_steps,
    )
    last_ep = result.log[-1].episode if result.log else None
    last_rows = [r for r in result.log if r.episode == last_ep]
    return {
        "checkpoint_dir": str(ckpt_dir),
        "training_log_csv": str(out / "training_log.csv"),
        "episodes": cfg.hp.episodes,
        "final_mean_reward": (
            sum(r.mean_reward for r in last_rows) / len(last_rows) if last_rows else None
        ),
    }


def run_eval(cfg: RunConfig, checkpoint_dir: str | Path | None = None) -> dict:
    s = load_scenario(cfg.scenario_path)
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else cfg.out_dir / "train" / "checkpoints"
    if not (ckpt_dir / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint manifest in {ckpt_dir}")
    agents, manifest = maddpg.load_checkpoint(ckpt_dir)
    want = scenario_fingerprint(s)
    got = manifest.get("scenario_fingerprint", "")
    if got != want:
        raise ArtifactMismatchError(
            f"checkpoint was trained on a different scenario "
            f"(checkpoint {got[:12]}..., config {want[:12]}...)"
        )
    out = cfg.out_dir / "eval"
    out.mkdir(parents=True, exist_ok=True)
    trace, departures = maddpg.evaluate_with_events(s, agents)
    kpi.write_trace_csv(trace, out / "trace.csv")
    shortfalls = [max(0.0, d.required_soc - d.achieved_soc) for d in departures]
    _write_manifest(out, "eval", cfg, s, checkpoint_dir=str(ckpt_dir))
    return {
        "trace_csv": str(out / "trace.csv"),
        "departures": len(shortfalls),
        "mean_departure_shortfall": (
            sum(shortfalls) / len(shortfalls) if shortfalls else 0.0
        ),
    }


def run_report(
    cfg: RunConfig,
    baseline_trace: str | Path | None = None,
    controlled_trace: str | Path | None = None,
) -> dict:
    s = load_scenario(cfg.scenario_path)
    base_path = Path(baseline_trace) if baseline_trace else cfg.out_dir / "baseline" / "trace.csv"
    ctrl_path = Path(controlled_trace) if controlled_trace else cfg.out_dir / "eval" / "trace.csv"
    for p in (base_path, ctrl_path):
        if not p.exists():
            raise FileNotFoundError(f"trace file not found: {p}")
    baseline = kpi.read_trace_csv(base_path, s.steps_per_day)
    controlled = kpi.read_trace_csv(ctrl_path, s.steps_per_day)
    report = kpi.build_report(controlled, baseline, s)
    out = cfg.out_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    kpi.write_report_csv(report, out / "report.csv")
    with open(out / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(kpi.render_report_text(report))
    _write_manifest(
        out, "report", cfg, s,
        baseline_trace=str(base_path), controlled_trace=str(ctrl_path),
    )
    return {
        "report_csv": str(out / "report.csv"),
        "report_txt": str(out / "report.txt"),
        "rows": [
            {
                "level": r.level,
                "scope": r.scope,
                "kpi": r.kpi,
                "raw_controlled": r.raw_controlled,
                "raw_baseline": r.raw_baseline,
                "ratio": r.ratio,
                "flags": list(r.flags),
            }
            for r in report.rows
        ],
    }


def run_synthetic(seed: int, n_dwellings: int, days: int, out_path: str | Path) -> dict:
    s = generate_synthetic(seed, n_dwellings, days)
    descriptor = save_scenario(s, Path(out_path))
    return {
        "descriptor": str(descriptor),
        "fingerprint": scenario_fingerprint(s),
        "horizon_steps": s.horizon_steps,
        "dwellings": s.n_dwellings,
    }
