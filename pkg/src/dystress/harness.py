"""Experiment driver: config schema, training loop, evaluation, sweeps.

Configs are versioned JSON with fail-fast schema checking: unknown fields
are rejected everywhere so typos cannot silently fall back to defaults.
A run is fully determined by its config (and in particular its seed): data
generation, weight init, batch order, and augmentations all derive from
named substreams of the one seed, and every reduction is executed in a
fixed order, so repeating a run reproduces its metrics CSV byte for byte.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import encoder as enc
from . import loss as loss_mod
from . import metrics as metrics_mod
from . import synthetic
from .errors import NumericError, ValidationError
from .geometry import EmbeddingBatch, write_embedding_dump
from .numeric import Rng, fmt
from .temperature import TemperatureProfile

CONFIG_VERSION = 1
WORKERS_ENV_VAR = "DYSTRESS_WORKERS"
DEFAULT_SWEEP_CAP = 256


@dataclass(frozen=True)
class OptimizerSettings:
    lr: float = 0.06
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if not (np.isfinite(self.lr) and self.lr > 0):
            raise ValidationError("lr must be positive and finite")
        if not (0.0 <= self.momentum < 1.0):
            raise ValidationError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be non-negative")


@dataclass(frozen=True)
class ExperimentConfig:
    synthetic: synthetic.SyntheticSpec
    encoder: enc.EncoderSpec
    profile: TemperatureProfile
    loss_mode: loss_mod.LossMode
    optimizer: OptimizerSettings
    batch_size: int
    epochs: int
    eval_every: int
    knn_k: int
    knn_weight_temperature: float
    seed: int
    out_dir: Optional[Path] = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValidationError("batch_size must be at least 2")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if self.eval_every < 1:
            raise ValidationError("eval_every must be at least 1")
        if self.knn_k < 1:
            raise ValidationError("knn_k must be at least 1")
        if self.knn_weight_temperature <= 0:
            raise ValidationError("knn_weight_temperature must be positive")
        if self.encoder.layer_widths[0] != self.synthetic.ambient_dim:
            raise ValidationError(
                f"encoder input width {self.encoder.layer_widths[0]} does not match "
                f"ambient_dim {self.synthetic.ambient_dim}"
            )

    def to_dict(self) -> dict:
        return {
            "config_version": CONFIG_VERSION,
            "seed": self.seed,
            "synthetic": self.synthetic.to_dict(include_seed=False),
            "encoder": self.encoder.to_dict(),
            "profile": self.profile.to_dict(),
            "loss_mode": self.loss_mode.value,
            "optimizer": {
                "lr": self.optimizer.lr,
                "momentum": self.optimizer.momentum,
                "weight_decay": self.optimizer.weight_decay,
            },
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "eval_every": self.eval_every,
            "knn_k": self.knn_k,
            "knn_weight_temperature": self.knn_weight_temperature,
            "out_dir": None if self.out_dir is None else str(self.out_dir),
        }


def _check_fields(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValidationError(f"unknown fields in {where}: {sorted(unknown)}")


DEFAULTS = {
    "synthetic": {
        "num_classes": 10,
        "samples_per_class": 100,
        "ambient_dim": 32,
        "intra_class_sigma": 0.2,
        "augment_sigma": 0.15,
        "long_tail_rho": 1.0,
    },
    "encoder": {"layer_widths": [32, 64, 16], "nonlinearity": "tanh", "init_scale": 1.0},
    "profile": {"variant": "cosine_vanilla", "tau_min": 0.1, "tau_max": 0.2},
    "optimizer": {"lr": 0.06, "momentum": 0.9, "weight_decay": 5e-4},
    "loss_mode": "detached",
    "batch_size": 128,
    "epochs": 200,
    "eval_every": 20,
    "knn_k": 20,
    "knn_weight_temperature": 0.07,
    "seed": 0,
}


def config_from_dict(raw: dict, out_dir: Optional[Path] = None) -> ExperimentConfig:
    """Parse a versioned config dict, rejecting unknown fields at every level."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    top_allowed = {
        "config_version",
        "seed",
        "synthetic",
        "encoder",
        "profile",
        "loss_mode",
        "optimizer",
        "batch_size",
        "epochs",
        "eval_every",
        "knn_k",
        "knn_weight_temperature",
        "out_dir",
    }
    _check_fields(raw, top_allowed, "config")
    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        raise ValidationError(f"config_version must be {CONFIG_VERSION}, got {version!r}")
    seed = int(raw.get("seed", DEFAULTS["seed"]))

    syn_raw = {**DEFAULTS["synthetic"], **raw.get("synthetic", {})}
    _check_fields(syn_raw, set(DEFAULTS["synthetic"]), "config.synthetic")
    syn = synthetic.SyntheticSpec(seed=seed, **syn_raw)

    enc_raw = {**DEFAULTS["encoder"], **raw.get("encoder", {})}
    _check_fields(enc_raw, set(DEFAULTS["encoder"]), "config.encoder")
    encoder_spec = enc.EncoderSpec(
        layer_widths=tuple(enc_raw["layer_widths"]),
        nonlinearity=enc_raw["nonlinearity"],
        init_scale=enc_raw["init_scale"],
    )

    profile = TemperatureProfile.from_dict(raw.get("profile", dict(DEFAULTS["profile"])))

    opt_raw = {**DEFAULTS["optimizer"], **raw.get("optimizer", {})}
    _check_fields(opt_raw, set(DEFAULTS["optimizer"]), "config.optimizer")
    optimizer = OptimizerSettings(**opt_raw)

    mode_raw = raw.get("loss_mode", DEFAULTS["loss_mode"])
    try:
        mode = loss_mod.LossMode(mode_raw)
    except ValueError as err:
        raise ValidationError(f"loss_mode must be 'detached' or 'coupled', got {mode_raw!r}") from err

    resolved_out = out_dir if out_dir is not None else raw.get("out_dir")
    return ExperimentConfig(
        synthetic=syn,
        encoder=encoder_spec,
        profile=profile,
        loss_mode=mode,
        optimizer=optimizer,
        batch_size=int(raw.get("batch_size", DEFAULTS["batch_size"])),
        epochs=int(raw.get("epochs", DEFAULTS["epochs"])),
        eval_every=int(raw.get("eval_every", DEFAULTS["eval_every"])),
        knn_k=int(raw.get("knn_k", DEFAULTS["knn_k"])),
        knn_weight_temperature=float(
            raw.get("knn_weight_temperature", DEFAULTS["knn_weight_temperature"])
        ),
        seed=seed,
        out_dir=None if resolved_out is None else Path(resolved_out),
    )


def load_config(path: str | Path, out_dir: Optional[Path] = None) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return config_from_dict(raw, out_dir=out_dir)


def default_config(**overrides) -> ExperimentConfig:
    """Desk-scale default setup; keyword overrides replace dataclass fields.

    A 'seed' override flows into the synthetic spec as well (the dataset is
    part of the experiment's randomness).
    """
    seed = int(overrides.pop("seed", DEFAULTS["seed"]))
    config = config_from_dict({"config_version": CONFIG_VERSION, "seed": seed})
    return replace(config, **overrides) if overrides else config


# ---------------------------------------------------------------------------
# Single experiment
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    config: ExperimentConfig
    reports: list[metrics_mod.MetricsReport]
    histogram_initial: metrics_mod.Histogram
    histogram_final: metrics_mod.Histogram
    out_dir: Optional[Path]

    @property
    def final_report(self) -> metrics_mod.MetricsReport:
        return self.reports[-1]


def _eval_state(
    config: ExperimentConfig,
    params: enc.EncoderParams,
    train_set: synthetic.Dataset,
    test_set: synthetic.Dataset,
    root_rng: Rng,
    epoch: int,
    with_histogram: bool,
) -> tuple[metrics_mod.MetricsReport, Optional[metrics_mod.Histogram], EmbeddingBatch]:
    """Forward-only evaluation pass at a given number of completed epochs."""
    e_train, _ = enc.encode(params, train_set.inputs)
    e_test, _ = enc.encode(params, test_set.inputs)
    rng_eval = root_rng.substream("eval-augment", index=epoch)
    v1, v2 = synthetic.augment_views(train_set.inputs, config.synthetic.augment_sigma, rng_eval)
    z1, _ = enc.encode(params, v1)
    z2, _ = enc.encode(params, v2)
    batch = EmbeddingBatch(
        view_a=z1, view_b=z2, sample_ids=train_set.sample_ids, labels=train_set.labels
    )
    report = metrics_mod.MetricsReport(
        epoch=epoch,
        loss=loss_mod.forward(batch, config.profile),
        uniformity=metrics_mod.uniformity(e_train),
        alignment=metrics_mod.alignment(batch),
        tolerance=metrics_mod.tolerance(e_train, train_set.labels),
        interclass_uniformity=metrics_mod.interclass_uniformity(e_train, train_set.labels),
        knn_top1=metrics_mod.knn_probe(
            e_train,
            train_set.labels,
            e_test,
            test_set.labels,
            k=min(config.knn_k, e_train.shape[0]),
            weight_temperature=config.knn_weight_temperature,
        ),
    )
    histogram = metrics_mod.pair_histograms(batch) if with_histogram else None
    return report, histogram, batch


def run_experiment(config: ExperimentConfig, data_path: Optional[str | Path] = None) -> RunResult:
    """Train, evaluate periodically, and write all artifacts.

    Artifacts in out_dir (when set): config.json, metrics.csv,
    histogram_epoch0.csv, histogram_final.csv, embeddings.jsonl,
    checkpoint.json. Returns the full evaluation time series.
    """
    root_rng = Rng(config.seed)
    if data_path is not None:
        dataset = synthetic.read_dataset(data_path)
        if dataset.inputs.shape[1] != config.synthetic.ambient_dim:
            raise ValidationError(
                f"loaded dataset dimension {dataset.inputs.shape[1]} does not match "
                f"config ambient_dim {config.synthetic.ambient_dim}"
            )
        train_set, test_set = synthetic.holdout_split(dataset)
    else:
        train_set = synthetic.generate(config.synthetic)
        test_set = synthetic.generate_eval_split(
            config.synthetic, train_set.class_centers, root_rng.substream("testdata")
        )

    params = enc.init_params(config.encoder, root_rng.substream("init"))
    state = enc.init_optimizer(
        params,
        lr=config.optimizer.lr,
        momentum=config.optimizer.momentum,
        weight_decay=config.optimizer.weight_decay,
    )

    reports: list[metrics_mod.MetricsReport] = []
    report, hist_initial, initial_batch = _eval_state(
        config, params, train_set, test_set, root_rng, epoch=0, with_histogram=True
    )
    reports.append(report)
    hist_final, final_batch = hist_initial, initial_batch  # stands when epochs == 0

    for epoch in range(config.epochs):
        rng_batches = root_rng.substream("batches", index=epoch)
        rng_augment = root_rng.substream("augment", index=epoch)
        for step, idx in enumerate(synthetic.make_batches(train_set, config.batch_size, rng_batches)):
            try:
                x = train_set.inputs[idx]
                v1, v2 = synthetic.augment_views(x, config.synthetic.augment_sigma, rng_augment)
                stacked = np.vstack([v1, v2])
                z, cache = enc.encode(params, stacked)
                batch = EmbeddingBatch(
                    view_a=z[: len(idx)],
                    view_b=z[len(idx) :],
                    sample_ids=[train_set.sample_ids[i] for i in idx],
                    labels=train_set.labels[idx],
                )
                bundle = loss_mod.grad_wrt_embeddings(batch, config.profile, config.loss_mode)
                if not np.isfinite(bundle.loss):
                    raise NumericError(f"loss became non-finite ({bundle.loss})")
                grads = enc.backward(params, cache, bundle.dL_dz)
                enc.sgd_step(params, grads, state)
            except NumericError as err:
                raise NumericError(f"epoch {epoch}, step {step}: {err}") from err
        completed = epoch + 1
        is_final = completed == config.epochs
        if completed % config.eval_every == 0 or is_final:
            report, hist, batch = _eval_state(
                config, params, train_set, test_set, root_rng, epoch=completed, with_histogram=is_final
            )
            reports.append(report)
            if is_final:
                hist_final, final_batch = hist, batch

    out_dir = config.out_dir
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(config.to_dict(), indent=2), encoding="utf-8"
        )
        metrics_mod.write_metrics_csv(out_dir / "metrics.csv", reports)
        metrics_mod.write_histogram_csv(out_dir / "histogram_epoch0.csv", hist_initial)
        metrics_mod.write_histogram_csv(out_dir / "histogram_final.csv", hist_final)
        write_embedding_dump(out_dir / "embeddings.jsonl", final_batch)
        enc.save_checkpoint(out_dir / "checkpoint.json", params)

    return RunResult(
        config=config,
        reports=reports,
        histogram_initial=hist_initial,
        histogram_final=hist_final,
        out_dir=out_dir,
    )


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    base: ExperimentConfig
    profiles: list[TemperatureProfile] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    seeds: list[int] = field(default_factory=list)
    max_configs: int = DEFAULT_SWEEP_CAP

    def expand(self, sweep_dir: Optional[Path]) -> list[ExperimentConfig]:
        """Cartesian product of the override axes over the base config."""
        profiles = self.profiles or [self.base.profile]
        lrs = self.lrs or [self.base.optimizer.lr]
        seeds = self.seeds or [self.base.seed]
        total = len(profiles) * len(lrs) * len(seeds)
        if total > self.max_configs:
            raise ValidationError(
                f"sweep expands to {total} configs, above the cap of {self.max_configs}"
            )
        configs = []
        index = 0
        for profile in profiles:
            for lr in lrs:
                for seed in seeds:
                    out = None if sweep_dir is None else Path(sweep_dir) / f"run_{index:03d}"
                    configs.append(
                        replace(
                            self.base,
                            profile=profile,
                            optimizer=replace(self.base.optimizer, lr=float(lr)),
                            synthetic=replace(self.base.synthetic, seed=int(seed)),
                            seed=int(seed),
                            out_dir=out,
                        )
                    )
                    index += 1
        return configs


def sweep_from_dict(raw: dict) -> SweepSpec:
    if not isinstance(raw, dict):
        raise ValidationError("sweep config must be a JSON object")
    _check_fields(raw, {"config_version", "base", "overrides", "max_configs"}, "sweep config")
    if raw.get("config_version") != CONFIG_VERSION:
        raise ValidationError(f"config_version must be {CONFIG_VERSION}")
    base = config_from_dict({**raw.get("base", {}), "config_version": CONFIG_VERSION})
    overrides = raw.get("overrides", {})
    _check_fields(overrides, {"profiles", "lrs", "seeds"}, "sweep overrides")
    profiles = [TemperatureProfile.from_dict(p) for p in overrides.get("profiles", [])]
    return SweepSpec(
        base=base,
        profiles=profiles,
        lrs=[float(x) for x in overrides.get("lrs", [])],
        seeds=[int(x) for x in overrides.get("seeds", [])],
        max_configs=int(raw.get("max_configs", DEFAULT_SWEEP_CAP)),
    )


def load_sweep(path: str | Path) -> SweepSpec:
    return sweep_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


SWEEP_CSV_HEADER = (
    "config_index,profile,lr,seed,status,"
    "epoch,loss,uniformity,alignment,tolerance,interclass_uniformity,knn_top1"
)


def _run_sweep_entry(args: tuple[int, ExperimentConfig]) -> tuple[int, str, list, float]:
    index, config = args
    start = time.monotonic()
    try:
        result = run_experiment(config)
        return index, "ok", result.reports, time.monotonic() - start
    except Exception as err:  # failures are data: recorded, sweep continues
        return index, f"error: {type(err).__name__}: {err}", [], time.monotonic() - start


def resolve_worker_count(explicit: Optional[int] = None) -> int:
    if explicit is not None:
        return max(1, explicit)
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError as err:
            raise ValidationError(f"{WORKERS_ENV_VAR} must be an integer, got {env!r}") from err
    return 1


def run_sweep(
    sweep: SweepSpec, sweep_dir: Optional[str | Path] = None, workers: Optional[int] = None
) -> Path | list[tuple[int, str, list]]:
    """Run every config; write one combined CSV ordered by (config, epoch).

    A failed run contributes a single row with its error in the status column
    and empty metric columns; remaining runs still execute.
    """
    sweep_dir = None if sweep_dir is None else Path(sweep_dir)
    configs = sweep.expand(sweep_dir)
    worker_count = resolve_worker_count(workers)
    entries = list(enumerate(configs))
    if worker_count > 1:
        with ProcessPoolExecutor(max_workers=worker_count) as pool:
            outcomes = list(pool.map(_run_sweep_entry, entries))
    else:
        outcomes = [_run_sweep_entry(e) for e in entries]
    outcomes.sort(key=lambda item: item[0])

    rows = []
    for index, status, reports, _elapsed in outcomes:
        config = configs[index]
        prefix = f"{index},{config.profile.spec_string()},{fmt(config.optimizer.lr)},{config.seed}"
        if status != "ok":
            rows.append(f'{prefix},"{status}",,,,,,,')
            continue
        for r in reports:
            rows.append(
                f"{prefix},ok,{r.epoch},{fmt(r.loss)},{fmt(r.uniformity)},{fmt(r.alignment)},"
                f"{fmt(r.tolerance)},{fmt(r.interclass_uniformity)},{fmt(r.knn_top1)}"
            )

    if sweep_dir is not None:
        sweep_dir.mkdir(parents=True, exist_ok=True)
        csv_path = sweep_dir / "sweep.csv"
        csv_path.write_text(SWEEP_CSV_HEADER + "\n" + "\n".join(rows) + "\n", encoding="utf-8")
        return csv_path
    return [(i, s, r) for i, s, r, _ in outcomes]


# ---------------------------------------------------------------------------
# Metric recomputation from an embedding dump
# ---------------------------------------------------------------------------


def metrics_from_dump(path: str | Path, k: int = metrics_mod.DEFAULT_KNN_K) -> dict[str, float]:
    """Recompute the metric set from an embeddings JSON-lines file.

    View-a points define uniformity/tolerance/interclass; the kNN probe uses
    view-a as the bank and view-b as queries. Label-dependent metrics are NaN
    when the dump carries no labels.
    """
    from .geometry import read_embedding_dump

    batch = read_embedding_dump(path)
    out = {
        "uniformity": metrics_mod.uniformity(batch.view_a),
        "alignment": metrics_mod.alignment(batch),
        "tolerance": float("nan"),
        "interclass_uniformity": float("nan"),
        "knn_top1": float("nan"),
    }
    if batch.labels is not None:
        out["tolerance"] = metrics_mod.tolerance(batch.view_a, batch.labels)
        out["interclass_uniformity"] = metrics_mod.interclass_uniformity(
            batch.view_a, batch.labels
        )
        out["knn_top1"] = metrics_mod.knn_probe(
            batch.view_a,
            batch.labels,
            batch.view_b,
            batch.labels,
            k=min(k, batch.n),
        )
    return out
