"""Experiment orchestration: configs, checkpoints, training loops, commands.

One structured config drives everything; every command writes its resolved
config, a step-by-step run manifest, and a checkpoint under the run's output
directory. All randomness flows from the config seeds through named child
seeds, so identical configs reproduce identical runs.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import torch
import yaml

from .data import (DataConfig, build_dataset_from_config, cache_split,
                   dataset_manifest, derived_seed, split_from_manifest,
                   write_manifest)
from .distill import (DistillationConfig, FreezePolicy, LossBreakdown,
                      apply_freeze_policy, batch_tensors, build_optimizer,
                      build_projection, distill_step, mse_loss,
                      trainable_parameters)
from .errors import CheckpointError, ConfigError, DivergenceError
from .gradcheck import (DEFAULT_EPS, DEFAULT_TOLERANCE, GradCheckReport,
                        check_gradients)
from .metrics import (ComparisonTable, CorrelationReport, comparison_table,
                      evaluate_model)
from .models import (CNN3D, VIT, ModelConfig, _Encoder, build_encoder,
                     expected_parameter_stats)

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1
OUTPUT_ROOT_ENV = "VQADISTILL_OUTPUT_ROOT"
MODES = ("homologous", "heterogeneous")
MODE_FAMILY = {"homologous": VIT, "heterogeneous": CNN3D}

GRAD_CHECK_PARAM_BUDGET = 50_000


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs: data, models, optimization, freezing."""

    data: DataConfig
    teacher: ModelConfig
    student: ModelConfig
    distill: DistillationConfig
    freeze: FreezePolicy
    eval_every: int = 0
    data_seed: int = 0
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.teacher.clip_shape != self.student.clip_shape:
            raise ConfigError(
                f"teacher and student must share one clip geometry: "
                f"{self.teacher.clip_shape} vs {self.student.clip_shape}")
        crop_shape = (self.data.crop_frames, 3, self.data.crop_height,
                      self.data.crop_width)
        if crop_shape != self.teacher.clip_shape:
            raise ConfigError(
                f"data crop {crop_shape} does not match model geometry "
                f"{self.teacher.clip_shape}")
        teacher_groups = set(expected_parameter_stats(self.teacher).by_group)
        unknown = set(self.freeze.trainable_groups) - teacher_groups
        if unknown:
            raise ConfigError(
                f"freeze policy names unknown teacher groups {sorted(unknown)}")
        if self.eval_every < 0:
            raise ConfigError("eval_every must be >= 0")

    @property
    def mode(self) -> str:
        return "homologous" if self.student.family == VIT else "heterogeneous"


def default_config(mode: str = "homologous") -> ExperimentConfig:
    """Desk-scale defaults: a 4x-wider ViT teacher over 8x32x32 clips."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    teacher = ModelConfig(family=VIT, embed_dim=128, depth=8, num_heads=8,
                          frames=8, height=32, width=32,
                          tubelet_t=1, tubelet_h=8, tubelet_w=8)
    if mode == "homologous":
        student = ModelConfig(family=VIT, embed_dim=32, depth=4, num_heads=4,
                              frames=8, height=32, width=32,
                              tubelet_t=1, tubelet_h=8, tubelet_w=8)
    else:
        student = ModelConfig(family=CNN3D, embed_dim=32, depth=4,
                              frames=8, height=32, width=32)
    return ExperimentConfig(
        data=DataConfig(),
        teacher=teacher,
        student=student,
        distill=DistillationConfig(),
        freeze=FreezePolicy.homologous_teacher(teacher.depth),
        eval_every=0,
        data_seed=0,
        output_dir="runs/default",
    )


def config_to_dict(config: ExperimentConfig) -> Dict:
    return {
        "data": dict(config.data.__dict__),
        "teacher": dict(config.teacher.__dict__),
        "student": dict(config.student.__dict__),
        "distill": {**config.distill.__dict__,
                    "loss_weights": list(config.distill.loss_weights)},
        "freeze": sorted(config.freeze.trainable_groups),
        "eval_every": config.eval_every,
        "data_seed": config.data_seed,
        "output_dir": str(config.output_dir),
    }


def config_from_dict(raw: Dict) -> ExperimentConfig:
    try:
        distill_raw = dict(raw["distill"])
        distill_raw["loss_weights"] = tuple(distill_raw["loss_weights"])
        return ExperimentConfig(
            data=DataConfig(**raw["data"]),
            teacher=ModelConfig(**raw["teacher"]),
            student=ModelConfig(**raw["student"]),
            distill=DistillationConfig(**distill_raw),
            freeze=FreezePolicy(frozenset(raw["freeze"])),
            eval_every=raw.get("eval_every", 0),
            data_seed=raw.get("data_seed", 0),
            output_dir=raw.get("output_dir", "runs/default"),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def _deep_update(base: Dict, overlay: Dict) -> Dict:
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], value)
        else:
            base[key] = value
    return base


def load_config(path: Optional[Path] = None, overrides: Optional[Dict] = None,
                mode: str = "homologous") -> ExperimentConfig:
    """Defaults, overlaid by the config file, overlaid by CLI overrides."""
    merged = config_to_dict(default_config(mode))
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        loaded = yaml.safe_load(p.read_text()) or {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file must hold a mapping: {p}")
        _deep_update(merged, loaded)
    if overrides:
        _deep_update(merged, copy.deepcopy(overrides))
    return config_from_dict(merged)


def config_hash(config: ExperimentConfig) -> str:
    """Run-identity hash; ignores output paths, eval cadence, and run length
    so an interrupted run can resume to a larger step count."""
    payload = config_to_dict(config)
    payload.pop("output_dir")
    payload.pop("eval_every")
    payload["distill"].pop("steps")
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()


def effective_output_dir(config: ExperimentConfig) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    out = Path(config.output_dir)
    if root:
        return Path(root) / (out if not out.is_absolute() else out.name)
    return out


def prepare_run_dir(config: ExperimentConfig, subdir: str) -> Path:
    run_dir = effective_output_dir(config) / subdir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "resolved_config.yaml").write_text(
        yaml.safe_dump(config_to_dict(config), sort_keys=True))
    return run_dir


# ---------------------------------------------------------------------------
# Run manifest


@dataclass
class RunManifest:
    """Per-step loss log plus periodic evaluations; steps must be gap-free."""

    steps: List[Dict] = field(default_factory=list)
    evals: List[Dict] = field(default_factory=list)
    meta: Dict = field(default_factory=dict)

    def log_step(self, step: int, breakdown: LossBreakdown) -> None:
        if self.steps and step != self.steps[-1]["step"] + 1:
            raise ValueError(
                f"non-contiguous step {step} after {self.steps[-1]['step']}")
        self.steps.append({"step": step, **breakdown.as_dict()})

    def log_eval(self, step: int, report: CorrelationReport) -> None:
        self.evals.append({"step": step, **report.to_record()})

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(
            {"steps": self.steps, "evals": self.evals, "meta": self.meta},
            sort_keys=True, indent=2) + "\n")

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        raw = json.loads(Path(path).read_text())
        return cls(steps=raw["steps"], evals=raw["evals"], meta=raw["meta"])


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class Checkpoint:
    manifest: Dict
    config: ExperimentConfig
    models: Dict[str, Dict]
    names: Dict[str, str]
    optimizer: Optional[Dict]


def save_checkpoint(path: Path, config: ExperimentConfig, step: int,
                    models: Dict[str, _Encoder],
                    names: Optional[Dict[str, str]] = None,
                    optimizer=None) -> Path:
    payload = {
        "manifest": {"config_hash": config_hash(config), "step": step,
                     "seed": config.distill.seed,
                     "artifact_version": ARTIFACT_VERSION},
        "config": config_to_dict(config),
        "models": {key: model.state_dict() for key, model in models.items()},
        "names": dict(names or {}),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)
    return path


def load_checkpoint(path: Path,
                    expected_config: Optional[ExperimentConfig] = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    manifest = payload.get("manifest", {})
    if manifest.get("artifact_version") != ARTIFACT_VERSION:
        raise CheckpointError(
            f"checkpoint version {manifest.get('artifact_version')} != "
            f"{ARTIFACT_VERSION}")
    config = config_from_dict(payload["config"])
    if expected_config is not None:
        expected = config_hash(expected_config)
        if manifest["config_hash"] != expected:
            raise CheckpointError(
                "refusing to resume: checkpoint config hash "
                f"{manifest['config_hash'][:12]} != expected {expected[:12]}")
    return Checkpoint(manifest=manifest, config=config,
                      models=payload["models"], names=payload.get("names", {}),
                      optimizer=payload.get("optimizer"))


# ---------------------------------------------------------------------------
# Training loops


def batch_stream(num_items: int, batch_size: int, seed: int, start_step: int = 0):
    """Deterministic shuffled batches, resumable by fast-forwarding."""
    generator = torch.Generator().manual_seed(seed)
    step = 0
    while True:
        perm = torch.randperm(num_items, generator=generator).tolist()
        for i in range(0, num_items, batch_size):
            if step >= start_step:
                yield step, perm[i:i + batch_size]
            step += 1


def supervised_step(model: _Encoder, batch, optimizer,
                    step_index: int) -> LossBreakdown:
    """Plain MSE training step; the student_l2-only degenerate objective."""
    dtype = next(model.parameters()).dtype
    clips, targets = batch_tensors(batch, dtype)
    _, pred = model(clips)
    loss = mse_loss(pred, targets)
    value = loss.item()
    breakdown = LossBreakdown(teacher_l2=0.0, student_l2=value,
                              feature_smooth_l1=0.0, total=value)
    if not math.isfinite(value):
        raise DivergenceError(step_index, breakdown)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return breakdown


def run_supervised(model: _Encoder, train, dc: DistillationConfig, *,
                   eval_split=None, eval_every: int = 0,
                   model_name: str = "model", start_step: int = 0,
                   optimizer=None, manifest: Optional[RunManifest] = None):
    manifest = manifest if manifest is not None else RunManifest()
    if optimizer is None:
        optimizer = build_optimizer(trainable_parameters(model),
                                    dc.learning_rate)
    for step, idx in batch_stream(len(train), dc.batch_size,
                                  derived_seed(dc.seed, "batches"), start_step):
        if step >= dc.steps:
            break
        breakdown = supervised_step(model, [train[i] for i in idx],
                                    optimizer, step)
        manifest.log_step(step, breakdown)
        if eval_every and eval_split and (step + 1) % eval_every == 0:
            report = evaluate_model(model, eval_split, model_name,
                                    seed=dc.seed)
            manifest.log_eval(step, report)
            logger.info("step %d: %s srcc=%s", step, model_name, report.srcc)
    return manifest, optimizer


def run_distillation(teacher: _Encoder, student: _Encoder, proj, train,
                     dc: DistillationConfig, *, freeze_policy: FreezePolicy,
                     eval_split=None, eval_every: int = 0,
                     model_name: str = "student", start_step: int = 0,
                     optimizer=None, manifest: Optional[RunManifest] = None):
    manifest = manifest if manifest is not None else RunManifest()
    apply_freeze_policy(teacher, freeze_policy)
    if optimizer is None:
        optimizer = build_optimizer(
            trainable_parameters(teacher, student, proj), dc.learning_rate)
    for step, idx in batch_stream(len(train), dc.batch_size,
                                  derived_seed(dc.seed, "batches"), start_step):
        if step >= dc.steps:
            break
        breakdown = distill_step([train[i] for i in idx], teacher, student,
                                 proj, optimizer, dc, step)
        manifest.log_step(step, breakdown)
        if eval_every and eval_split and (step + 1) % eval_every == 0:
            report = evaluate_model(student, eval_split, model_name,
                                    seed=dc.seed)
            manifest.log_eval(step, report)
            logger.info("step %d: %s srcc=%s", step, model_name, report.srcc)
    return manifest, optimizer


# ---------------------------------------------------------------------------
# Commands (the CLI wraps these)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_report(report: CorrelationReport, path: Path) -> None:
    Path(path).write_text(json.dumps(asdict(report), sort_keys=True,
                                     indent=2) + "\n")


def load_report(path: Path) -> CorrelationReport:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"report not found: {p}")
    raw = json.loads(p.read_text())
    if "model_name" in raw:
        return CorrelationReport(**raw)
    return CorrelationReport.from_record(raw)


def cmd_generate_data(config: ExperimentConfig, seed: Optional[int] = None,
                      cache: bool = False) -> Path:
    """Write the dataset manifest (and optional clip cache) to disk."""
    seed = config.data_seed if seed is None else seed
    out = effective_output_dir(config) / "data"
    out.mkdir(parents=True, exist_ok=True)
    manifest = dataset_manifest(config.data, seed)
    path = out / "manifest.json"
    write_manifest(manifest, path)
    if cache:
        cache_split(split_from_manifest(manifest), out / "cache")
    logger.info("wrote %d records to %s", len(manifest["records"]), path)
    return path


def _resume_state(resume: Optional[Path], config: ExperimentConfig,
                  run_dir: Path, model_key: str):
    """Load (state_dicts, optimizer_state, start_step, manifest) for resume."""
    if resume is None:
        return None, None, 0, RunManifest()
    ckpt = load_checkpoint(resume, expected_config=config)
    if model_key not in ckpt.models:
        raise CheckpointError(
            f"checkpoint has no {model_key!r} model; found {sorted(ckpt.models)}")
    prior = run_dir / "run_manifest.json"
    manifest = RunManifest.load(prior) if prior.exists() else RunManifest()
    return ckpt, ckpt.optimizer, ckpt.manifest["step"], manifest


def cmd_train_teacher(config: ExperimentConfig,
                      resume: Optional[Path] = None) -> Path:
    """Supervised teacher training on the synthetic task."""
    run_dir = prepare_run_dir(config, "teacher")
    started = _now()
    t0 = time.perf_counter()
    data = build_dataset_from_config(config.data, config.data_seed)
    teacher = build_encoder(config.teacher,
                            derived_seed(config.distill.seed, "teacher"))
    ckpt, opt_state, start_step, manifest = _resume_state(
        resume, config, run_dir, "teacher")
    optimizer = build_optimizer(trainable_parameters(teacher),
                                config.distill.learning_rate)
    if ckpt is not None:
        teacher.load_state_dict(ckpt.models["teacher"])
        optimizer.load_state_dict(opt_state)
    manifest, optimizer = run_supervised(
        teacher, data.train, config.distill, eval_split=data.test,
        eval_every=config.eval_every, model_name="teacher",
        start_step=start_step, optimizer=optimizer, manifest=manifest)
    report = evaluate_model(teacher, data.test, "teacher",
                            seed=config.distill.seed)
    manifest.meta = {"started_at": started, "finished_at": _now(),
                     "duration_sec": time.perf_counter() - t0,
                     "command": "train-teacher"}
    manifest.save(run_dir / "run_manifest.json")
    write_report(report, run_dir / "report.json")
    path = save_checkpoint(run_dir / "checkpoint.pt", config,
                           step=config.distill.steps,
                           models={"teacher": teacher},
                           names={"teacher": "teacher"}, optimizer=optimizer)
    logger.info("teacher: plcc=%s srcc=%s -> %s", report.plcc, report.srcc, path)
    return path


def cmd_train_baseline(config: ExperimentConfig,
                       resume: Optional[Path] = None) -> Path:
    """Supervised student training without a teacher (the no-distillation arm)."""
    run_dir = prepare_run_dir(config, f"baseline_{config.student.family}")
    started = _now()
    t0 = time.perf_counter()
    data = build_dataset_from_config(config.data, config.data_seed)
    student = build_encoder(config.student,
                            derived_seed(config.distill.seed, "student"))
    name = f"baseline-{config.student.family}"
    ckpt, opt_state, start_step, manifest = _resume_state(
        resume, config, run_dir, "student")
    optimizer = build_optimizer(trainable_parameters(student),
                                config.distill.learning_rate)
    if ckpt is not None:
        student.load_state_dict(ckpt.models["student"])
        optimizer.load_state_dict(opt_state)
    manifest, optimizer = run_supervised(
        student, data.train, config.distill, eval_split=data.test,
        eval_every=config.eval_every, model_name=name,
        start_step=start_step, optimizer=optimizer, manifest=manifest)
    report = evaluate_model(student, data.test, name, seed=config.distill.seed)
    manifest.meta = {"started_at": started, "finished_at": _now(),
                     "duration_sec": time.perf_counter() - t0,
                     "command": "train-baseline"}
    manifest.save(run_dir / "run_manifest.json")
    write_report(report, run_dir / "report.json")
    path = save_checkpoint(run_dir / "checkpoint.pt", config,
                           step=config.distill.steps,
                           models={"student": student},
                           names={"student": name}, optimizer=optimizer)
    logger.info("%s: plcc=%s srcc=%s -> %s", name, report.plcc, report.srcc, path)
    return path


def _check_teacher_compatible(ckpt: Checkpoint, config: ExperimentConfig) -> None:
    if ckpt.config.teacher != config.teacher:
        raise ConfigError(
            "teacher checkpoint architecture does not match config: "
            f"{ckpt.config.teacher} vs {config.teacher}")
    if (ckpt.config.data != config.data
            or ckpt.config.data_seed != config.data_seed):
        raise ConfigError(
            "teacher checkpoint was trained on a different dataset config")


def cmd_distill(config: ExperimentConfig, teacher_checkpoint: Path,
                mode: str, baseline_report: Optional[Path] = None) -> Path:
    """Joint teacher/student distillation with the teacher freeze policy."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if config.student.family != MODE_FAMILY[mode]:
        raise ConfigError(
            f"{mode} distillation requires a {MODE_FAMILY[mode]} student, "
            f"got {config.student.family}")
    run_dir = prepare_run_dir(config, f"distill_{mode}")
    started = _now()
    t0 = time.perf_counter()
    data = build_dataset_from_config(config.data, config.data_seed)
    ckpt = load_checkpoint(teacher_checkpoint)
    _check_teacher_compatible(ckpt, config)
    if "teacher" not in ckpt.models:
        raise CheckpointError("checkpoint has no 'teacher' model")
    teacher = build_encoder(config.teacher,
                            derived_seed(config.distill.seed, "teacher"))
    teacher.load_state_dict(ckpt.models["teacher"])
    student = build_encoder(config.student,
                            derived_seed(config.distill.seed, "student"))
    proj = build_projection(config.student.embed_dim, config.teacher.embed_dim,
                            derived_seed(config.distill.seed, "projection"))
    name = f"distilled-{mode}"
    manifest, optimizer = run_distillation(
        teacher, student, proj, data.train, config.distill,
        freeze_policy=config.freeze, eval_split=data.test,
        eval_every=config.eval_every, model_name=name)
    report = evaluate_model(student, data.test, name, seed=config.distill.seed)
    if baseline_report is not None:
        report = report.with_baseline(load_report(baseline_report))
    manifest.meta = {"started_at": started, "finished_at": _now(),
                     "duration_sec": time.perf_counter() - t0,
                     "command": "distill", "mode": mode}
    manifest.save(run_dir / "run_manifest.json")
    write_report(report, run_dir / "report.json")
    path = save_checkpoint(run_dir / "checkpoint.pt", config,
                           step=config.distill.steps,
                           models={"teacher": teacher, "student": student,
                                   "projection": proj},
                           names={"student": name, "teacher": "teacher"},
                           optimizer=optimizer)
    logger.info("%s: plcc=%s srcc=%s -> %s", name, report.plcc, report.srcc, path)
    return path


def cmd_eval(checkpoint: Path, which: Optional[str] = None,
             split: str = "test") -> CorrelationReport:
    """Evaluate a checkpointed model on a dataset split."""
    ckpt = load_checkpoint(checkpoint)
    key = which or ("student" if "student" in ckpt.models else "teacher")
    if key not in ckpt.models:
        raise CheckpointError(
            f"checkpoint has no {key!r} model; found {sorted(ckpt.models)}")
    if key == "projection":
        raise ConfigError("the projection is not an evaluable model")
    config = ckpt.config
    model_config = config.teacher if key == "teacher" else config.student
    model = build_encoder(model_config, 0)
    model.load_state_dict(ckpt.models[key])
    data = build_dataset_from_config(config.data, config.data_seed)
    if split not in ("train", "test"):
        raise ConfigError(f"split must be 'train' or 'test', got {split!r}")
    clips = getattr(data, split)
    name = ckpt.names.get(key, key)
    return evaluate_model(model, clips, name, seed=config.distill.seed)


# ---------------------------------------------------------------------------
# Gradient check command


def tiny_grad_check_configs() -> tuple[ModelConfig, ModelConfig]:
    teacher = ModelConfig(family=VIT, embed_dim=8, depth=2, num_heads=2,
                          frames=2, height=8, width=8,
                          tubelet_t=1, tubelet_h=4, tubelet_w=4)
    student = ModelConfig(family=VIT, embed_dim=4, depth=2, num_heads=2,
                          frames=2, height=8, width=8,
                          tubelet_t=1, tubelet_h=4, tubelet_w=4)
    return teacher, student


@dataclass
class GradCheckSummary:
    passed: bool
    tolerance: float
    max_rel_error: float
    runs: List[Dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def cmd_grad_check(teacher_config: Optional[ModelConfig] = None,
                   student_config: Optional[ModelConfig] = None,
                   seeds: Sequence[int] = (0, 1, 2),
                   eps: float = DEFAULT_EPS,
                   tolerance: float = DEFAULT_TOLERANCE,
                   batch_size: int = 2,
                   corrupt_group: Optional[str] = None) -> GradCheckSummary:
    """Finite-difference check of the full loss on a tiny config, several seeds."""
    default_teacher, default_student = tiny_grad_check_configs()
    teacher_config = teacher_config or default_teacher
    student_config = student_config or default_student
    if teacher_config.clip_shape != student_config.clip_shape:
        raise ConfigError("grad check models must share one clip geometry")
    budget = (expected_parameter_stats(teacher_config).total
              + expected_parameter_stats(student_config).total
              + student_config.embed_dim * teacher_config.embed_dim
              + teacher_config.embed_dim)
    if budget > GRAD_CHECK_PARAM_BUDGET:
        raise ConfigError(
            f"grad check config too large: {budget} params "
            f"(limit {GRAD_CHECK_PARAM_BUDGET})")
    runs: List[Dict] = []
    worst = 0.0
    all_passed = True
    for seed in seeds:
        teacher = build_encoder(teacher_config, derived_seed(seed, "teacher"),
                                dtype=torch.float64)
        student = build_encoder(student_config, derived_seed(seed, "student"),
                                dtype=torch.float64)
        proj = build_projection(student_config.embed_dim,
                                teacher_config.embed_dim,
                                derived_seed(seed, "projection"),
                                dtype=torch.float64)
        apply_freeze_policy(
            teacher, FreezePolicy.homologous_teacher(teacher_config.depth))
        batch = synthetic_grad_check_batch(teacher_config, batch_size, seed)
        report = check_gradients(teacher, student, proj, batch,
                                 eps=eps, tolerance=tolerance,
                                 corrupt_group=corrupt_group)
        runs.append({"seed": seed, **report.as_dict()})
        worst = max(worst, report.max_rel_error)
        all_passed = all_passed and report.passed
    return GradCheckSummary(passed=all_passed, tolerance=tolerance,
                            max_rel_error=worst, runs=runs)


def synthetic_grad_check_batch(config: ModelConfig, batch_size: int, seed: int):
    """Random clips and labels just for gradient checking."""
    from .data import LabeledClip, DistortionRecipe

    generator = torch.Generator().manual_seed(derived_seed(seed, "gradcheck"))
    batch = []
    for i in range(batch_size):
        clip = torch.rand(config.clip_shape, generator=generator)
        mos = float(torch.rand((), generator=generator))
        batch.append(LabeledClip(
            clip=clip, mos=mos, content_id=i,
            recipe=DistortionRecipe("gaussian_blur", 0.5)))
    return batch


def cmd_compare(report_paths: Sequence[Path],
                baselines: Optional[Dict[str, str]] = None) -> ComparisonTable:
    """Render a side-by-side table from saved report files."""
    if not report_paths:
        raise ValueError("compare needs at least one report file")
    reports = [load_report(p) for p in report_paths]
    return comparison_table(reports, baselines)
