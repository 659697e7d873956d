"""Config-driven orchestration: ingest, cohort, preprocess, train, evaluate
under patient-level k-fold cross-validation, then emit reports.

Leak rules enforced at runtime on every run: folds partition patients (all
stays of a patient share a fold), vocabularies and oversampling see
training folds only, and optional normalization statistics come from the
training side.  Reports are deterministic: report.json carries no timing,
so identical seeds reproduce it byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import cohort as cohort_mod
from . import evaluation
from .errors import ConfigError, DataError, IcubenchError
from .gridcache import GridCache, content_key
from .ingestion import TABLE_FILES, load_dataset
from .neural import build_model, predict_scores, train_model
from .neural.checkpoint import save_checkpoint, schema_hash
from .neural.training import InstanceGroup
from .phenotypes import PhenotypeCatalog
from .preprocessing import BinPolicy, build_stay_grid, build_vocabs, encode_categoricals, oversample
from .schema import (
    CATEGORICAL_VARIABLES,
    DischargeStatus,
    Task,
    TaskInstance,
    apply_vocabs,
    canonical_schema,
    read_normal_values,
)

TASK_CHOICES = ("mortality24", "mortality48", "los", "phenotyping", "decompensation")
MODEL_CHOICES = ("lr", "ann", "bilstm")
ENCODING_CHOICES = ("ohe", "embedding")
VARIABLE_CHOICES = ("all", "numerical_only", "categorical_only")

_TASK_OF = {
    "mortality24": Task.MORTALITY,
    "mortality48": Task.MORTALITY,
    "los": Task.LOS,
    "phenotyping": Task.PHENOTYPING,
    "decompensation": Task.DECOMPENSATION,
}
_BINARY_TASKS = (Task.MORTALITY, Task.DECOMPENSATION)

CLASSIFICATION_KEYS = ("auroc", "auprc", "specificity_at_sens90", "sensitivity", "ppv", "npv")
REGRESSION_KEYS = ("r2", "mae")


@dataclass
class ExperimentConfig:
    """Everything one experiment run needs; every field is addressable from
    the flat key=value config file and overridable on the command line."""

    task: str
    data_dir: str = "."
    out_dir: str = "run"
    model: str = "bilstm"
    encoding: str = "embedding"
    variables: str = "all"
    folds: int = 5
    seed: int = 0
    hidden: int = 64
    ann_hidden: int = 64
    epochs: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    dropout: float = 0.0
    embed_init: str = "random"
    embed_frozen: bool = False
    embed_dim_cap: int = 50
    max_hours: int = 500
    zscore: bool = False
    oversample_train: bool = True
    normal_values_file: str = ""
    phenotype_map: str = ""
    cache_dir: str = ""
    save_models: bool = False

    def __post_init__(self):
        if self.task not in TASK_CHOICES:
            raise ConfigError(f"task must be one of {TASK_CHOICES}, got {self.task!r}")
        if self.model not in MODEL_CHOICES:
            raise ConfigError(f"model must be one of {MODEL_CHOICES}, got {self.model!r}")
        if self.encoding not in ENCODING_CHOICES:
            raise ConfigError(f"encoding must be one of {ENCODING_CHOICES}, got {self.encoding!r}")
        if self.variables not in VARIABLE_CHOICES:
            raise ConfigError(f"variables must be one of {VARIABLE_CHOICES}, got {self.variables!r}")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.embed_init not in ("random", "identity"):
            raise ConfigError(f"embed_init must be 'random' or 'identity', got {self.embed_init!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        for name in ("hidden", "ann_hidden", "epochs", "batch_size", "max_hours"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        horizon = self.mortality_horizon
        if horizon and self.max_hours < horizon:
            raise ConfigError(f"max_hours {self.max_hours} is below the mortality horizon {horizon}")

    @property
    def task_kind(self) -> Task:
        return _TASK_OF[self.task]

    @property
    def mortality_horizon(self) -> int | None:
        return {"mortality24": 24, "mortality48": 48}.get(self.task)

    @property
    def use_numeric(self) -> bool:
        return self.variables != "categorical_only"

    @property
    def use_categorical(self) -> bool:
        return self.variables != "numerical_only"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config_file(path) -> dict[str, str]:
    """Flat key=value lines; blank lines and # comments are skipped."""
    values: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def config_from_sources(file_values: Mapping[str, str] | None = None, **overrides) -> ExperimentConfig:
    """Build a config from file values plus CLI overrides (overrides win)."""
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    merged: dict = {}
    for source in (file_values or {},):
        for key, raw in source.items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            merged[key] = _coerce(fields[key].type, key, raw)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    if "task" not in merged:
        raise ConfigError("config is missing required key 'task'")
    return ExperimentConfig(**merged)


def _coerce(annotation: str, key: str, raw: str):
    annotation = str(annotation)
    try:
        if annotation == "int":
            return int(raw)
        if annotation == "float":
            return float(raw)
        if annotation == "bool":
            lowered = raw.lower()
            if lowered not in _BOOL_STRINGS:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_STRINGS[lowered]
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {exc}") from exc


def make_folds(patient_ids: Sequence[int], k: int, seed: int) -> dict[int, int]:
    """Deterministic partition of patients into k folds of near-equal size."""
    unique = sorted(set(patient_ids))
    if k < 2:
        raise ConfigError("folds must be >= 2")
    if len(unique) < k:
        raise ConfigError(f"cannot split {len(unique)} patients into {k} folds")
    rng = np.random.default_rng((seed, 0xF01D))
    order = rng.permutation(len(unique))
    return {unique[idx]: pos % k for pos, idx in enumerate(order)}


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise IcubenchError(f"runtime invariant violated: {message}")


@dataclass
class EvalReport:
    """Per-fold metrics, aggregate, and the audit text that came out of the run."""

    task: str
    config: dict
    fold_results: list[dict]
    aggregate_mean: dict
    aggregate_ci95: dict
    warnings: list[str]
    seed: int
    fold_scores: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list, repr=False)
    ingest_text: str = ""
    cohort_text: str = ""
    demographics_text: str = ""
    wall_clock_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "config": self.config,
            "folds": self.fold_results,
            "aggregate": {
                key: {"mean": self.aggregate_mean.get(key), "ci95": self.aggregate_ci95.get(key)}
                for key in self.aggregate_mean
            },
            "warnings": self.warnings,
        }


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def report_json(report: EvalReport) -> str:
    return json.dumps(_sanitize(report.to_dict()), sort_keys=True, indent=2) + "\n"


def report_text(report: EvalReport) -> str:
    lines = [f"task: {report.task}    model: {report.config['model']}    "
             f"encoding: {report.config['encoding']}    variables: {report.config['variables']}"]
    lines.append(f"seed: {report.seed}    folds: {len(report.fold_results)}    "
                 f"wall clock: {report.wall_clock_seconds:.1f} s")
    lines.append("")
    keys = list(report.aggregate_mean)
    header = f"{'metric':<24}" + "".join(f"fold{i:<8}" for i in range(len(report.fold_results)))
    lines.append(header + f"{'mean':<12}{'ci95':<12}")
    for key in keys:
        row = f"{key:<24}"
        for fold in report.fold_results:
            value = fold["metrics"].get(key)
            row += f"{_fmt_cell(value):<12}"
        row += f"{_fmt_cell(report.aggregate_mean.get(key)):<12}{_fmt_cell(report.aggregate_ci95.get(key)):<12}"
        lines.append(row)
    if report.warnings:
        lines.append("")
        lines.extend(f"warning: {w}" for w in report.warnings)
    return "\n".join(lines) + "\n"


def _fmt_cell(value) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return "—"
    return f"{value:.4f}"


def summarize_cohort(metas: Mapping[int, object], grids=None) -> str:
    """Demographics table split by hospital outcome (counts, medians, IQRs)."""
    rows = list(metas.values())
    strata = {
        "Overall": rows,
        "Dead at hospital": [m for m in rows if m.hospital_discharge_status == DischargeStatus.EXPIRED],
        "Alive at hospital": [m for m in rows if m.hospital_discharge_status == DischargeStatus.ALIVE],
    }
    lines = ["cohort demographics", "==================="]
    header = f"{'':<28}" + "".join(f"{name:<22}" for name in strata)
    lines.append(header)

    def render(label, fn):
        row = f"{label:<28}"
        for group in strata.values():
            row += f"{fn(group) if group else '—':<22}"
        lines.append(row)

    def med_iqr(values):
        if not values:
            return "—"
        q1, q2, q3 = np.percentile(values, (25, 50, 75))
        return f"{q2:.2f} [{q1:.2f}-{q3:.2f}]"

    render("ICU stays", lambda g: str(len(g)))
    render("Age, median [IQR]", lambda g: med_iqr([m.age for m in g if not math.isnan(m.age)]))
    render("Gender (F), n (%)", lambda g: _count_pct(g, lambda m: m.gender == "Female"))
    for ethnicity in sorted({m.ethnicity for m in rows}):
        render(f"Ethnicity: {ethnicity}", lambda g, e=ethnicity: _count_pct(g, lambda m: m.ethnicity == e))
    render("ICU LoS days, median [IQR]", lambda g: med_iqr([m.unit_los_days for m in g]))
    render("Hospital death, n (%)",
           lambda g: _count_pct(g, lambda m: m.hospital_discharge_status == DischargeStatus.EXPIRED))
    return "\n".join(lines) + "\n"


def _count_pct(group, predicate) -> str:
    n = sum(1 for m in group if predicate(m))
    return f"{n} ({100.0 * n / len(group):.1f})"


def _build_instances(cfg: ExperimentConfig, grids, metas, diagnoses, catalog) -> list[TaskInstance]:
    if cfg.task_kind == Task.MORTALITY:
        return cohort_mod.build_mortality_instances(grids, metas, cfg.mortality_horizon)
    if cfg.task_kind == Task.LOS:
        return cohort_mod.build_los_instances(grids, metas)
    if cfg.task_kind == Task.DECOMPENSATION:
        return cohort_mod.build_decomp_instances(grids, metas)
    if catalog is None:
        raise DataError("phenotyping needs a phenotype code map (phenotype_map.csv)")
    return cohort_mod.build_phenotype_instances(grids, diagnoses, catalog)


def _fold_metrics(cfg: ExperimentConfig, scores: np.ndarray, labels: np.ndarray) -> tuple[dict, list[str]]:
    warnings: list[str] = []
    if cfg.task_kind == Task.LOS:
        metrics = dict.fromkeys(REGRESSION_KEYS)
        reg = evaluation.regression_metrics(scores, labels)
        metrics.update(reg.to_dict())
        if reg.r2 is None:
            warnings.append("r2 undefined (zero target variance)")
        return metrics, warnings
    if cfg.task_kind == Task.PHENOTYPING:
        per_key = {key: [] for key in CLASSIFICATION_KEYS}
        skipped = 0
        for n in range(scores.shape[1]):
            try:
                m = evaluation.classification_metrics(scores[:, n], labels[:, n])
            except evaluation.UndefinedMetricError:
                skipped += 1
                continue
            for key, value in m.to_dict().items():
                if isinstance(value, float) and math.isnan(value):
                    continue
                per_key[key].append(value)
        if skipped:
            warnings.append(f"{skipped} phenotype categories single-class in this fold; macro average skips them")
        metrics = {key: (float(np.mean(vals)) if vals else None) for key, vals in per_key.items()}
        return metrics, warnings
    metrics = dict.fromkeys(CLASSIFICATION_KEYS)
    try:
        metrics.update(evaluation.classification_metrics(scores, labels).to_dict())
    except evaluation.UndefinedMetricError as exc:
        warnings.append(f"classification metrics undefined: {exc}")
    return metrics, warnings


def run_experiment(cfg: ExperimentConfig) -> EvalReport:
    """Execute one (task, model, encoding, variables) experiment end to end."""
    started = time.perf_counter()
    normals = read_normal_values(cfg.normal_values_file) if cfg.normal_values_file else None
    schema = canonical_schema(normals)
    data_dir = Path(cfg.data_dir)
    for table, filename in TABLE_FILES.items():
        if table != "diagnosis" and not (data_dir / filename).exists():
            raise DataError(f"missing input table {data_dir / filename}")
    dataset = load_dataset(data_dir, schema)

    base = cohort_mod.select_base_cohort(list(dataset.metas.values()), dataset.record_counts)
    policy = BinPolicy(max_hours=cfg.max_hours)

    cache = None
    if cfg.cache_dir:
        key = content_key([data_dir / f for f in TABLE_FILES.values() if (data_dir / f).exists()], policy)
        cache = GridCache(cfg.cache_dir, key)
    grids = {}
    for stay_id in base.included:
        grid = cache.get(stay_id) if cache else None
        if grid is None:
            grid = build_stay_grid(dataset.metas[stay_id], dataset.records_by_stay.get(stay_id, []), schema, policy)
            if cache:
                cache.put(grid)
        grids[stay_id] = grid

    catalog = None
    map_path = Path(cfg.phenotype_map) if cfg.phenotype_map else data_dir / "phenotype_map.csv"
    if map_path.exists():
        catalog = PhenotypeCatalog.from_file(map_path)

    instances = _build_instances(cfg, grids, dataset.metas, dataset.diagnoses, catalog)
    if not instances:
        raise DataError(f"task {cfg.task!r} produced no instances on this data")

    instance_stays = sorted({inst.stay_id for inst in instances})
    patients = sorted({dataset.metas[sid].patient_id for sid in instance_stays})
    fold_of = make_folds(patients, cfg.folds, cfg.seed)

    fold_results: list[dict] = []
    fold_scores: list[tuple[np.ndarray, np.ndarray]] = []
    run_warnings: list[str] = []
    out_dir = Path(cfg.out_dir)

    for fold in range(cfg.folds):
        test_stays = {sid for sid in instance_stays if fold_of[dataset.metas[sid].patient_id] == fold}
        train_stays = {sid for sid in instance_stays if sid not in test_stays}
        train_patients = {dataset.metas[sid].patient_id for sid in train_stays}
        test_patients = {dataset.metas[sid].patient_id for sid in test_stays}
        _check(not (train_patients & test_patients), f"fold {fold}: train and test share patients")

        vocabs = build_vocabs(
            (dataset.metas[sid] for sid in sorted(train_stays)),
            (rec for sid in sorted(train_stays) for rec in dataset.records_by_stay.get(sid, [])),
            tag=f"fold{fold}/train",
        )
        _check(vocabs.source_stays <= train_stays, f"fold {fold}: vocabulary built from non-train stays")
        fold_schema = apply_vocabs(schema, vocabs.values)
        encoded = {sid: encode_categoricals(grids[sid], fold_schema) for sid in instance_stays}

        train_pos = [i for i, inst in enumerate(instances) if inst.stay_id in train_stays]
        test_pos = [i for i, inst in enumerate(instances) if inst.stay_id in test_stays]
        if not train_pos or not test_pos:
            run_warnings.append(f"fold {fold}: empty train or test side; fold skipped")
            fold_results.append({"fold": fold, "n_train": len(train_pos), "n_test": len(test_pos),
                                 "metrics": {}, "warnings": ["fold skipped"]})
            fold_scores.append((np.array([]), np.array([])))
            continue

        sample_rng = np.random.default_rng((cfg.seed, fold, 0x05))
        oversampled = False
        if cfg.oversample_train and cfg.task_kind in _BINARY_TASKS:
            train_instances = [instances[p] for p in train_pos]
            balanced, warn = oversample(train_instances, sample_rng)
            if warn:
                run_warnings.append(f"fold {fold}: {warn}")
            train_list = balanced
            oversampled = True
        else:
            train_list = [instances[p] for p in train_pos]

        zstats = None
        if cfg.zscore and cfg.use_numeric:
            zstats = _zscore_stats(train_list, grids)

        train_groups = _group_instances_direct(train_list, encoded, cfg, zstats)
        test_list = [instances[p] for p in test_pos]
        test_groups = _group_instances_direct(test_list, encoded, cfg, zstats)

        vocab_sizes = {name: len(vocabs.values[name]) for name in CATEGORICAL_VARIABLES} if cfg.use_categorical else None
        model = build_model(
            cfg.model,
            cfg.task_kind,
            np.random.default_rng((cfg.seed, fold, 0x01)),
            use_numeric=cfg.use_numeric,
            vocab_sizes=vocab_sizes,
            encoding=cfg.encoding,
            hidden=cfg.hidden,
            ann_hidden=cfg.ann_hidden,
            embed_init=cfg.embed_init,
            embed_frozen=cfg.embed_frozen,
            embed_dim_cap=cfg.embed_dim_cap,
        )
        train_model(
            model,
            train_groups,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            rng=np.random.default_rng((cfg.seed, fold, 0x02)),
            step_size=cfg.learning_rate,
            dropout=cfg.dropout,
        )
        scores = predict_scores(model, test_groups, len(test_list))
        labels = np.stack([np.asarray(inst.label, dtype=np.float64) for inst in test_list])
        metrics, fold_warnings = _fold_metrics(cfg, scores, labels)
        fold_results.append({
            "fold": fold,
            "n_train": len(train_list),
            "n_train_before_oversample": len(train_pos) if oversampled else len(train_list),
            "n_test": len(test_list),
            "metrics": metrics,
            "warnings": fold_warnings,
        })
        fold_scores.append((scores, labels))
        if cfg.save_models:
            out_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(
                out_dir / f"model_fold{fold}.ckpt",
                model.params,
                schema_hash(fold_schema),
                {"kind": model.kind, "task": cfg.task, "fold": fold},
            )

    folded = evaluation.aggregate_metric_dicts([f["metrics"] for f in fold_results if f["metrics"]])
    run_warnings.extend(folded.warnings)

    report = EvalReport(
        task=cfg.task,
        config=cfg.to_dict(),
        fold_results=fold_results,
        aggregate_mean=folded.mean,
        aggregate_ci95=folded.ci95,
        warnings=run_warnings,
        seed=cfg.seed,
        fold_scores=fold_scores,
        ingest_text=dataset.report.render(),
        cohort_text=base.render(),
        demographics_text=summarize_cohort({sid: dataset.metas[sid] for sid in base.included}),
        wall_clock_seconds=time.perf_counter() - started,
    )
    return report


def _zscore_stats(train_instances, grids):
    chunks = [grids[inst.stay_id].numeric[inst.start:inst.end] for inst in train_instances]
    stacked = np.concatenate(chunks, axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std[std == 0.0] = 1.0
    return mean, std


def _group_instances_direct(
    instance_list: list[TaskInstance],
    grids: Mapping[int, object],
    cfg: ExperimentConfig,
    zstats=None,
) -> list[InstanceGroup]:
    by_length: dict[int, list[int]] = {}
    for i, inst in enumerate(instance_list):
        by_length.setdefault(inst.length, []).append(i)
    groups = []
    for length in sorted(by_length):
        members = by_length[length]
        num = cat = None
        if cfg.use_numeric:
            num = np.stack([grids[instance_list[i].stay_id].numeric[instance_list[i].start:instance_list[i].end]
                            for i in members])
            if zstats is not None:
                num = (num - zstats[0]) / zstats[1]
        if cfg.use_categorical:
            cat = np.stack([grids[instance_list[i].stay_id].categorical[instance_list[i].start:instance_list[i].end]
                            for i in members])
        labels = np.stack([np.asarray(instance_list[i].label, dtype=np.float64) for i in members])
        groups.append(InstanceGroup(indices=np.array(members, dtype=np.int64), num=num, cat=cat, labels=labels))
    return groups


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    mean_a: float | None
    mean_b: float | None
    t: float
    p: float
    flag: str


def _report_dict(report) -> dict:
    return report.to_dict() if isinstance(report, EvalReport) else report


def compare(report_a, report_b) -> list[ComparisonRow]:
    """Welch t-test per metric across fold values of two same-task reports."""
    a = _report_dict(report_a)
    b = _report_dict(report_b)
    if a["task"] != b["task"]:
        raise ConfigError(f"cannot compare different tasks: {a['task']!r} vs {b['task']!r}")
    if len(a["folds"]) != len(b["folds"]) or a["seed"] != b["seed"]:
        raise ConfigError("cannot compare reports with different fold definitions")
    keys = [k for k in a["aggregate"] if k in b["aggregate"]]
    rows = []
    for key in keys:
        va = [f["metrics"].get(key) for f in a["folds"] if f["metrics"].get(key) is not None]
        vb = [f["metrics"].get(key) for f in b["folds"] if f["metrics"].get(key) is not None]
        if len(va) < 2 or len(vb) < 2:
            continue
        result = evaluation.t_test(va, vb)
        rows.append(ComparisonRow(
            metric=key,
            mean_a=float(np.mean(va)),
            mean_b=float(np.mean(vb)),
            t=result.t,
            p=result.p,
            flag=result.flag,
        ))
    return rows


def render_comparison(rows: list[ComparisonRow]) -> str:
    lines = [f"{'metric':<24}{'mean A':<12}{'mean B':<12}{'t':<12}{'p':<12}flag   (\u2020 p<0.05, \u2021 p<0.1)"]
    for row in rows:
        lines.append(
            f"{row.metric:<24}{_fmt_cell(row.mean_a):<12}{_fmt_cell(row.mean_b):<12}"
            f"{row.t:<12.4f}{row.p:<12.4g}{row.flag}"
        )
    return "\n".join(lines) + "\n"


def write_reports(report: EvalReport, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "report.json",
        "text": out_dir / "report.txt",
        "ingestion": out_dir / "ingestion_report.txt",
        "cohort": out_dir / "cohort_report.txt",
    }
    paths["json"].write_text(report_json(report), encoding="utf-8")
    paths["text"].write_text(report_text(report), encoding="utf-8")
    paths["ingestion"].write_text(report.ingest_text, encoding="utf-8")
    paths["cohort"].write_text(report.cohort_text + "\n" + report.demographics_text, encoding="utf-8")
    return paths
