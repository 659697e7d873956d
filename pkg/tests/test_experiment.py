import json

import numpy as np
import pytest

from icubench.errors import ConfigError, IcubenchError
from icubench.experiment import (
    EvalReport,
    ExperimentConfig,
    _check,
    compare,
    config_from_sources,
    make_folds,
    parse_config_file,
    render_comparison,
    report_json,
    run_experiment,
    summarize_cohort,
    write_reports,
)
from icubench.schema import DischargeStatus, StayMeta


class TestMakeFolds:
    def test_ten_patients_five_folds_of_two(self):
        folds = make_folds(list(range(10)), 5, seed=0)
        sizes = [list(folds.values()).count(f) for f in range(5)]
        assert sizes == [2, 2, 2, 2, 2]

    def test_partition_laws(self):
        patients = list(range(23))
        folds = make_folds(patients, 5, seed=3)
        assert set(folds) == set(patients)
        sizes = [list(folds.values()).count(f) for f in range(5)]
        assert max(sizes) - min(sizes) <= 1

    def test_deterministic(self):
        assert make_folds(list(range(40)), 4, seed=9) == make_folds(list(range(40)), 4, seed=9)

    def test_fewer_patients_than_folds(self):
        with pytest.raises(ConfigError):
            make_folds([1, 2], 3, seed=0)

    def test_stays_of_one_patient_share_a_fold(self):
        # fold assignment is per patient, so any number of stays inherit it
        folds = make_folds([10, 11, 12, 13], 2, seed=1)
        stays = [(100, 10), (101, 10), (102, 10), (103, 11)]
        assigned = {stay: folds[pid] for stay, pid in stays}
        assert assigned[100] == assigned[101] == assigned[102]


class TestConfig:
    def test_file_then_override(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text("task=los\nfolds=3\nepochs=4\n# comment\nzscore=true\n", encoding="utf-8")
        cfg = config_from_sources(parse_config_file(cfg_file), folds=5)
        assert cfg.task == "los" and cfg.folds == 5 and cfg.epochs == 4 and cfg.zscore is True

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text("task=los\nnot_a_key=1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            config_from_sources(parse_config_file(cfg_file))

    def test_bad_value_rejected(self, tmp_path):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text("task=los\nfolds=three\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            config_from_sources(parse_config_file(cfg_file))

    def test_task_required(self):
        with pytest.raises(ConfigError):
            config_from_sources({})

    def test_invalid_choices(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(task="nonsense")
        with pytest.raises(ConfigError):
            ExperimentConfig(task="los", folds=1)
        with pytest.raises(ConfigError):
            ExperimentConfig(task="mortality48", max_hours=40)

    def test_variable_subsets(self):
        cfg = ExperimentConfig(task="los", variables="numerical_only")
        assert cfg.use_numeric and not cfg.use_categorical
        cfg = ExperimentConfig(task="los", variables="categorical_only")
        assert cfg.use_categorical and not cfg.use_numeric


class TestRunExperiment:
    def _cfg(self, data_dir, tmp_path, **kw):
        defaults = dict(task="los", model="lr", data_dir=str(data_dir), out_dir=str(tmp_path / "out"),
                        folds=3, epochs=2, seed=5, zscore=True)
        defaults.update(kw)
        return ExperimentConfig(**defaults)

    def test_los_run_completes_with_stable_schema(self, small_dump, tmp_path):
        report = run_experiment(self._cfg(small_dump, tmp_path))
        assert len(report.fold_results) == 3
        for fold in report.fold_results:
            assert set(fold["metrics"]) == {"r2", "mae"}
        assert "r2" in report.aggregate_mean and "mae" in report.aggregate_mean

    def test_byte_identical_reports_for_same_seed(self, small_dump, tmp_path):
        a = report_json(run_experiment(self._cfg(small_dump, tmp_path)))
        b = report_json(run_experiment(self._cfg(small_dump, tmp_path)))
        assert a == b

    def test_different_seed_changes_folds(self, small_dump, tmp_path):
        a = run_experiment(self._cfg(small_dump, tmp_path, seed=5))
        b = run_experiment(self._cfg(small_dump, tmp_path, seed=6))
        assert report_json(a) != report_json(b)

    def test_decompensation_classification_keys(self, small_dump, tmp_path):
        report = run_experiment(self._cfg(small_dump, tmp_path, task="decompensation"))
        for fold in report.fold_results:
            assert set(fold["metrics"]) == {"auroc", "auprc", "specificity_at_sens90", "sensitivity", "ppv", "npv"}

    def test_phenotyping_runs_with_macro_metrics(self, small_dump, tmp_path):
        report = run_experiment(self._cfg(small_dump, tmp_path, task="phenotyping"))
        assert any(f["metrics"].get("auroc") is not None for f in report.fold_results)

    def test_mortality_oversample_bookkeeping(self, small_dump, tmp_path):
        report = run_experiment(self._cfg(small_dump, tmp_path, task="mortality24", folds=2))
        for fold in report.fold_results:
            assert fold["n_train"] >= fold["n_train_before_oversample"]

    def test_write_reports(self, small_dump, tmp_path):
        report = run_experiment(self._cfg(small_dump, tmp_path))
        paths = write_reports(report, tmp_path / "out")
        doc = json.loads(paths["json"].read_text(encoding="utf-8"))
        assert doc["task"] == "los" and len(doc["folds"]) == 3
        assert "wall clock" in paths["text"].read_text(encoding="utf-8")
        assert "ingestion report" in paths["ingestion"].read_text(encoding="utf-8")
        assert "cohort report" in paths["cohort"].read_text(encoding="utf-8")

    def test_runtime_check_helper(self):
        with pytest.raises(IcubenchError):
            _check(False, "boom")

    def test_grid_cache_reuse_is_equivalent(self, small_dump, tmp_path):
        cache_dir = tmp_path / "cache"
        cfg = self._cfg(small_dump, tmp_path, cache_dir=str(cache_dir))
        cold = report_json(run_experiment(cfg))
        assert any(cache_dir.rglob("stay_*.grid"))
        warm = report_json(run_experiment(cfg))
        assert cold == warm

    def test_save_models_writes_loadable_checkpoints(self, small_dump, tmp_path):
        from icubench.neural.checkpoint import MAGIC

        cfg = self._cfg(small_dump, tmp_path, folds=2, save_models=True)
        run_experiment(cfg)
        ckpts = sorted((tmp_path / "out").glob("model_fold*.ckpt"))
        assert len(ckpts) == 2
        assert ckpts[0].read_bytes()[:4] == MAGIC

    def test_dropout_config_trains(self, small_dump, tmp_path):
        report = run_experiment(self._cfg(small_dump, tmp_path, model="ann", dropout=0.2))
        assert report.aggregate_mean["mae"] is not None


class TestCompare:
    def test_self_comparison_not_significant(self, small_dump, tmp_path):
        cfg = ExperimentConfig(task="los", model="lr", data_dir=str(small_dump),
                               out_dir=str(tmp_path / "o"), folds=3, epochs=2, seed=5, zscore=True)
        report = run_experiment(cfg)
        rows = compare(report, report)
        assert rows
        for row in rows:
            assert row.p == 1.0 and row.flag == "-"
        assert "metric" in render_comparison(rows)

    def test_fold_mismatch_rejected(self):
        a = {"task": "los", "seed": 1, "folds": [{}] * 3, "aggregate": {}}
        b = {"task": "los", "seed": 1, "folds": [{}] * 5, "aggregate": {}}
        with pytest.raises(ConfigError):
            compare(a, b)

    def test_task_mismatch_rejected(self):
        a = {"task": "los", "seed": 1, "folds": [], "aggregate": {}}
        b = {"task": "mortality24", "seed": 1, "folds": [], "aggregate": {}}
        with pytest.raises(ConfigError):
            compare(a, b)


class TestSummarizeCohort:
    def _meta(self, sid, status):
        return StayMeta(stay_id=sid, patient_id=sid, age=60.0, gender="Female", ethnicity="Other",
                        admission_diagnosis="Sepsis", hospital_discharge_status=status,
                        unit_discharge_offset_minutes=3000)

    def test_contains_strata_and_rows(self):
        metas = {i: self._meta(i, DischargeStatus.ALIVE) for i in range(4)}
        metas[9] = self._meta(9, DischargeStatus.EXPIRED)
        text = summarize_cohort(metas)
        assert "Dead at hospital" in text and "ICU stays" in text
        assert "Age, median [IQR]" in text

    def test_empty_stratum_rendered_as_dash(self):
        metas = {i: self._meta(i, DischargeStatus.ALIVE) for i in range(3)}
        text = summarize_cohort(metas)
        assert "—" in text
