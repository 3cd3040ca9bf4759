import dataclasses
import json

import pytest

from mvground.config import (PRESETS, SCHEMA_VERSION, PipelineConfig,
                             TsdfParams, config_from_record, load_config,
                             preset, save_config)
from mvground.errors import ConfigInvalid


class TestDefaults:
    def test_stage_sizes(self):
        cfg = PipelineConfig()
        assert cfg.k_preselect == 6
        assert cfg.m_views == 3
        assert cfg.use_oracle_views is True
        assert cfg.strategy == "vote"
        assert cfg.min_iou == 0.05
        assert cfg.schema_version == SCHEMA_VERSION

    def test_tsdf_defaults(self):
        t = TsdfParams()
        assert t.voxel_size == 0.04
        assert t.truncation == 0.12


class TestValidation:
    @pytest.mark.parametrize("kw", [
        {"k_preselect": 0},
        {"m_views": 0},
        {"k_preselect": 2, "m_views": 3},
        {"strategy": "random"},
        {"min_iou": -0.1},
        {"min_iou": 1.5},
        {"sim_weight": 2.0},
        {"trim_lo": -0.01},
        {"mode": "turbo"},
        {"seed": 1.5},
        {"schema_version": 99},
    ])
    def test_bad_values(self, kw):
        with pytest.raises(ConfigInvalid):
            PipelineConfig(**kw)

    def test_tsdf_truncation_floor(self):
        with pytest.raises(ConfigInvalid):
            TsdfParams(voxel_size=0.1, truncation=0.15)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        cfg = PipelineConfig(k_preselect=4, m_views=2, min_iou=0.1,
                             oracle="fixtures:/tmp/fx", seed=7)
        path = tmp_path / "cfg.json"
        save_config(path, cfg)
        again = load_config(path)
        assert again == cfg

    def test_record_shape(self):
        rec = PipelineConfig().to_record()
        assert rec["schema_version"] == SCHEMA_VERSION
        assert rec["tsdf"]["voxel_size"] == 0.04
        assert rec["consensus"]["cell"] == 0.08

    def test_unknown_key_named(self):
        with pytest.raises(ConfigInvalid, match="voxel_sz"):
            config_from_record({"tsdf": {"voxel_sz": 0.1}})

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigInvalid, match="kpreselect"):
            config_from_record({"kpreselect": 3})

    def test_non_dict_rejected(self):
        with pytest.raises(ConfigInvalid):
            config_from_record([1, 2, 3])

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            load_config(tmp_path / "none.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{broken")
        with pytest.raises(ConfigInvalid):
            load_config(path)

    def test_save_is_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_config(a, PipelineConfig())
        save_config(b, PipelineConfig())
        assert a.read_bytes() == b.read_bytes()


class TestPresets:
    def test_names(self):
        assert set(PRESETS) == {"stage1", "stage2", "stage3", "stage4"}

    def test_progression(self):
        s1, s2, s3, s4 = (preset(f"stage{i}") for i in range(1, 5))
        assert s1.strategy == "largest"
        assert (s1.k_preselect, s1.m_views, s1.use_oracle_views) == (1, 1, False)
        assert s2.strategy == "vote"
        assert (s2.k_preselect, s2.m_views, s2.use_oracle_views) == (1, 1, False)
        assert (s3.k_preselect, s3.m_views, s3.use_oracle_views) == (6, 1, True)
        assert (s4.k_preselect, s4.m_views, s4.use_oracle_views) == (6, 3, True)

    def test_stage4_matches_defaults(self):
        assert preset("stage4") == PipelineConfig()

    def test_unknown_preset(self):
        with pytest.raises(ConfigInvalid):
            preset("stage9")

    def test_presets_serializable(self, tmp_path):
        for name, cfg in PRESETS.items():
            path = tmp_path / f"{name}.json"
            save_config(path, cfg)
            assert load_config(path) == cfg


def test_replace_keeps_validation():
    cfg = PipelineConfig()
    with pytest.raises(ConfigInvalid):
        dataclasses.replace(cfg, m_views=99)
