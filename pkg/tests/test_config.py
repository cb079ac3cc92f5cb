import json
import math

import pytest

from prorandconv.config import (
    ConfigError,
    load_run_config,
    resolve_augment_section,
    resolve_run_config,
    resolved_config_dict,
    write_resolved_config,
)


class TestResolve:
    def test_empty_document_gives_defaults(self):
        cfg = resolve_run_config({})
        assert cfg.augment.kernel_size == 3
        assert cfg.train.batch_size == 64
        assert cfg.train.lr0 == 0.01
        assert cfg.seed == 0
        assert cfg.paths == {}

    def test_partial_overrides(self):
        cfg = resolve_run_config(
            {"augment": {"l_max": 5, "enable_offsets": False},
             "train": {"epochs": 3, "selection": "batch_either"},
             "seed": 11}
        )
        assert cfg.augment.l_max == 5 and not cfg.augment.enable_offsets
        assert cfg.train.epochs == 3 and cfg.train.selection == "batch_either"
        assert cfg.train.seed == 11

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            resolve_run_config({"augmnet": {}})

    def test_unknown_augment_key(self):
        with pytest.raises(ConfigError, match="kernelsize"):
            resolve_run_config({"augment": {"kernelsize": 5}})

    def test_unknown_train_key(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            resolve_run_config({"train": {"learning_rate": 0.1}})

    def test_unknown_paths_key(self):
        with pytest.raises(ConfigError):
            resolve_run_config({"paths": {"ouput": "x"}})

    def test_invalid_values_surface_clearly(self):
        with pytest.raises(ConfigError, match="augment"):
            resolve_run_config({"augment": {"kernel_size": 4}})
        with pytest.raises(ConfigError, match="train"):
            resolve_run_config({"train": {"batch_size": 0}})
        with pytest.raises(ConfigError, match="seed"):
            resolve_run_config({"seed": -3})
        with pytest.raises(ConfigError, match="seed"):
            resolve_run_config({"seed": True})

    def test_sigma_w_null_resolves_to_he_default(self):
        cfg = resolve_run_config({"augment": {"sigma_w": None}})
        assert cfg.augment.sigma_w is None
        doc = resolved_config_dict(cfg)
        assert doc["augment"]["sigma_w"] == pytest.approx(1.0 / math.sqrt(27.0))

    def test_augment_section_helper(self):
        cfg = resolve_augment_section({"grf_alpha": 4.0})
        assert cfg.grf_alpha == 4.0
        with pytest.raises(ConfigError):
            resolve_augment_section({"alpha": 4.0})


class TestFiles:
    def test_load_missing_is_defaults(self):
        assert load_run_config(None).train.epochs == 20

    def test_load_and_echo_roundtrip(self, tmp_path):
        doc = {"augment": {"l_max": 4}, "train": {"epochs": 2}, "seed": 9,
               "paths": {"data": "d"}}
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(doc))
        cfg = load_run_config(p)
        out = write_resolved_config(cfg, tmp_path)
        echoed = json.loads(out.read_text())
        # the echoed config is fully resolved and re-loadable to the same state
        cfg2 = resolve_run_config(echoed)
        assert cfg2.augment == cfg.augment or (
            cfg2.augment.sigma_w == cfg.augment.sigma_w_effective
        )
        assert cfg2.train == cfg.train
        assert cfg2.seed == 9

    def test_invalid_json_rejected(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="JSON"):
            load_run_config(p)
