import json

import pytest

from pmiris.config import PipelineConfig, load_config, save_config


def test_defaults():
    c = PipelineConfig()
    assert c.polar_shape == (64, 512)
    assert c.max_shift == 8 and c.score_norm and c.fmr_max == 0.01 and c.max_rank == 10
    assert c.roc_horizons[-1] == 370.0 and c.cmc_horizons[0] == 24.0


def test_round_trip(tmp_path):
    c = PipelineConfig(max_shift=4, score_norm=False, roc_horizons=(5, 50))
    back = load_config(save_config(c, tmp_path / "c.json"))
    assert back == c and back.fingerprint() == c.fingerprint()


def test_fingerprint_tracks_score_fields():
    base = PipelineConfig()
    assert base.fingerprint() == PipelineConfig().fingerprint()
    assert base.with_overrides(output_dir="/x").fingerprint() == base.fingerprint()
    for kw in ({"max_shift": 7}, {"score_norm": False}, {"fmr_max": 0.001}, {"fnmr_horizons": (1.0,)}):
        assert base.with_overrides(**kw).fingerprint() != base.fingerprint()


@pytest.mark.parametrize("kw", [{"max_shift": -1}, {"n_policy": "median"}, {"roc_horizons": (24, 10)},
                                {"fmr_max": 0}, {"max_rank": 0}, {"cmc_horizons": (-1,)}])
def test_invalid(kw):
    with pytest.raises(ValueError):
        PipelineConfig(**kw)


def test_unknown_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"max_shift": 3, "shiftz": 1}))
    with pytest.raises(ValueError, match="shiftz"):
        load_config(p)
