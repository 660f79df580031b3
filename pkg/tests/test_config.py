import shutil

import pytest

from ghostop.config import ConfigError, loads, parse_config, render, resolve
from conftest import CONFIGS


def test_three_block_config(fig5_cfg):
    cfg = parse_config(fig5_cfg)
    assert cfg.data["grid"]["blocks"] == 3
    assert len(cfg.boundaries) == 3
    built = resolve(cfg)
    prog = built.stage()
    assert len(prog.pieces) == 4
    assert built.prune(prog).cells() == 20


def test_round_trip_shipped():
    for path in CONFIGS.glob("*.cfg"):
        cfg = parse_config(path)
        assert loads(render(cfg), path.parent) == cfg


def _variant(tmp_path, old, new):
    text = (CONFIGS / "fig5.cfg").read_text()
    assert old in text
    shutil.copy(CONFIGS / "fig5_left.bcsr", tmp_path)
    p = tmp_path / "v.cfg"
    p.write_text(text.replace(old, new))
    return p


def test_step_zero_rejected(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config(_variant(tmp_path, "block1_data: (1,2,1)", "block1_data: (1,2,0)"))
    assert e.value.field == "regions.block1_data"


def test_dangling_payload(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config(_variant(tmp_path, "fig5_left.bcsr", "missing.bcsr"))
    assert e.value.field == "boundaries[0].file" and "missing.bcsr" in str(e.value)


def test_schema_field_path(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config(_variant(tmp_path, "steps: 100", "steps: many"))
    assert e.value.field == "run.steps"


def test_unknown_region_reference(tmp_path):
    with pytest.raises(ConfigError) as e:
        parse_config(_variant(tmp_path, "exclude: [block1_data, right, left]", "exclude: [nowhere]"))
    assert "exclude" in e.value.field


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config(CONFIGS / "absent.cfg")
