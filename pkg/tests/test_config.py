import pytest

from pmclab.config import Config, load_config, make_config
from pmclab.errors import ConfigurationError


def test_defaults_valid():
    cfg = make_config()
    assert cfg == Config()
    assert cfg.levels == [3, 4, 5] and cfg.gn_level == 5 and cfg.n_directions == 8 and cfg.delta == 1e-2


def test_yaml_and_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("mesh-level: 3\nfd_eps: [0.1, 0.05]\nseed: 4\n")
    cfg = load_config(str(p), {"seed": "9", "cgo-h-list": "0.4,0.2,0.1,0.05"})
    assert cfg.mesh_level == 3 and cfg.fd_eps == [0.1, 0.05]
    assert cfg.seed == 9 and cfg.cgo_h_list == [0.4, 0.2, 0.1, 0.05]


@pytest.mark.parametrize("bad", [
    {"no_such_key": 1},
    {"newton_tol": 0},
    {"gn_reg": -1},
    {"mesh_level": 12},
    {"fd_eps": []},
    {"seed": "abc"},
    {"noise": -0.1},
])
def test_invalid_values_rejected(bad):
    with pytest.raises(ConfigurationError):
        make_config(bad)


def test_non_mapping_file_rejected(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError):
        load_config(str(p))
