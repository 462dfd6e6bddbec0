import pytest

from mlsgnn.config import DEFAULT_GRID, PRESETS, build_config, read_config_file
from mlsgnn.errors import ConfigError

# reference settings: dataset -> rate -> (lr, weight decay, nhid1, nhid2, alpha, beta)
TABLE = {
    "citeseer": {20: (5e-4, 5e-3, 768, 128, 100, 0.001), 40: (5e-4, 5e-3, 768, 128, 10, 0.001),
                 60: (5e-4, 5e-3, 768, 128, 10, 0.01)},
    "uai2010": {20: (5e-4, 5e-4, 512, 128, 1, 0.01), 40: (5e-4, 5e-4, 512, 128, 0.1, 0.01),
                60: (5e-4, 5e-4, 512, 128, 0.1, 0.01)},
    "acm": {20: (1e-4, 6e-4, 768, 256, 0.001, 0.001), 40: (1e-4, 5e-4, 768, 256, 1, 0.001),
            60: (5e-4, 5e-4, 768, 256, 1, 0.001)},
    "blogcatalog": {20: (3e-4, 1e-5, 768, 128, 1000, 0.001),
                    40: (5e-4, 1e-5, 768, 128, 100, 0.001),
                    60: (3e-4, 1e-5, 768, 128, 100, 0.001)},
    "flickr": {20: (5e-4, 1e-5, 512, 128, 0.1, 1), 40: (5e-4, 1e-5, 512, 128, 0.1, 10),
               60: (5e-4, 1e-5, 512, 128, 0.1, 10)},
    "corafull": {20: (1e-3, 5e-4, 512, 32, 0.001, 0.001), 40: (1e-3, 5e-4, 512, 32, 0.001, 0.001),
                 60: (1e-3, 5e-4, 512, 32, 0.001, 0.001)},
}


def test_all_eighteen_presets():
    assert len(PRESETS) == 18
    for name, rates in TABLE.items():
        for rate, (lr, wd, h1, h2, a, b) in rates.items():
            cfg = build_config(preset=f"{name}-{rate}")
            t = cfg.train
            assert (t.lr, t.weight_decay, t.nhid1, t.nhid2, t.alpha, t.beta) == (lr, wd, h1, h2, a, b)
            assert cfg.split.labels_per_class == rate
            assert cfg.split.test_size == 1000
            assert cfg.walk.gamma == 100 and cfg.walk.path_len == 3 and cfg.walk.neg_shift == 2
            assert t.dropout == 0.5
            assert cfg.data.name == name


def test_file_then_preset_then_overrides(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[train]\nalpha = 5\nmax_epochs = 7\npatience = 3\n[run]\nout = here\n"
                 "[data]\nfeatures = d/x.feature\n")
    cfg = build_config(p)
    assert cfg.train.alpha == 5 and cfg.train.max_epochs == 7
    assert cfg.out_dir == tmp_path / "here"
    assert cfg.data.features == tmp_path / "d" / "x.feature"
    cfg = build_config(p, "citeseer-20")
    assert cfg.train.alpha == 100 and cfg.train.max_epochs == 7
    cfg = build_config(p, "citeseer-20", {"train": {"alpha": 0.0, "beta": 0.0}})
    assert cfg.train.alpha == 0 and cfg.train.beta == 0
    assert cfg.alpha_grid == DEFAULT_GRID


def test_unknown_keys_and_sections_are_errors(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[train]\nalpah = 1\n")
    with pytest.raises(ConfigError, match="alpah"):
        read_config_file(p)
    p.write_text("[trian]\nalpha = 1\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
    p.write_text("[train]\nalpha = abc\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
    p.write_text("no section\n")
    with pytest.raises(ConfigError):
        read_config_file(p)
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "missing.ini")


def test_invalid_values_become_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        build_config(preset="citeseer-30")
    with pytest.raises(ConfigError):
        build_config(overrides={"train": {"lr": -1.0}})
    with pytest.raises(ConfigError):
        build_config(overrides={"walk": {"gamma": 0}})
    with pytest.raises(ConfigError):
        build_config(overrides={"measures": {"kinds": ["euclid"]}})
    with pytest.raises(ConfigError):
        build_config(overrides={"run": {"seeds": []}})


def test_parsers(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[train]\nchannels = ori, fea\nactivate_output = yes\n"
                 "[run]\nseeds = 3,4 5\n[sweep]\nalpha_grid = 0, 1e-3\n"
                 "[walk]\nwindow = auto\nmax_tail_walks = 50\n")
    cfg = build_config(p)
    assert cfg.train.channels == ("fea", "ori")
    assert cfg.train.activate_output is True
    assert cfg.seeds == [3, 4, 5]
    assert cfg.alpha_grid == (0.0, 1e-3)
    assert cfg.walk.window is None and cfg.walk.max_tail_walks == 50


def test_default_data_paths(monkeypatch, tmp_path):
    monkeypatch.setenv("MLSG_DATA_DIR", str(tmp_path))
    cfg = build_config(preset="acm-40")
    f, e, lab = cfg.data.resolved()
    assert f == tmp_path / "acm" / "acm.feature"
    assert e.name == "acm.edge" and lab.name == "acm.label"
