import pytest

from rlmsad import config as cf
from rlmsad.detectors import DetectorKind


def parse(text, tmp_path=None):
    return cf.parse_config(text, tmp_path)


def test_defaults():
    cfg = parse("")
    assert cfg.dataset.source == "synth" and cfg.dataset.downsample == 5
    assert cfg.kinds == tuple(DetectorKind)
    assert (cfg.rewards.tp, cfg.rewards.tn, cfg.rewards.fp, cfg.rewards.fn) == (1.0, 0.1, 0.4, 1.5)
    assert cfg.seeds == (0,) and cfg.mask == "full"
    assert cfg.contamination == 0.12


def test_seeds():
    assert cf.parse_seeds("0-3") == (0, 1, 2, 3)
    assert cf.parse_seeds("2, 5,7") == (2, 5, 7)
    for bad in ("", "1,1", "a", "-2"):
        with pytest.raises(cf.ConfigError):
            cf.parse_seeds(bad)


@pytest.mark.parametrize("text", [
    "[bogus]\nx = 1\n",
    "[env]\nreward_fq = 1\n",
    "[env]\nreward_tn = 2\n",
    "[env]\nreward_fn = 0.3\n",
    "[env]\nmask = drop_all\n",
    "[pool]\nkinds = ecod\n",
    "[pool]\nkinds = ecod, lof\n",
    "[detector.lof]\nk = 3\n",
    "[detector.iforest]\ndepth = 3\n",
    "[agent]\nexploration_final_eps = 0.01\n",
    "[experiment]\nsweep_fp = 0.4, 2.0\n",
    "[dataset]\nsource = csv\ntrain_path = nope.csv\ntest_path = nope.csv\n",
    "[dataset]\nanomaly_rate = 0.9\n",
    "[env]\nwindow = 4\n[detector.autoencoder]\nwindow = 6\n",
    "not an ini",
])
def test_rejected(text):
    with pytest.raises(cf.ConfigError):
        parse(text)


def test_env_window_sets_autoencoder_window():
    cfg = parse("[env]\nwindow = 7\n")
    assert cfg.hyper[DetectorKind.AUTOENCODER]["window"] == 7


def test_relative_paths(tmp_path):
    (tmp_path / "tr.csv").write_text("a\n1\n")
    (tmp_path / "te.csv").write_text("a,label\n1,0\n")
    cfg = parse("[dataset]\nsource = csv\ntrain_path = tr.csv\ntest_path = te.csv\n"
                "[experiment]\noutput_dir = out\n", tmp_path)
    assert cfg.train_csv == tmp_path / "tr.csv"
    assert cfg.output_dir == tmp_path / "out"


def test_synth_paths_live_under_output(tmp_path):
    cfg = parse("[experiment]\noutput_dir = o\n", tmp_path)
    assert cfg.test_csv == tmp_path / "o" / "data" / "test.csv"


def test_agent_section():
    cfg = parse("[agent]\nhidden = 32, 16\nlearning_rate = 0.001\ntotal_steps = 99\n")
    assert cfg.agent.hidden == (32, 16) and cfg.agent.total_steps == 99


def test_help_lists_every_section():
    text = cf.help_epilog()
    for section in cf.KEYS:
        assert f"[{section}]" in text
    assert "reward_fp" in text and "checkpoint_interval" in text
