import pytest

from qpnet.cli import main, rf_table
from qpnet.config import RunConfig, parse_ratios
from qpnet.errors import ConfigError

SMALL_INI = """
[run]
preset = tiny-qpnet
seed = 4

[net]
residual_channels = 8
skip_channels = 8

[train]
max_steps = 3
batch_size = 1
crop_len = 300
learning_rate = 0.001

[corpus]
duration = 0.2

[eval]
ratios = 1, 3/2
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.ini"
    cfg.write_text(SMALL_INI)
    assert main(["synth-corpus", "--config", str(cfg), "--n", "2", "--out", str(root / "corpus")]) == 0
    assert main(["train", "--config", str(cfg), "--manifest", str(root / "corpus" / "manifest.txt"),
                 "--out", str(root / "model")]) == 0
    return root, cfg


def _rows(text):
    return [line.split() for line in text.strip().splitlines()[1:]]


def test_rf_analyze_presets(capsys):
    assert main(["rf-analyze"]) == 0
    rows = _rows(capsys.readouterr().out)
    assert ["wnf", "-", "-", "3070"] in rows
    assert ["wnc", "-", "-", "61"] in rows
    assert ["qpnet", "50", "56", "886"] in rows
    assert ["qpnet", "500", "6", "136"] in rows


def test_rf_analyze_single_f0(capsys):
    assert main(["rf-analyze", "--preset", "qpnet", "--f0", "100"]) == 0
    assert _rows(capsys.readouterr().out) == [["qpnet", "100", "28", str(46 + 15 * 28)]]
    assert rf_table(["qpnet"], 50.0) == [("qpnet", "50", "56", 886)]


def test_unknown_preset(capsys):
    assert main(["rf-analyze", "--preset", "bogus"]) == 2
    err = capsys.readouterr().err
    assert "tiny-qpnet" in err and "wnf" in err


def test_corpus_outputs(workspace):
    root, _ = workspace
    corpus = root / "corpus"
    assert (corpus / "manifest.txt").read_text().splitlines() == ["utt0000.wav\tutt0000.qpf",
                                                                  "utt0001.wav\tutt0001.qpf"]
    assert "seed = 4" in (corpus / "config.ini").read_text()
    assert (root / "model" / "model.qpw").exists()
    assert len((root / "model" / "loss.csv").read_text().splitlines()) == 4


def test_extract(workspace, tmp_path):
    root, cfg = workspace
    assert main(["extract", "--config", str(cfg), str(root / "corpus" / "utt0000.wav"), "--out", str(tmp_path)]) == 0
    from qpnet.frames import load_track

    t = load_track(tmp_path / "utt0000.qpf")
    assert t.mcep_dim == 16 and t.frame_hop == 80


def test_generate_is_byte_identical(workspace, tmp_path):
    root, cfg = workspace
    args = ["generate", "--config", str(cfg), "--checkpoint", str(root / "model" / "model.qpw"),
            "--features", str(root / "corpus" / "utt0000.qpf"), "--mode", "argmax"]
    assert main(args + ["--out", str(tmp_path / "a.wav")]) == 0
    assert main(args + ["--out", str(tmp_path / "b.wav"), "--ratio", "1"]) == 0
    assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()
    assert main(args + ["--out", str(tmp_path / "c.wav"), "--ratio", "3/2"]) == 0


def test_eval(workspace, tmp_path, capsys):
    root, cfg = workspace
    assert main(["eval", "--config", str(cfg), "--checkpoint", str(root / "model" / "model.qpw"),
                 "--manifest", str(root / "corpus" / "manifest.txt"), "--out", str(tmp_path), "--limit", "1"]) == 0
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "ratio,logf0_rmse,mcd_db,voiced_frames"
    assert [line.split(",")[0] for line in lines[1:]] == ["1", "3/2", "average"]
    assert "natural log" in capsys.readouterr().out


def test_missing_manifest_fails(tmp_path, capsys):
    code = main(["train", "--manifest", str(tmp_path / "none.txt"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "does not exist" in capsys.readouterr().err


def test_config_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\npreset = tiny-wnc\nseed = 2\n[train]\nmax_steps = 9\n[features]\nmcep_dim = 10\n")
    rc = RunConfig.resolve(ini, {"run": {"seed": 5}, "train": {"max_steps": None}})
    assert rc.preset == "tiny-wnc" and rc.seed == 5 and rc.train.seed == 5
    assert rc.train.max_steps == 9 and rc.net.aux_dim == 12 and rc.net.n_adaptive == 0
    again = tmp_path / "echo.ini"
    again.write_text(rc.echo())
    rc2 = RunConfig.resolve(again)
    assert rc2.net == rc.net and rc2.train == rc.train and rc2.features == rc.features


def test_config_errors(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[net]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.resolve(ini)
    ini.write_text("[weird]\nx = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.resolve(ini)
    with pytest.raises(ConfigError):
        RunConfig.resolve(None, {"generate": {"mode": "beam"}})
    with pytest.raises(ConfigError):
        RunConfig.resolve(None, {"net": {"aux_dim": 5}})


def test_parse_ratios():
    assert [str(r) for r in parse_ratios("1, 1/2,1.5")] == ["1", "1/2", "3/2"]
    assert len(parse_ratios(None)) == 10
    with pytest.raises(ConfigError):
        parse_ratios("0")
    with pytest.raises(ConfigError):
        parse_ratios("abc")
