import numpy as np
import pytest

from avsr import io
from avsr.cli import CliError, build_config, main, parse_config_text

TINY = {
    "hidden": 4, "am_layers": 1, "fusion_layers": 1, "max_epochs": 1,
    "am_min_epochs": 0, "lip_min_epochs": 0, "fusion_min_epochs": 0,
    "bn_hidden": 8, "bn_min_epochs": 0, "bn_max_epochs": 1, "bias_grid": "0,2",
}


def write_config(tmp, **extra):
    pairs = dict(TINY, corpus_dir=tmp / "corpus", model_dir=tmp / "models", **extra)
    path = tmp / "run.cfg"
    path.write_text("# tiny run\n" + "".join(f"{k} = {v}\n" for k, v in pairs.items()))
    return str(path)


def test_parse_config_text():
    text = "hidden = 16  # comment\n\n# only comment\nconditions = clean, 5\n"
    assert parse_config_text(text) == {"hidden": "16", "conditions": "clean, 5"}
    with pytest.raises(CliError):
        parse_config_text("no equals sign")
    cfg, paths = build_config({"hidden": "16", "conditions": "clean, 5", "model_dir": "m"})
    assert cfg.hidden == 16 and cfg.conditions == ("clean", 5.0)
    assert str(paths["model_dir"]) == "m"
    with pytest.raises(CliError) as exc:
        build_config({"hiddne": "3"})
    assert exc.value.code == 1
    with pytest.raises(CliError):
        build_config({"hidden": "many"})


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["gen-corpus", "--n", "5", "--out", str(tmp_path / "c")]) == 1
    assert main(["train", "am", "--set", "bogus=1"]) == 1
    assert "bogus" in capsys.readouterr().err
    assert main(["train", "am", "--set", f"corpus_dir={tmp_path}"]) == 1  # model_dir missing


def test_missing_prerequisites(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["gen-corpus", "--config", cfg, "--n", "20"]) == 0
    capsys.readouterr()
    assert main(["train", "bn", "--config", cfg]) == 2
    assert "'am'" in capsys.readouterr().err
    assert main(["evaluate", "--config", cfg]) == 2
    assert main(["train", "am", "--config", cfg, "--set", f"corpus_dir={tmp_path / 'nowhere'}"]) == 3


def test_end_to_end(tmp_path, capsys):
    cfg = write_config(tmp_path)
    models = tmp_path / "models"
    assert main(["gen-corpus", "--config", cfg, "--n", "30"]) == 0
    for stage in ("am", "bn", "lip", "fusion"):
        assert main(["train", stage, "--config", cfg]) == 0
        assert (models / f"{stage}.modl").exists()
    assert (models / "priors.prio").exists() and any((models / "flab").iterdir())
    log = (models / "am.log").read_text().splitlines()
    assert len(log) == 1 and len(log[0].split("\t")) == 5

    assert main(["extract-bn", "--config", cfg, "--out", str(tmp_path / "bnf")]) == 0
    feats = sorted((tmp_path / "bnf").glob("*.feat"))
    assert len(feats) == 3 and io.read_feat(feats[0]).shape[1] == 24

    out = tmp_path / "dec.txt"
    assert main(["decode", "--config", cfg, "--model", "fusion", "--audio", "10", "--visual", "on",
                 "--out", str(out)]) == 0
    assert len(io.read_decodes(out)) == 3
    assert main(["decode", "--config", cfg, "--model", "decision", "--visual", "on",
                 "--out", str(out)]) == 2
    assert main(["tune-bias", "--config", cfg]) == 0
    assert float((models / "bias.txt").read_text()) in (0.0, 2.0)
    assert main(["decode", "--config", cfg, "--model", "decision", "--audio", "off", "--visual", "on",
                 "--out", str(out)]) == 0

    assert main(["evaluate", "--config", cfg]) == 0
    lines = (models / "results.tsv").read_text().splitlines()
    assert lines[0] == "model\taudio_cond\tvisual\tcer" and len(lines) == 15
    cers = [float(line.split("\t")[3]) for line in lines[1:]]
    assert all(np.isfinite(c) and c >= 0 for c in cers)
    assert "CER" in capsys.readouterr().out

    # a corrupted checkpoint is a data error
    (models / "lip.modl").write_bytes(b"MODLjunk")
    assert main(["decode", "--config", cfg, "--model", "lip", "--audio", "off", "--visual", "on", "--out", str(out)]) == 3
