import csv
import io

import numpy as np
import pytest

from stvae.cli import main
from stvae.config import format_config, load_preset
from stvae.data import read_mask_cache


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    cfg = load_preset("desk-st-masked").replace(encoder_layers=(16, 3), decoder_layers=(3, 16), epochs=1,
                                                 train_images=320, test_images=64)
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text(format_config(cfg))
    return path


def test_end_to_end(cfg_file, synth_dir, tmp_path, capsys):
    assert main(["train", "--config", str(cfg_file), "--data-dir", str(synth_dir), "--out", str(tmp_path)]) == 0
    ckpt = str(tmp_path / "best.tvae")
    capsys.readouterr()
    assert main(["eval", "--checkpoint", ckpt, "--data-dir", str(synth_dir)]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [r["model"] for r in rows] == ["model", "mean_impute"]
    assert main(["impute", "--checkpoint", ckpt, "--data-dir", str(synth_dir), "--mask-seed", "2",
                 "--out", str(tmp_path / "imp")]) == 0
    assert (tmp_path / "imp" / "reconstructions.pgm").exists()
    assert main(["sample", "--checkpoint", ckpt, "-n", "4", "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "samples.pgm").exists()


def test_make_masks(tmp_path):
    out = tmp_path / "m.bin"
    assert main(["make-masks", "--count", "6", "--seed", "1", "--out", str(out)]) == 0
    masks = read_mask_cache(out)
    assert masks.shape == (6, 784) and 0.6 < masks.mean() < 0.95


def test_synth_data(tmp_path):
    assert main(["synth-data", "--out", str(tmp_path), "--train", "10", "--test", "4"]) == 0
    assert (tmp_path / "train-images-idx3-ubyte").stat().st_size == 16 + 10 * 784


def test_search(cfg_file, synth_dir, tmp_path, capsys):
    assert main(["search", "--config", str(cfg_file), "--trials", "2", "--seed", "3",
                 "--data-dir", str(synth_dir), "--out", str(tmp_path)]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == 2


def test_errors_exit_with_code_2(tmp_path, capsys):
    assert main(["train", "--config", "no-such-preset", "--data-dir", ".", "--out", str(tmp_path)]) == 2
    assert "no such config" in capsys.readouterr().err
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.tvae"), "--data-dir", "."]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_preset_name_accepted(synth_dir, tmp_path):
    # a preset name resolves without a file; the run is cut short by a bad data dir
    assert main(["train", "--config", "desk-g", "--data-dir", str(tmp_path / "none"), "--out", str(tmp_path)]) == 2
