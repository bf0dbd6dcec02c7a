import json

import pytest

from vowelgate.cli import main
from vowelgate.config import ConfigError, PipelineConfig
from vowelgate.pipeline import PipelineError, load_bundle


def small_config(path):
    c = PipelineConfig()
    c.corpus.n_utterances = 10
    c.corpus.n_male = 5
    c.gmm.mixture_scale = 0.05
    c.svm.C_grid = [1.0, 10.0]
    c.svm.sigma_grid = [2.0, 4.0]
    c.svm.folds = 3
    c.svm.pool_size = 600
    c.save(path)
    return path


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = small_config(root / "small.json")
    out = root / "out"
    for cmd in (["gen-corpus"], ["train"], ["evaluate"]):
        assert main(["--config", str(cfg), "--out", str(out)] + cmd) == 0
    return root, cfg, out


class TestCommands:
    def test_artifacts(self, run):
        _, _, out = run
        corpus = out / "corpus"
        assert len(list(corpus.glob("*.wav"))) == 10 and len(list(corpus.glob("*.lab"))) == 10
        assert len((corpus / "train.tsv").read_text().splitlines()) == 8
        assert len((corpus / "test.tsv").read_text().splitlines()) == 2
        for name in ("manifest.json", "config.json", "svm.json", "gmm_vowel.json", "train_report.json"):
            assert (out / "model" / name).is_file()
        for name in ("confusion.txt", "confusion.csv", "summary.json"):
            assert (out / "eval" / name).is_file()
        assert not list(out.rglob(".*")), "temporary files left behind"

    def test_train_report_compares_support_vectors(self, run):
        report = json.loads((run[2] / "model" / "train_report.json").read_text())
        assert report["sv_gated"] > 0 and report["sv_ungated"] > 0

    def test_rerun_is_identical(self, run, tmp_path):
        _, cfg, out = run
        for cmd in (["gen-corpus"], ["train"], ["evaluate"]):
            assert main(["--config", str(cfg), "--out", str(tmp_path)] + cmd) == 0
        assert (tmp_path / "eval" / "confusion.csv").read_text() == (out / "eval" / "confusion.csv").read_text()
        assert (tmp_path / "model" / "svm.json").read_text() == (out / "model" / "svm.json").read_text()

    def test_extract(self, run, tmp_path):
        _, cfg, out = run
        assert main(["--config", str(cfg), "--out", str(tmp_path), "extract",
                     str(out / "corpus" / "test.tsv")]) == 0
        files = list((tmp_path / "features").glob("*.csv"))
        assert len(files) == 2
        assert files[0].read_text().splitlines()[0].startswith("frame_index,")

    def test_detect_then_classify(self, run, tmp_path, capsys):
        _, cfg, out = run
        wav = sorted((out / "corpus").glob("*.wav"))[0]
        base = ["--config", str(cfg), "--out", str(tmp_path), "--seed", "0"]
        assert main(base + ["detect", str(wav), "--model", str(out / "model")]) == 0
        seg_csv = tmp_path / "detect" / f"{wav.stem}.segments.csv"
        lines = seg_csv.read_text().splitlines()
        assert lines[0] == "start_time_s,end_time_s,label,cm" and len(lines) > 1
        assert all(",Unlabeled," in ln for ln in lines[1:])
        assert (tmp_path / "detect" / f"{wav.stem}.curve.csv").is_file()
        assert main(base + ["classify", str(wav), "--segments", str(seg_csv),
                            "--model", str(out / "model")]) == 0
        labelled = (tmp_path / "classify" / f"{wav.stem}.csv").read_text().splitlines()
        assert len(labelled) == len(lines)
        assert "Unlabeled" not in "".join(labelled[1:])


class TestErrors:
    def test_evaluate_without_model(self, tmp_path, capsys):
        assert main(["--out", str(tmp_path), "evaluate"]) != 0
        err = capsys.readouterr().err
        assert "train" in err and "first" in err

    def test_train_without_corpus(self, tmp_path, capsys):
        assert main(["--out", str(tmp_path), "train"]) != 0
        assert "gen-corpus" in capsys.readouterr().err

    def test_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"fusion": {"energy": 0.9, "gmm": 0.5, "svm": 0.2}}))
        assert main(["--config", str(bad), "--out", str(tmp_path), "gen-corpus"]) != 0
        assert "sum to 1" in capsys.readouterr().err
        assert not (tmp_path / "corpus").exists()

    def test_dsp_mismatch_refused(self, run, tmp_path):
        _, _, out = run
        other = PipelineConfig()
        other.dsp = type(other.dsp)(pre_emphasis=0.95)
        with pytest.raises(PipelineError, match="front-end"):
            load_bundle(out / "model", expect_config=other)


class TestConfig:
    def test_round_trip(self, tmp_path):
        c = PipelineConfig()
        c.gmm.mixture_scale = 0.1
        c.save(tmp_path / "c.json")
        back = PipelineConfig.load(tmp_path / "c.json")
        assert back == c and back.dumps() == c.dumps()

    def test_committed_configs_load(self):
        from pathlib import Path
        root = Path(__file__).resolve().parents[1] / "configs"
        assert PipelineConfig.load(root / "default.json") == PipelineConfig()
        synth = PipelineConfig.load(root / "synthetic.json")
        assert (synth.gmm.scaled(synth.gmm.vowel_components),
                synth.gmm.scaled(synth.gmm.nonvowel_components)) == (8, 17)

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            PipelineConfig.from_dict({"gmm": {"mixtures": 3}})

    def test_defaults(self):
        c = PipelineConfig()
        assert (c.gmm.vowel_components, c.gmm.nonvowel_components) == (80, 170)
        assert c.train_fraction == 0.8 and c.gating.target_ambiguous_fraction == 0.25
