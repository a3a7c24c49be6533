import json
import subprocess
import sys

import pytest

from kdlab import __version__
from kdlab.cli import main
from kdlab.reports import RunManifest, load_report


@pytest.fixture
def toy(tmp_path):
    corpus = tmp_path / "d.txt"
    corpus.write_text("a ||| x\na ||| y\nb ||| z\nb ||| z\n")
    aln = tmp_path / "d.aln"
    aln.write_text("0-0\n0-0\n0-0\n0-0\n")
    return corpus, aln


@pytest.fixture
def hmm_files(tmp_path):
    out = tmp_path / "gen"
    assert main(["hmm-gen", "--K", "4", "--V", "8", "--seed", "3", "--out", str(out)]) == 0
    hmm = out / "hmm.json"
    assert main(["hmm-sample", "--hmm", str(hmm), "--n", "300", "--out",
                 str(tmp_path / "s")]) == 0
    return hmm, tmp_path / "s" / "data.txt"


def data_of(path):
    return load_report(path)["data"]


class TestBasics:
    def test_toy_complexity(self, tmp_path, toy):
        corpus, aln = toy
        out = tmp_path / "o"
        assert main(["complexity", "--corpus", str(corpus), "--align", str(aln),
                     "--out", str(out)]) == 0
        assert round(data_of(out / "report.json")["C"], 4) == 0.3466
        man = RunManifest.load(out / "manifest.json")
        assert man.subcommand == "complexity" and man.seed == 42
        assert set(man.inputs) == {str(corpus), str(aln)}

    def test_stdout_json(self, toy, capsys):
        corpus, _ = toy
        assert main(["complexity", "--corpus", str(corpus), "--identity", "--log2"]) == 0
        assert json.loads(capsys.readouterr().out)["data"]["C"] == pytest.approx(0.5)

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["complexity", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["complexity", "--corpus", str(tmp_path / "nope.txt"), "--identity"]) == 2

    def test_malformed_corpus_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("no separator here\n")
        assert main(["complexity", "--corpus", str(bad), "--identity"]) == 2

    def test_conflicting_link_sources(self, toy):
        corpus, aln = toy
        assert main(["complexity", "--corpus", str(corpus), "--align", str(aln),
                     "--identity"]) == 1

    def test_bad_threads(self, toy):
        assert main(["complexity", "--corpus", str(toy[0]), "--identity",
                     "--threads", "0"]) == 1

    def test_version_and_help(self, capsys):
        assert main(["--version"]) == 0
        assert __version__ in capsys.readouterr().out
        assert main(["--help"]) == 0
        assert "hmm-distill" in capsys.readouterr().out

    def test_console_script(self):
        res = subprocess.run([sys.executable, "-m", "kdlab", "--version"], capture_output=True,
                             text=True)
        assert res.returncode == 0 and __version__ in res.stdout

    def test_inputs_not_mutated(self, tmp_path, toy):
        corpus, aln = toy
        before = corpus.read_bytes(), aln.read_bytes()
        main(["entropy-hist", "--corpus", str(corpus), "--align", str(aln),
              "--out", str(tmp_path / "e"), "--format", "json,svg"])
        assert (corpus.read_bytes(), aln.read_bytes()) == before
        assert (tmp_path / "e" / "report.svg").is_file()


class TestPipelines:
    def test_align_outputs(self, tmp_path, toy):
        out = tmp_path / "al"
        assert main(["align", "--corpus", str(toy[0]), "--out", str(out)]) == 0
        assert (out / "alignments.aln").read_text().splitlines() == ["0-0"] * 4
        assert (out / "model.json").is_file()
        assert main(["complexity", "--corpus", str(toy[0]), "--model", str(out / "model.json"),
                     "--out", str(tmp_path / "c")]) == 0

    def test_beam_full_width_equals_viterbi(self, tmp_path, hmm_files):
        hmm, data = hmm_files
        for strat in ("viterbi", "beam:4"):
            assert main(["hmm-distill", "--hmm", str(hmm), "--data", str(data),
                         "--strategy", strat, "--out", str(tmp_path / strat)]) == 0
        assert (tmp_path / "viterbi" / "distilled.txt").read_bytes() == \
            (tmp_path / "beam:4" / "distilled.txt").read_bytes()

    def test_bad_strategy(self, tmp_path, hmm_files):
        hmm, data = hmm_files
        assert main(["hmm-distill", "--hmm", str(hmm), "--data", str(data),
                     "--strategy", "wat"]) == 2

    def test_compare_real_above_distilled(self, tmp_path):
        assert main(["hmm-gen", "--K", "5", "--V", "10", "--out", str(tmp_path / "g")]) == 0
        hmm = tmp_path / "g" / "hmm.json"
        main(["hmm-sample", "--hmm", str(hmm), "--n", "1000", "--out", str(tmp_path / "s")])
        data = tmp_path / "s" / "data.txt"
        main(["hmm-distill", "--hmm", str(hmm), "--data", str(data), "--out",
              str(tmp_path / "d")])
        out = tmp_path / "cmp"
        assert main(["compare", "--real", str(data), "--alt",
                     f"viterbi={tmp_path / 'd' / 'distilled.txt'}", "--identity",
                     "--out", str(out), "--format", "json,csv,svg"]) == 0
        rows = {r[0]: r for r in data_of(out / "report.json")["rows"]}
        assert rows["real"][1] > rows["viterbi"][1]
        assert (out / "report.csv").read_text().startswith("corpus,complexity")
        assert (out / "report.dat").is_file()

    def test_reborn_report(self, tmp_path, hmm_files):
        hmm, data = hmm_files
        out = tmp_path / "r"
        assert main(["hmm-reborn", "--hmm", str(hmm), "--data", str(data), "--iters", "2",
                     "--out", str(out), "--save-datasets"]) == 0
        assert len(data_of(out / "report.json")["rows"]) == 3
        assert (out / "reborn-2.txt").is_file()

    def test_langid(self, tmp_path):
        for lab, words in (("A", "a b c"), ("B", "x y z")):
            (tmp_path / f"{lab}.txt").write_text(f"{words} {words}\n" * 5)
        (tmp_path / "in.txt").write_text("a b c a\nx y z z\n")
        out = tmp_path / "l"
        assert main(["langid", "--lang", f"A={tmp_path / 'A.txt'}", "--lang",
                     f"B={tmp_path / 'B.txt'}", "--input", str(tmp_path / "in.txt"),
                     "--out", str(out)]) == 0
        assert load_report(out / "report.json")["kind"] == "simplex"

    @pytest.mark.parametrize("suffix", ["toml", "json"])
    def test_experiment_config(self, tmp_path, suffix):
        cfg = tmp_path / f"e.{suffix}"
        if suffix == "toml":
            cfg.write_text('experiment = "interpolation"\nseeds = 2\nn = 50\n')
        else:
            cfg.write_text(json.dumps({"experiment": "winrate", "seeds": 1, "n_train": 100,
                                       "n_valid": 30, "n_test": 50, "train": {"epochs": 2}}))
        out = tmp_path / "x"
        assert main(["hmm-experiment", "--config", str(cfg), "--out", str(out),
                     "--format", "json,csv"]) == 0
        assert (out / "report.csv").is_file()

    def test_experiment_bad_config(self, tmp_path):
        cfg = tmp_path / "e.json"
        cfg.write_text('{"experiment": "nope"}')
        assert main(["hmm-experiment", "--config", str(cfg)]) == 2


class TestReplay:
    def test_replay_identical_other_threads(self, tmp_path, hmm_files):
        hmm, data = hmm_files
        out = tmp_path / "run"
        assert main(["hmm-distill", "--hmm", str(hmm), "--data", str(data), "--strategy",
                     "sample", "--seed", "9", "--out", str(out)]) == 0
        assert main(["replay", str(out / "manifest.json"), "--threads", "3",
                     "--out", str(tmp_path / "again"), "--check"]) == 0
        assert (out / "distilled.txt").read_bytes() == \
            (tmp_path / "again" / "distilled.txt").read_bytes()

    def test_replay_detects_changed_input(self, tmp_path, toy):
        corpus, _ = toy
        out = tmp_path / "c"
        main(["complexity", "--corpus", str(corpus), "--identity", "--out", str(out)])
        corpus.write_text("a ||| x\n")
        assert main(["replay", str(out / "manifest.json")]) == 2
