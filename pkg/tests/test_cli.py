import json
import subprocess
import sys
from pathlib import Path

import pytest

from voxeval.cli import main

ROOT = Path(__file__).resolve().parent.parent


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "c"
    assert main(["synth", "gen", "-o", str(d), "--n-speakers", "8", "--utts-per-speaker", "6",
                 "--dim", "8", "--frames-per-utt", "10", "--noise-sigma", "0",
                 "--diar-sessions", "3", "--seed", "2"]) == 0
    return d


def test_synth_gen_is_byte_identical(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "synth", "gen", "-o", tmp_path / name, "--n-speakers", "4",
                   "--utts-per-speaker", "3", "--diar-sessions", "2", "--seed", "7")[0] == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 7
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_probe_train_and_eval(corpus, tmp_path, capsys):
    c = corpus
    code, _, _ = run(capsys, "probe", "train", "--archive", c / "archive.audv", "--manifest",
                     c / "manifest.jsonl", "-o", tmp_path / "head", "--task", "gender", "--epochs", "200")
    assert code == 0
    code, out, _ = run(capsys, "probe", "eval", "--archive", c / "archive.audv", "--manifest",
                       c / "manifest.jsonl", "--head", tmp_path / "head")
    assert code == 0 and out.strip() == "accuracy 100.0"


def test_pool_writes_tensor(corpus, tmp_path, capsys):
    code, out, _ = run(capsys, "pool", "--archive", corpus / "archive.audv", "-o", tmp_path / "p")
    assert code == 0 and json.loads(out) == {"dim": 8, "utterances": 48}


@pytest.mark.parametrize("threads", ["1", "4"])
def test_sv_threads_agree(corpus, tmp_path, capsys, threads):
    out = tmp_path / f"s{threads}.txt"
    assert run(capsys, "sv", "score", "--archive", corpus / "archive.audv", "--trials",
               corpus / "trials.txt", "-o", out, "--threads", threads)[0] == 0
    single = tmp_path / "single.txt"
    run(capsys, "sv", "score", "--archive", corpus / "archive.audv", "--trials",
        corpus / "trials.txt", "-o", single)
    assert out.read_bytes() == single.read_bytes()
    code, text, _ = run(capsys, "sv", "eer", "--scores", out)
    assert code == 0 and text.startswith("EER ")


def test_diarize_threads_agree_and_score(corpus, tmp_path, capsys):
    paths = []
    for threads in ("1", "4"):
        p = tmp_path / f"hyp{threads}.rttm"
        assert run(capsys, "diarize", "run", "--archive", corpus / "diar_sessions.audv",
                   "-o", p, "--threads", threads)[0] == 0
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    code, out, _ = run(capsys, "diarize", "score", "--ref", corpus / "diar_ref.rttm",
                       "--hyp", paths[0], "--report", tmp_path / "r.json")
    assert code == 0
    res = json.loads((tmp_path / "r.json").read_text())["results"]
    assert 0.0 <= res["der"] <= 100.0
    assert res["der"] == pytest.approx(res["miss"] + res["fa"] + res["confusion"])
    code, out, _ = run(capsys, "diarize", "score", "--ref", corpus / "diar_ref.rttm",
                       "--hyp", corpus / "diar_ref.rttm")
    assert out.strip() == "DER 0.00"
    code, out, _ = run(capsys, "diarize", "count", "--ref", corpus / "diar_ref.rttm",
                       "--hyp", corpus / "diar_ref.rttm")
    assert out.strip() == "MAE 0.000"


def test_clap_retrieval_zsc(corpus, tmp_path, capsys):
    c = corpus
    code, out, _ = run(capsys, "clap", "train", "--archive", c / "archive.audv", "--captions",
                       c / "captions.jsonl", "-o", tmp_path / "clap", "--epochs", "5")
    assert code == 0 and json.loads(out)["pairs"] == 48
    code, out, _ = run(capsys, "retrieval", "eval", "--archive", c / "archive.audv", "--captions",
                       c / "captions.jsonl", "--model", tmp_path / "clap", "--subset-size", "16",
                       "--n-subsets", "2")
    res = json.loads(out)
    assert code == 0 and set(res) == {"speech_to_text", "text_to_speech"}
    assert set(res["speech_to_text"]) == {"1", "5", "10"}
    code, out, _ = run(capsys, "zsc", "eval", "--archive", c / "archive.audv", "--manifest",
                       c / "manifest.jsonl", "--model", tmp_path / "clap", "--task", "age")
    assert code == 0 and out.startswith("accuracy ")


def test_multitask_encoder_and_adaptor(corpus, tmp_path, capsys):
    c = corpus
    code, out, _ = run(capsys, "multitask", "train", "--archive", c / "archive.audv", "--manifest",
                       c / "manifest.jsonl", "-o", tmp_path / "mt", "--epochs", "2", "--hidden", "8",
                       "--trace", tmp_path / "tr.csv", "--weights", "sid=1,emotion=0.5")
    assert code == 0 and json.loads(out)["steps"] == 4
    assert (tmp_path / "tr.csv").exists()
    code, out, _ = run(capsys, "pool", "--archive", c / "archive.audv", "-o", tmp_path / "p",
                       "--encoder", tmp_path / "mt")
    assert code == 0
    code, out, _ = run(capsys, "adaptor", "run", "--archive", c / "archive.audv",
                       "-o", tmp_path / "ad.audv", "--save-adaptor", tmp_path / "adp")
    assert code == 0 and json.loads(out)["frame_rate_hz"] == 6.25
    code, _, _ = run(capsys, "adaptor", "run", "--archive", c / "archive.audv",
                     "-o", tmp_path / "ad2.audv", "--adaptor", tmp_path / "adp")
    assert (tmp_path / "ad.audv").read_bytes() == (tmp_path / "ad2.audv").read_bytes()


def test_config_file_and_override(corpus, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# probe settings\narchive = {corpus / 'archive.audv'}\n"
                   f"manifest={corpus / 'manifest.jsonl'}\ntask=age\nepochs=3\n")
    code, _, _ = run(capsys, "probe", "train", "--config", cfg, "-o", tmp_path / "h",
                     "--epochs", "4", "--report", tmp_path / "r.json")
    assert code == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["command"] == "probe train"
    assert doc["options"]["task"] == "age" and doc["options"]["epochs"] == 4


@pytest.mark.parametrize("argv", [
    ["probe", "train", "--archive", "x"],
    ["sv", "eer"],
    ["sv", "eer", "--scores", "s", "--bogus"],
    ["nosuch"],
    ["sv", "eer", "--scores", "s", "--threads", "0"],
    ["zsc", "eval", "--task", "sid"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert run(capsys, *argv)[0] == 2


@pytest.mark.parametrize("text", ["tsk=age\n", "epochs=many\n", "task=colour\n", "no equals\n"])
def test_bad_config_exits_2(text, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert run(capsys, "probe", "train", "--config", cfg, "--archive", "a", "--manifest", "m",
               "-o", "o")[0] == 2


def test_runtime_errors_exit_1(tmp_path, capsys):
    code, _, err = run(capsys, "sv", "eer", "--scores", tmp_path / "missing.txt")
    assert code == 1 and err.startswith("voxeval: error:")
    bad = tmp_path / "bad.audv"
    bad.write_bytes(b"not an archive")
    assert run(capsys, "pool", "--archive", bad, "-o", tmp_path / "p")[0] == 1


def test_help_lists_defaults(capsys):
    code = main(["probe", "train", "--help"])
    text = capsys.readouterr().out
    assert code == 0
    assert "(default: 50)" in text and "(default: 0.01)" in text and "(required)" in text


def test_report_commands(tmp_path, capsys):
    code, out, _ = run(capsys, "report", "lp-avg", "--table", ROOT / "fixtures" / "table2_lp.csv")
    rows = dict(line.split("\t") for line in out.strip().splitlines())
    assert code == 0 and rows["1.0"] == "85.9" and rows["emotion2vec"] == "--"
    code, out, _ = run(capsys, "report", "zs-avg", "--table", ROOT / "fixtures" / "table2.csv")
    printed = json.loads((ROOT / "fixtures" / "printed_averages.json").read_text())["zs_avg"]
    for line in out.strip().splitlines():
        s, v = line.split("\t")
        assert abs(float(v) - printed[s]) <= 0.5
    code, _, _ = run(capsys, "report", "render", "--table", ROOT / "fixtures" / "table2.csv",
                     "--table", ROOT / "fixtures" / "table3_lp.csv", "-o", tmp_path / "rep")
    assert code == 0
    md = (tmp_path / "rep" / "report.md").read_text()
    assert "## table2" in md and "## table3_lp" in md


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "voxeval", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synth" in proc.stdout
