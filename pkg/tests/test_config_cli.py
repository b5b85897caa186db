import json

import pytest

from tweezerkit.cli import main
from tweezerkit.config import ConfigError, defaults, load_config


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_load():
    cfg = load_config()
    assert cfg == defaults()
    assert cfg["schema_version"] == 1
    assert cfg["trap"]["depth_mk"] == 0.18


def test_partial_override_keeps_other_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "[trap]\ndepth_mk = 1\n"))
    assert cfg["trap"]["depth_mk"] == 1.0 and isinstance(cfg["trap"]["depth_mk"], float)
    assert cfg["trap"]["waist_um"] == defaults()["trap"]["waist_um"]


@pytest.mark.parametrize(
    "text",
    [
        "[trap]\ndepthmk = 0.2\n",
        "[nonsense]\nx = 1\n",
        "[trap]\ndepth_mk = \"deep\"\n",
        "trap = 3\n",
        "[geometry]\nn_rows = 12.5\n",
        "schema_version = 2\n",
        "[trap\n",
    ],
)
def test_bad_configs_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text))


def test_budget_command(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["budget", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["passed"] and man["command"] == "budget"
    assert set(man["checks"]) == {"parallel", "sequential"}
    assert str(out / "budget.csv") in man["outputs"]
    assert (out / "budget.csv").read_text().startswith("operation,time_ms")
    assert "[PASS] parallel" in capsys.readouterr().out


def test_budget_single_mode(tmp_path):
    out = tmp_path / "out"
    assert main(["budget", "--mode", "sequential", "--out", str(out)]) == 0
    assert list(json.loads((out / "manifest.json").read_text())["checks"]) == ["sequential"]


def test_budget_mismatch_exits_one(tmp_path):
    cfg = write(tmp_path, "[budget]\nexpected_parallel_ms = 10.0\n")
    assert main(["budget", "--mode", "parallel", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


def test_bad_config_exits_two(tmp_path, capsys):
    cfg = write(tmp_path, "[trap]\nbogus = 1\n")
    assert main(["budget", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["budget", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]) == 2


def test_bad_mode_exits_two(tmp_path):
    assert main(["irb", "--mode", "sideways", "--out", str(tmp_path / "o")]) == 2


def test_plan_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["plan", "--seed", "5", "--out", str(a)]) == 0
    assert main(["plan", "--seed", "5", "--out", str(b)]) == 0
    for name in ("plan_NE.txt", "plan_NW.txt", "plan_SE.txt", "plan_SW.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    stats = [json.loads((d / "plan_stats.json").read_text())["quadrants"] for d in (a, b)]
    assert stats[0] == stats[1]
    assert (a / "plan_stats.png").stat().st_size > 0
    ma = json.loads((a / "manifest.json").read_text())
    assert ma["seed"] == 5 and ma["config_hash"] == json.loads((b / "manifest.json").read_text())["config_hash"]


def test_wgs_writes_feedback_figure(tmp_path):
    out = tmp_path / "w"
    assert main(["wgs", "--out", str(out)]) == 0
    assert (out / "loading_feedback.png").stat().st_size > 0
    assert (out / "hologram.bin").exists()


def test_image_sim_then_fit(tmp_path):
    sim, fit = tmp_path / "s", tmp_path / "f"
    assert main(["image-sim", "--seed", "2", "--out", str(sim)]) == 0
    rc = main(["image-fit", "--input", str(sim / "signals.csv"), "--bits", str(sim / "bitstrings.json"), "--out", str(fit)])
    assert rc == 0
    assert any(p.endswith(".png") for p in json.loads((fit / "manifest.json").read_text())["outputs"])


def test_transport_and_rb_figures(tmp_path):
    assert main(["transport", "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "survival.png").exists()
    assert main(["rb", "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "rb.png").exists()
