import json
from functools import partial

import pytest

from irgn_banach.artifacts import sweep_from_csv
from irgn_banach.cli import BASE_CONFIG, build_parser, main, resolve_config, validate_config

FAST = ["--penalty", "l2", "--delta", "1e-3"]


def test_run_writes_artifacts_and_replays(tmp_path, capsys):
    out = tmp_path / "a"
    assert main(["run", *FAST, "--out", str(out)]) == 0
    for name in ("history.csv", "reconstruction.csv", "meta.json", "plot.svg"):
        assert (out / name).exists()
    meta = json.loads((out / "meta.json").read_text())
    assert meta["stop_reason"] == "rule-satisfied"
    assert meta["seed"] == 1 and meta["config"]["penalty"]["kind"] == "l2"
    replay = tmp_path / "b"
    assert main(["run", "--config", str(out / "meta.json"), "--out", str(replay)]) == 0
    assert (replay / "history.csv").read_bytes() == (out / "history.csv").read_bytes()
    assert "rule-satisfied" in capsys.readouterr().out


def test_precedence_flags_over_file_over_preset(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"noise": {"delta": 1e-2, "seed": 5}, "stopping": {"tau": 1.5}}))
    args = build_parser().parse_args(["run", "--config", str(cfg), "--seed", "9"])
    from irgn_banach.cli import load_config_file
    config = resolve_config(args, load_config_file(cfg))
    assert config["noise"] == {"delta": 1e-2, "seed": 9}
    assert config["stopping"]["tau"] == 1.5
    assert config["penalty"]["kind"] == "tv"
    diff = resolve_config(build_parser().parse_args(["run", "--preset", "diffusion1d-paper"]))
    assert diff["penalty"]["kind"] == "sobolev"


def test_invalid_config_lists_every_violation(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"stopping": {"tau": 1.0, "rule": 7}, "noise": {"delta": -1}}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "stopping.tau" in err and "stopping.rule" in err and "noise.delta" in err
    assert not (tmp_path / "o").exists()


def test_validate_config_accepts_base():
    assert validate_config(resolve_config()) == []
    assert resolve_config() == {**BASE_CONFIG}


def test_unreadable_config_and_usage_errors(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nonsense"])
    assert exc.value.code == 1


def test_max_outer_exit_code(tmp_path):
    code = main(["run", "--penalty", "l2", "--delta", "0", "--max-outer", "3",
                 "--out", str(tmp_path)])
    assert code == 2


def test_sweep_writes_table(tmp_path):
    code = main(["sweep", *FAST, "--deltas", "1e-2,1e-3", "--seeds", "2", "--out", str(tmp_path)])
    assert code == 0
    rows = sweep_from_csv(tmp_path / "sweep.csv")
    assert [(r["delta"], r["seed"]) for r in rows] == [(1e-2, 1), (1e-2, 2), (1e-3, 1), (1e-3, 2)]
    assert (tmp_path / "delta_0.01_seed_2" / "meta.json").exists()
    assert main(["sweep", *FAST, "--deltas", "1e-3,1e-2", "--out", str(tmp_path)]) == 1


def test_verify_penalties(capsys):
    assert main(["verify", "penalties"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_verify_rates_writes_csv(tmp_path, monkeypatch):
    from irgn_banach import verify
    monkeypatch.setattr(verify, "RateTestSpec", partial(verify.RateTestSpec, deltas=(1e-2, 1e-3)))
    main(["verify", "rates", "--seeds", "1", "--out", str(tmp_path)])
    lines = (tmp_path / "rates.csv").read_text().splitlines()
    assert lines[0] == "delta,seed,n_delta,error" and len(lines) == 3
