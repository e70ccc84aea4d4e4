"""Monte Carlo harness: pairing, determinism, aggregation, CLI plumbing."""

import math

import numpy as np
import pytest

from cachebeam import CellModel, SystemConfig
from cachebeam.cli import main
from cachebeam.experiment import (CSV_HEADER, ExperimentSpec, SchemeSpec,
                                  decode_demo, parse_scheme, run_experiment,
                                  run_trial)


def tiny_spec(schemes, sweep_values=(1.0,), trials=2, sweep_parameter="rate",
              rate=1.0):
    cell = CellModel()
    cfg = SystemConfig(num_files=3, num_users=3, cache_size=1, num_antennas=2,
                       rate=rate, noise_power_w=cell.noise_power_w)
    return ExperimentSpec(config=cfg, cell=cell, schemes=schemes,
                          sweep_parameter=sweep_parameter,
                          sweep_values=sweep_values, trials=trials,
                          master_seed=3)


# ---------------------------------------------------------------- run_trial

def test_run_trial_deterministic():
    spec = tiny_spec((SchemeSpec("full_superposition"),))
    first = run_trial(spec, 0)
    second = run_trial(spec, 0)
    assert first == second  # bit-identical powers, statuses, digest
    assert run_trial(spec, 1).channel_digest != first.channel_digest


def test_pairing_shares_channels_across_schemes():
    # paired comparison: a scheme-only change must not move the channel draw
    spec_a = tiny_spec((SchemeSpec("full_superposition"),))
    spec_b = tiny_spec((SchemeSpec("greedy", decode_limit=1),))
    for index in (0, 5):
        assert (run_trial(spec_a, index).channel_digest
                == run_trial(spec_b, index).channel_digest)


def test_run_trial_rejects_fractional_decode_sweep():
    spec = tiny_spec((SchemeSpec("greedy"),), sweep_values=(1.5,),
                     sweep_parameter="decode_limit")
    with pytest.raises(ValueError, match="integer"):
        run_trial(spec, 0)


# ----------------------------------------------------------- run_experiment

def test_tiny_experiment_rows_and_aggregation():
    spec = tiny_spec((SchemeSpec("full_superposition"),
                      SchemeSpec("greedy", decode_limit=1)),
                     sweep_values=(1.0, 2.0))
    result = run_experiment(spec)
    assert len(result.records) == spec.trials
    assert len(result.rows) == 4  # 2 sweep values x 2 schemes
    labels = {row.scheme for row in result.rows}
    assert labels == {"fs", "greedy_s1"}
    for row in result.rows:
        assert row.trials_used + row.trials_failed == spec.trials
        # recompute the mean from the per-trial records: watts first, then dBW
        powers = [out.power_w
                  for rec in result.records for out in rec.outcomes
                  if out.sweep_value == row.sweep_value
                  and out.scheme == row.scheme and out.converged]
        assert len(powers) == row.trials_used
        if powers:
            assert row.mean_power_dbw == pytest.approx(
                10.0 * math.log10(np.mean(powers)), rel=1e-12)
    # higher rate cannot need less power on the same channels
    by = {(row.sweep_value, row.scheme): row for row in result.rows}
    assert by[(2.0, "fs")].mean_power_dbw >= by[(1.0, "fs")].mean_power_dbw


def test_csv_header_literal():
    assert CSV_HEADER == "sweep_value,scheme,mean_power_dbw,trials_used,trials_failed"


def test_csv_bytes_deterministic_across_runs():
    spec = tiny_spec((SchemeSpec("full_superposition"),))
    text_a = run_experiment(spec).to_csv()
    text_b = run_experiment(spec).to_csv()
    assert text_a == text_b
    lines = text_a.splitlines()
    assert lines[0].startswith("# cachebeam experiment")
    assert CSV_HEADER in lines
    body = lines[lines.index(CSV_HEADER) + 1:]
    assert len(body) == 1
    value, scheme, dbw, used, failed = body[0].split(",")
    assert (value, scheme) == ("1", "fs")
    assert used == "2" and failed == "0"
    float(dbw)  # parses


def test_workers_match_sequential():
    spec = tiny_spec((SchemeSpec("full_superposition"),))
    sequential = run_experiment(spec)
    parallel = run_experiment(spec, workers=2)
    assert parallel.records == sequential.records
    assert parallel.rows == sequential.rows


# -------------------------------------------------------------- scheme spec

def test_parse_scheme_forms():
    assert parse_scheme("fs") == SchemeSpec("full_superposition")
    assert parse_scheme("greedy:2") == SchemeSpec("greedy", decode_limit=2)
    assert parse_scheme("greedy") == SchemeSpec("greedy")  # limit from sweep
    assert parse_scheme("grouped:3") == SchemeSpec("grouped", group_size=3)
    assert parse_scheme(" fs ") == SchemeSpec("full_superposition")


@pytest.mark.parametrize("text", ["grouped", "coded", "greedy:x", ""])
def test_parse_scheme_rejects(text):
    with pytest.raises(ValueError):
        parse_scheme(text)


def test_scheme_labels():
    assert SchemeSpec("full_superposition").label == "fs"
    assert SchemeSpec("greedy", decode_limit=2).label == "greedy_s2"
    assert SchemeSpec("greedy").label == "greedy"
    assert SchemeSpec("grouped", group_size=3).label == "grouped_g3"


def test_scheme_build(example_config):
    fs = SchemeSpec("full_superposition").build(example_config, "proportional")
    assert fs.num_slots == 1
    greedy = SchemeSpec("greedy", decode_limit=2).build(example_config, "proportional")
    assert greedy.num_slots == 2
    # bare greedy needs the sweep to supply the limit
    bare = SchemeSpec("greedy")
    assert bare.build(example_config, "proportional", decode_limit=2).num_slots == 2
    with pytest.raises(ValueError, match="decode limit"):
        bare.build(example_config, "proportional")
    with pytest.raises(ValueError, match="kind"):
        SchemeSpec("superposition")
    with pytest.raises(ValueError, match="group_size"):
        SchemeSpec("grouped")


def test_experiment_spec_validation():
    with pytest.raises(ValueError, match="sweep_parameter"):
        tiny_spec((SchemeSpec("full_superposition"),), sweep_parameter="power")
    with pytest.raises(ValueError, match="trials"):
        tiny_spec((SchemeSpec("full_superposition"),), trials=0)
    with pytest.raises(ValueError, match="scheme"):
        tiny_spec(())
    # empty sweep defaults to the config's own value for the swept parameter
    spec = tiny_spec((SchemeSpec("full_superposition"),), sweep_values=(),
                     rate=2.0)
    assert spec.sweep_values == (2.0,)
    spec = tiny_spec((SchemeSpec("greedy"),), sweep_values=(),
                     sweep_parameter="decode_limit")
    assert spec.sweep_values == (1.0,)
    assert tiny_spec((SchemeSpec("full_superposition"),),
                     sweep_values=(1, 2)).sweep_values == (1.0, 2.0)


# -------------------------------------------------------------- decode demo

def test_decode_demo_distinct_demands():
    cfg = SystemConfig(num_files=5, num_users=5, cache_size=1)
    report = decode_demo(cfg, demands=(1, 2, 3, 4, 5))
    assert report.all_ok
    assert report.per_user_ok == (True,) * 5
    assert report.caching_factor == 1
    assert report.num_messages == 10
    assert report.segment_bytes == 240  # 1200 bytes over C(5,1) subfiles


def test_decode_demo_round_robin_default():
    cfg = SystemConfig(num_files=3, num_users=6, cache_size=1)
    report = decode_demo(cfg)
    assert report.demands == (1, 2, 3, 1, 2, 3)
    assert report.all_ok


def test_decode_demo_repeated_demands():
    cfg = SystemConfig(num_files=5, num_users=5, cache_size=1)
    assert decode_demo(cfg, demands=(2, 2, 2, 2, 2)).all_ok


def test_decode_demo_higher_caching_factor():
    cfg = SystemConfig(num_files=6, num_users=6, cache_size=2)
    report = decode_demo(cfg, file_bytes=1000, seed=9)
    assert report.caching_factor == 2
    assert report.all_ok


def test_decode_demo_format():
    cfg = SystemConfig(num_files=3, num_users=3, cache_size=1)
    text = decode_demo(cfg).format()
    assert "users=3 files=3 t=1" in text
    assert "user 1: recovered demanded file" in text
    assert text.endswith("all users decoded correctly")


# ---------------------------------------------------------------------- CLI

def test_cli_schedule_validate(capsys):
    code = main(["schedule", "--files", "5", "--users", "5", "--cache", "1",
                 "--scheme", "greedy:2", "--validate"])
    out = capsys.readouterr().out
    assert code == 0
    assert "valid: slots=2" in out


def test_cli_schedule_bad_config(capsys):
    # t = M*K/N = 2*5/4 is fractional, so the config is rejected
    code = main(["schedule", "--files", "4", "--users", "5", "--cache", "2"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_cli_solve(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    chan = tmp_path / "chan.txt"
    code = main(["solve", "--files", "2", "--users", "2", "--cache", "1",
                 "--antennas", "2", "--trace", str(trace),
                 "--dump-channel", str(chan)])
    out = capsys.readouterr().out
    assert code == 0
    assert "status=converged" in out
    assert trace.read_text().startswith("iteration,")
    assert chan.exists()


def test_cli_experiment_stdout(capsys):
    code = main(["experiment", "--files", "3", "--users", "3", "--cache", "1",
                 "--antennas", "2", "--trials", "1", "--schemes", "fs"])
    out = capsys.readouterr().out
    assert code == 0
    assert CSV_HEADER in out
    assert ",fs," in out


def test_cli_experiment_config_file(tmp_path, capsys):
    cfgfile = tmp_path / "exp.cfg"
    cfgfile.write_text(
        "# tiny smoke experiment\n"
        "files = 3\n"
        "users = 3\n"
        "cache = 1\n"
        "antennas = 2\n"
        "schemes = greedy:1\n"
        "trials = 2\n"
    )
    out_csv = tmp_path / "out.csv"
    # the --trials flag overrides the file value; schemes come from the file
    code = main(["experiment", "--config", str(cfgfile),
                 "--trials", "1", "--out", str(out_csv)])
    assert code == 0
    assert f"wrote {out_csv}" in capsys.readouterr().out
    text = out_csv.read_text()
    assert "# schemes: greedy_s1" in text
    assert "# trials=1 " in text
    assert text.rstrip().splitlines()[-1].split(",")[1] == "greedy_s1"


def test_cli_experiment_unknown_config_key(tmp_path, capsys):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("files = 3\nusers = 3\ncache = 1\npower = 9\n")
    assert main(["experiment", "--config", str(cfgfile)]) == 1
    assert "unknown config key" in capsys.readouterr().err


def test_cli_experiment_missing_required(capsys):
    assert main(["experiment", "--files", "3"]) == 1
    assert "missing required settings" in capsys.readouterr().err


def test_cli_decode_demo(capsys):
    code = main(["decode-demo", "--files", "5", "--users", "5", "--cache", "1",
                 "--demands", "5,4,3,2,1"])
    out = capsys.readouterr().out
    assert code == 0
    assert "all users decoded correctly" in out


def test_cli_decode_demo_bad_demand(capsys):
    code = main(["decode-demo", "--files", "5", "--users", "5", "--cache", "1",
                 "--demands", "9,1,1,1,1"])
    assert code == 1
    assert "error:" in capsys.readouterr().err
