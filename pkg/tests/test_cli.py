import io
import json
import subprocess
import sys

import pytest

from pargomea.cli import (
    EXIT_BAD_INPUT,
    EXIT_OK,
    EXIT_TARGET_UNREACHED,
    TRACE_FIELDS,
    format_trace_row,
    main,
    read_trace,
    resolve_run_settings,
)
from pargomea.maxcut import dump_edge_list, example_graph, load_edge_list


def cli(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def write_example(tmp_path):
    path = tmp_path / "example.txt"
    path.write_text(dump_edge_list(example_graph()))
    return path


def test_run_stop_on_optimum(tmp_path):
    trace = tmp_path / "t.csv"
    code, out = cli("--seed", "1", "run", "--generate", "torus:3x3", "--stop-on-optimum", "12",
                    "--max-seconds", "20", "--trace", str(trace), "--heartbeat", "0")
    assert code == EXIT_OK
    assert "best fitness: 12.0" in out
    records = read_trace(trace.open())
    assert records[-1].fitness == 12


def test_trace_deterministic_except_seconds(tmp_path):
    rows = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        code, _ = cli("--seed", "4", "run", "--generate", "random:40:120@uniform_int(-2,5)",
                      "--max-evaluations", "2000", "--trace", str(path), "--heartbeat", "0")
        assert code == EXIT_OK
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(TRACE_FIELDS)
        rows.append([line.split(",", 1)[1] for line in lines[1:]])
    assert rows[0] == rows[1] and len(rows[0]) > 1


def test_parallel_engine_and_monotone_trace(tmp_path):
    path = tmp_path / "p.csv"
    code, _ = cli("--seed", "2", "run", "--engine", "parallel", "--model", "bflt:5", "--generate", "torus:6x6",
                  "--max-generations", "30", "--workers", "2", "--trace", str(path))
    assert code == EXIT_OK
    recs = read_trace(path.open())
    assert [r.fitness for r in recs] == sorted(r.fitness for r in recs)
    assert [r.seconds for r in recs] == sorted(r.seconds for r in recs)


def test_target_unreached_exit_code():
    code, out = cli("run", "--generate", "torus:3x3", "--target-fitness", "13", "--max-seconds", "0.5")
    assert code == EXIT_TARGET_UNREACHED
    assert "target unreached" in out


def test_trace_round_trip():
    from pargomea.engine import TraceRecord

    rec = TraceRecord(0.1 + 0.2, 1 / 3, 7, 2, 123.456789012345)
    back = read_trace(io.StringIO(",".join(TRACE_FIELDS) + "\n" + format_trace_row(rec)))
    assert back == [rec]


def test_generate_files(tmp_path):
    out = tmp_path / "c6.txt"
    assert cli("generate", "complete", "--n", "6", "-o", str(out))[0] == EXIT_OK
    assert load_edge_list(out.read_text()).num_edges == 15
    code, text = cli("generate", "torus", "--width", "40", "--height", "40")
    assert code == EXIT_OK and text.splitlines()[0] == "1600 3200"
    _, a = cli("--seed", "3", "generate", "random", "--n", "20", "--edges", "40", "--weights", "uniform_int(-5,5)")
    _, b = cli("--seed", "3", "generate", "random", "--n", "20", "--edges", "40", "--weights", "uniform_int(-5,5)")
    assert a == b


def test_generate_unknown_kind():
    with pytest.raises(SystemExit) as err:
        cli("generate", "hypercube")
    assert err.value.code == EXIT_BAD_INPUT


def test_generate_bad_size():
    assert cli("generate", "torus", "--width", "2")[0] == EXIT_BAD_INPUT


def test_color_stats_example(tmp_path):
    fos = tmp_path / "fos.txt"
    fos.write_text("0\n1\n2\n3\n4\n0 2\n3 4\n0 1 2\n")
    code, out = cli("color-stats", "--instance", str(write_example(tmp_path)), "--fos", str(fos), "--groups")
    assert code == EXIT_OK
    assert "groups: 6" in out and "group sizes: 2 2 1 1 1 1" in out


def test_color_stats_structures():
    _, out = cli("color-stats", "--generate", "complete:12", "--model", "univariate")
    assert "groups: 12" in out
    _, out = cli("color-stats", "--generate", "torus:7x7", "--model", "univariate")
    k = int(out.split("groups: ")[1].split()[0])
    assert k <= 5


def test_color_stats_invalid_fos(tmp_path):
    fos = tmp_path / "bad.txt"
    fos.write_text("0\n1\n")
    assert cli("color-stats", "--instance", str(write_example(tmp_path)), "--fos", str(fos))[0] == EXIT_BAD_INPUT


def test_oracle(tmp_path):
    code, out = cli("oracle", "--instance", str(write_example(tmp_path)))
    assert code == EXIT_OK and "optimum: 4" in out
    assert "optimum: 32" in cli("oracle", "--generate", "torus:4x4")[1]
    assert cli("oracle", "--generate", "complete:30")[0] == EXIT_BAD_INPUT


def test_bad_inputs(tmp_path):
    assert cli("oracle", "--instance", str(tmp_path / "missing.txt"))[0] == EXIT_BAD_INPUT
    broken = tmp_path / "broken.txt"
    broken.write_text("3 2\n1 2 1\n1 2 1\n")
    assert cli("oracle", "--instance", str(broken))[0] == EXIT_BAD_INPUT
    assert cli("run", "--generate", "torus:3x3")[0] == EXIT_BAD_INPUT  # no termination
    assert cli("run", "--generate", "torus:3x3", "--instance", str(broken), "--max-seconds", "1")[0] == EXIT_BAD_INPUT
    assert cli("run", "--generate", "blob:3", "--max-seconds", "1")[0] == EXIT_BAD_INPUT
    assert cli("run", "--generate", "torus:3x3", "--model", "bflt:0", "--max-seconds", "1")[0] == EXIT_BAD_INPUT
    assert cli("run", "--generate", "torus:3x3", "--engine", "parallel", "--model", "learned-lt",
               "--max-seconds", "1")[0] == EXIT_BAD_INPUT
    assert cli("run", "--generate", "torus:3x3", "--workers", "0", "--max-seconds", "1")[0] == EXIT_BAD_INPUT


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"engine": "parallel", "seed": 3, "ims": {"n_base": 8, "c": 2}, "max-generations": 5}))
    s = resolve_run_settings({"seed": 9, "engine": None}, str(cfg))
    assert s["engine"] == "parallel" and s["seed"] == 9
    assert s["ims.n_base"] == 8 and s["ims.c"] == 2 and s["max_generations"] == 5
    assert s["workers"] == 1
    code, out = cli("run", "--config", str(cfg), "--generate", "torus:4x4")
    assert code == EXIT_OK and "stopped by: generations" in out


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"speed": 11}))
    assert cli("run", "--config", str(cfg), "--generate", "torus:3x3")[0] == EXIT_BAD_INPUT


def test_stop_on_optimum_auto():
    code, out = cli("--seed", "0", "run", "--generate", "random:10:20@uniform_int(-3,5)",
                    "--stop-on-optimum", "auto", "--max-evaluations", "100000")
    assert code == EXIT_OK and "stopped by: target" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "pargomea", "oracle", "--generate", "torus:4x4"],
                          capture_output=True, text=True, timeout=60)
    assert proc.returncode == 0 and "optimum: 32" in proc.stdout
