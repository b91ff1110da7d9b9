import csv
from fractions import Fraction

import pytest

from pnp_twogrid.cli import (
    CSV_FIELDS,
    ConfigError,
    ConvergenceRecord,
    compare_records,
    main,
    parse_config,
    read_csv,
    write_csv,
)


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_parse_config_two_grid(tmp_path):
    cfg = parse_config(
        """
        # nested pairs
        method = tg3
        resolutions = 2:4, 4:16   # pairs
        stop_tolerance = 1e-6
        output = out.csv
        emit_probes = yes
        """,
        base=tmp_path,
    )
    assert cfg.method == "tg3"
    assert cfg.resolutions == [(2, 4), (4, 16)]
    assert cfg.stop_tolerance == 1e-6
    assert cfg.rel_tolerance == 1e-10
    assert cfg.output == tmp_path / "out.csv"
    assert cfg.emit_probes and not cfg.parallel


def test_parse_config_fem_ignores_coarse():
    cfg = parse_config("method = fem\nresolutions = 4, 2:16\n")
    assert cfg.resolutions == [(None, 4), (None, 16)]


@pytest.mark.parametrize(
    "text",
    [
        "method = tg3\nresolutions = \n",
        "method = tg3\nresolutions = 3:4\n",
        "method = tg3\nresolutions = 4\n",
        "method = bogus\nresolutions = 4\n",
        "method = fem\n",
        "method = fem\nresolutions = 4\ncolour = red\n",
        "method fem\n",
        "method = fem\nresolutions = x\n",
        "method = fem\nresolutions = 4\nstop_tolerance = -1\n",
    ],
)
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def _record(**kw):
    base = dict(
        method="fem", H=None, h=Fraction(1, 4), l2_p1=0.241, l2_p2=0.326,
        h1_phi=0.914, h1_p1=3.03, h1_p2=5.39, wall_seconds=1.5, outer_iters=3,
    )
    base.update(kw)
    return ConvergenceRecord(**base)


def test_csv_round_trip(tmp_path):
    recs = [
        _record(h1_phi=0.91612345678),
        _record(h=Fraction(1, 16), h1_phi=0.2428765, order_h1_phi=0.9551234),
    ]
    path = tmp_path / "r.csv"
    write_csv(recs, path)
    with open(path) as fh:
        assert next(csv.reader(fh)) == CSV_FIELDS
    parsed = read_csv(path)
    assert parsed[0].h == Fraction(1, 4) and parsed[0].H is None
    assert parsed[0].order_h1_phi is None
    assert parsed[0].h1_phi == 9.16123e-01
    # writing parsed values is stable
    path2 = tmp_path / "r2.csv"
    write_csv(parsed, path2)
    assert read_csv(path2) == parsed
    assert path.read_text() == path2.read_text()


def test_run_fem_writes_csv(tmp_path, capsys):
    cfg = _write(tmp_path, "fem.cfg", "method = fem\nresolutions = 4, 16\noutput = fem.csv\n")
    assert main(["run", str(cfg)]) == 0
    recs = read_csv(tmp_path / "fem.csv")
    assert len(recs) == 2
    assert recs[0].h1_phi == pytest.approx(9.14e-01, rel=0.1)
    assert recs[1].h1_phi == pytest.approx(2.43e-01, rel=0.1)
    assert recs[0].order_h1_phi is None and recs[1].order_h1_phi is not None
    out = capsys.readouterr().out
    assert "| h " in out and "1/16" in out


def test_run_tg3_matches_table(tmp_path):
    cfg = _write(tmp_path, "tg3.cfg", "method = tg3\nresolutions = 2:4, 4:16\n")
    out = tmp_path / "tg3.csv"
    assert main(["run", str(cfg), "--out", str(out), "--probes"]) == 0
    recs = read_csv(out)
    reference = [(9.15e-01, 3.03e00, 5.40e00), (2.44e-01, 9.79e-01, 2.12e00)]
    for rec, row in zip(recs, reference):
        for got, want in zip((rec.h1_phi, rec.h1_p1, rec.h1_p2), row):
            assert got == pytest.approx(want, rel=0.1)


def test_run_is_deterministic(tmp_path):
    cfg = _write(tmp_path, "c.cfg", "method = tg4\nresolutions = 2:4, 2:8\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", str(cfg), "--out", str(a)]) == 0
    assert main(["run", str(cfg), "--out", str(b)]) == 0
    for ra, rb in zip(read_csv(a), read_csv(b)):
        assert (ra.l2_p1, ra.l2_p2, ra.h1_phi, ra.h1_p1, ra.h1_p2) == (
            rb.l2_p1, rb.l2_p2, rb.h1_phi, rb.h1_p1, rb.h1_p2,
        )


def test_empty_resolutions_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, "e.cfg", "method = fem\nresolutions =\noutput = e.csv\n")
    assert main(["run", str(cfg)]) == 2
    assert not (tmp_path / "e.csv").exists()
    assert "empty" in capsys.readouterr().err


def test_non_nested_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, "n.cfg", "method = tg1\nresolutions = 3:4\noutput = n.csv\n")
    assert main(["run", str(cfg)]) == 2
    assert "not nested" in capsys.readouterr().err


def test_heavy_requires_flag(tmp_path, capsys):
    cfg = _write(tmp_path, "h.cfg", "method = tg3\nresolutions = 8:64\noutput = h.csv\n")
    assert main(["run", str(cfg)]) == 2
    assert "--heavy" in capsys.readouterr().err


def test_missing_output_and_config(tmp_path):
    cfg = _write(tmp_path, "m.cfg", "method = fem\nresolutions = 4\n")
    assert main(["run", str(cfg)]) == 2
    assert main(["run", str(tmp_path / "nope.cfg"), "--out", "x.csv"]) == 2


def test_solver_failure_exit_1(tmp_path, capsys):
    cfg = _write(
        tmp_path, "s.cfg", "method = fem\nresolutions = 4\nrel_tolerance = 1e-300\noutput = s.csv\n"
    )
    assert main(["run", str(cfg)]) == 1
    assert "solver failure" in capsys.readouterr().err


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_compare_identical_files(tmp_path, capsys):
    path = tmp_path / "a.csv"
    write_csv([_record(), _record(h=Fraction(1, 16), h1_phi=0.243)], path)
    assert main(["compare", str(path), str(path)]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.startswith("| fem")]
    assert len(lines) == 4
    for line in lines:
        cells = [c.strip() for c in line.strip("|").split("|")]
        assert cells[6:9] == ["1.000", "1.000", "1.000"]


def test_compare_ratios_and_flags():
    fem = [_record(h=Fraction(1, 64), h1_phi=6.09e-02, h1_p1=2.44e-01, h1_p2=5.47e-01, wall_seconds=10)]
    tg4 = [
        _record(method="tg4", H=Fraction(1, 8), h=Fraction(1, 64), h1_phi=6.22e-02,
                h1_p1=2.91e-01, h1_p2=5.80e-01, wall_seconds=2),
        _record(method="tg4", H=Fraction(1, 8), h=Fraction(1, 32), h1_phi=1.0, h1_p1=1.0, h1_p2=1.0),
    ]
    table, warnings = compare_records([("tg4.csv", tg4), ("fem.csv", fem)])
    row = next(l for l in table.splitlines() if l.startswith("| tg4") and "1/64" in l)
    cells = [c.strip() for c in row.strip("|").split("|")]
    assert float(cells[7]) == pytest.approx(2.91 / 2.44, abs=1e-3)
    assert float(cells[8]) == pytest.approx(5.80 / 5.47, abs=1e-3)
    assert cells[10] == ""  # within 25%
    assert any("no reference row" in w for w in warnings)

    worse = [_record(method="tg3", H=Fraction(1, 8), h=Fraction(1, 64), h1_phi=0.1, h1_p1=0.244, h1_p2=0.547)]
    table, warnings = compare_records([("fem.csv", fem), ("tg3.csv", worse)])
    assert "EXCEEDS" in table
    assert any("25%" in w for w in warnings)


def test_compare_needs_two_files(tmp_path):
    path = tmp_path / "a.csv"
    write_csv([_record()], path)
    assert main(["compare", str(path)]) == 2


def test_compare_rejects_bad_header(tmp_path):
    bad = _write(tmp_path, "bad.csv", "x,y\n1,2\n")
    good = tmp_path / "g.csv"
    write_csv([_record()], good)
    assert main(["compare", str(good), str(bad)]) == 2


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "pnp_twogrid", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "compare" in proc.stdout
