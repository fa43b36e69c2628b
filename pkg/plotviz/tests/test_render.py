"""Rendering, schema validation, and idempotence."""

import os

import numpy as np
import pytest

from plotviz.cli import main
from plotviz.readers import SchemaError, column_argmax, read_rows
from plotviz.render import PlotJob, render


def fmt(v):
    return f"{v:.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(",".join(fmt(v) for v in row) + "\n")


@pytest.fixture
def synthetic_dir(tmp_path):
    """Schema-true CSVs resembling a desk-scale run."""
    times = np.arange(0.0, 2.0001, 0.1)
    xs = np.arange(-6, 7)
    write_csv(tmp_path / "sz_profile.csv", "t,x,sz",
              [(t, x, np.exp(-(x - t) ** 2)) for t in times for x in xs])
    write_csv(tmp_path / "greens.csv", "t,x,re_g,im_g",
              [(t, x, np.cos(t + x), np.sin(t - x)) for t in times for x in xs])
    qs = np.linspace(0, np.pi, 31)
    omegas = np.linspace(0, 3, 61)
    ridge = 0.41 + 2.2 * np.abs(np.sin(qs))
    s = np.exp(-((omegas[None, :] - ridge[:, None]) / 0.15) ** 2)
    write_csv(tmp_path / "spectral.csv", "q,omega,s",
              [(q, w, s[iq, iw]) for iq, q in enumerate(qs)
               for iw, w in enumerate(omegas)])
    peaks = column_argmax(qs, omegas, s)
    write_csv(tmp_path / "dispersion.csv", "q,omega_peak", peaks)
    return tmp_path


KINDS = [("profile", "sz_profile.csv"), ("heatmap", "greens.csv"),
         ("spectrum", "spectral.csv"), ("dispersion", "dispersion.csv")]


class TestRender:
    @pytest.mark.parametrize("kind,name", KINDS)
    def test_renders_png(self, synthetic_dir, kind, name):
        out = synthetic_dir / f"{kind}.png"
        render(PlotJob(kind=kind, input_path=str(synthetic_dir / name),
                       output_path=str(out)))
        assert out.exists() and out.stat().st_size > 1000
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    @pytest.mark.parametrize("kind,name", KINDS)
    def test_idempotent_at_pixel_level(self, synthetic_dir, kind, name):
        a = synthetic_dir / "a.png"
        b = synthetic_dir / "b.png"
        for out in (a, b):
            render(PlotJob(kind=kind, input_path=str(synthetic_dir / name),
                           output_path=str(out)))
        assert a.read_bytes() == b.read_bytes()

    def test_input_not_mutated(self, synthetic_dir):
        src = synthetic_dir / "spectral.csv"
        before = src.read_bytes()
        render(PlotJob(kind="spectrum", input_path=str(src),
                       output_path=str(synthetic_dir / "s.png")))
        assert src.read_bytes() == before

    def test_empty_csv_is_an_error(self, synthetic_dir):
        path = synthetic_dir / "empty.csv"
        path.write_text("q,omega,s\n")
        with pytest.raises(SchemaError, match="no data rows"):
            render(PlotJob(kind="spectrum", input_path=str(path),
                           output_path=str(synthetic_dir / "never.png")))
        assert not (synthetic_dir / "never.png").exists()

    def test_wrong_header_names_offender(self, synthetic_dir):
        path = synthetic_dir / "bad.csv"
        path.write_text("q,w,s\n0,0,1\n")
        with pytest.raises(SchemaError, match="q,w,s"):
            render(PlotJob(kind="spectrum", input_path=str(path),
                           output_path=str(synthetic_dir / "never.png")))

    def test_unknown_kind_rejected(self, synthetic_dir):
        with pytest.raises(ValueError, match="kind"):
            PlotJob(kind="pie", input_path="x", output_path="y")

    def test_flat_profile(self, synthetic_dir):
        path = synthetic_dir / "flat.csv"
        write_csv(path, "t,x,sz", [(0.0, x, 0.0) for x in range(-3, 4)])
        out = synthetic_dir / "flat.png"
        render(PlotJob(kind="profile", input_path=str(path), output_path=str(out)))
        assert out.exists()


class TestColumnArgmax:
    def test_matches_dispersion_file(self, synthetic_dir):
        rows = read_rows(str(synthetic_dir / "spectral.csv"), "q,omega,s")
        from plotviz.readers import pivot
        qs, omegas, (s,) = pivot(rows)
        got = column_argmax(qs, omegas, s)
        want = read_rows(str(synthetic_dir / "dispersion.csv"), "q,omega_peak")
        np.testing.assert_array_equal(got, want)

    def test_ties_take_smaller_omega(self):
        qs = np.array([0.0])
        omegas = np.array([0.5, 1.0, 1.5])
        s = np.array([[0.7, 0.7, 0.1]])
        assert column_argmax(qs, omegas, s)[0, 1] == 0.5


class TestCli:
    def test_success(self, synthetic_dir):
        out = synthetic_dir / "cli.png"
        rc = main(["spectrum", str(synthetic_dir / "spectral.csv"),
                   "-o", str(out)])
        assert rc == 0 and out.exists()

    def test_schema_failure_nonzero(self, synthetic_dir, capsys):
        bad = synthetic_dir / "bad.csv"
        bad.write_text("nope\n")
        rc = main(["spectrum", str(bad), "-o", str(synthetic_dir / "x.png")])
        assert rc == 1
        assert "nope" in capsys.readouterr().err
