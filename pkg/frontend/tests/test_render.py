import numpy as np
import pytest

from ddfem_plots import PlotSpec, SchemaError, build_figure, render, whisker_bounds

INFLATION_CSV = """level,h,err_u,err_K,err_P_hdiv,err_p,err_u_corr
4,0.39,1.5e-01,1.4e-01,1.4e-01,9.0e-03,2.6e-03
8,0.20,7.7e-02,4.8e-02,4.9e-02,2.4e-03,3.2e-04
16,0.10,3.9e-02,1.7e-02,1.7e-02,6.3e-04,3.9e-05
32,0.05,1.9e-02,4.5e-03,4.8e-03,2.5e-04,4.7e-06
"""

COOK_CSV = """n,f,ux_A,uy_A,newton_iters_total
6,0.2,-12.04,12.95,21
12,0.2,-12.80,13.55,20
24,0.2,-13.23,13.87,20
"""

STRETCH_CSV = """mesh,u,norm_u,norm_K,norm_P,norm_p,J_min,J_q1,J_median,J_q3,J_max,J_neg_count
asset,1.5,0.78,1.2,2.2,0.9,-0.05,0.93,1.0,1.08,4.2,1
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def values_csv(tmp_path, values):
    lines = ["mesh,u,value"] + [f"asset,1.5,{v}" for v in values]
    return write(tmp_path, "values.csv", "\n".join(lines) + "\n")


def test_whiskers_at_exactly_1p5_iqr():
    """Hand-checkable nine-value input: q1 = 3, q3 = 7, IQR = 4, so the
    upper fence is 13; 100 is a flier and the whisker ends at 8."""
    values = [1, 2, 3, 4, 5, 6, 7, 8, 100]
    lo, hi = whisker_bounds(values)
    assert lo == 1.0
    assert hi == 8.0


def test_whiskers_no_fliers():
    lo, hi = whisker_bounds([1, 2, 3, 4, 5])
    assert (lo, hi) == (1.0, 5.0)


def test_convergence_render(tmp_path):
    spec = PlotSpec(input_csv=write(tmp_path, "inflation.csv", INFLATION_CSV),
                    kind="convergence", output=str(tmp_path / "conv.svg"),
                    slopes=(1, 2, 3))
    out = render(spec)
    data = open(out, "rb").read()
    assert data.startswith(b"<?xml")
    fig = build_figure(spec)
    gids = {line.get_gid() for ax in fig.axes for line in ax.get_lines()}
    assert {"ref-slope-1", "ref-slope-2", "ref-slope-3"} <= gids
    # five error curves plus three reference lines
    assert len(fig.axes[0].get_lines()) == 8


def test_boxplot_render_from_values(tmp_path):
    path = values_csv(tmp_path, [1, 2, 3, 4, 5, 6, 7, 8, 100])
    spec = PlotSpec(input_csv=path, kind="boxplot",
                    output=str(tmp_path / "box.svg"))
    assert open(render(spec), "rb").read().startswith(b"<?xml")


def test_boxplot_render_from_summary(tmp_path):
    spec = PlotSpec(input_csv=write(tmp_path, "stretch.csv", STRETCH_CSV),
                    kind="boxplot", output=str(tmp_path / "box.svg"))
    assert open(render(spec), "rb").read().startswith(b"<?xml")


def test_deflection_render(tmp_path):
    spec = PlotSpec(input_csv=write(tmp_path, "cook.csv", COOK_CSV),
                    kind="deflection", output=str(tmp_path / "cook.png"))
    out = render(spec)
    assert open(out, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"


def test_missing_column_named(tmp_path):
    bad = write(tmp_path, "bad.csv", "level,h\n1,0.5\n")
    spec = PlotSpec(input_csv=bad, kind="convergence",
                    output=str(tmp_path / "x.svg"))
    with pytest.raises(SchemaError, match="err_u"):
        render(spec)
    assert not (tmp_path / "x.svg").exists()


def test_empty_csv_no_file(tmp_path):
    empty = write(tmp_path, "empty.csv", "level,h,err_u\n")
    spec = PlotSpec(input_csv=empty, kind="convergence",
                    output=str(tmp_path / "y.svg"))
    with pytest.raises(SchemaError):
        render(spec)
    assert not (tmp_path / "y.svg").exists()


def test_rendering_is_idempotent(tmp_path):
    spec = PlotSpec(input_csv=write(tmp_path, "inflation.csv", INFLATION_CSV),
                    kind="convergence", output=str(tmp_path / "same.svg"),
                    slopes=(1, 2))
    first = open(render(spec), "rb").read()
    second = open(render(spec), "rb").read()
    assert first == second


def test_input_never_modified(tmp_path):
    path = write(tmp_path, "cook.csv", COOK_CSV)
    before = open(path, "rb").read()
    render(PlotSpec(input_csv=path, kind="deflection",
                    output=str(tmp_path / "c.svg")))
    assert open(path, "rb").read() == before


def test_cli(tmp_path):
    import subprocess
    import sys

    csv_path = write(tmp_path, "inflation.csv", INFLATION_CSV)
    out = subprocess.run(
        [sys.executable, "-m", "ddfem_plots.cli", "--kind", "convergence",
         "--in", csv_path, "--out", str(tmp_path / "cli.svg"),
         "--slopes", "1,2"],
        capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "cli.svg").exists()


def test_invalid_kind():
    with pytest.raises(ValueError):
        PlotSpec(input_csv="x.csv", kind="pie", output="x.svg")
