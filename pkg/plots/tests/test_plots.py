import os
import shutil
from pathlib import Path

import pytest

from exactquant_plots.cli import main_bits, main_entropy, main_mse
from exactquant_plots.render import FigureSpec, plot_entropy
from exactquant_plots.schemas import SchemaError, read_rows, ENTROPY_COLUMNS

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.mark.parametrize("runner,fixture", [
    (main_entropy, "entropy_golden.csv"),
    (main_bits, "bits_golden.csv"),
    (main_mse, "mse_golden.csv"),
])
def test_golden_fixture_renders_image(tmp_path, runner, fixture):
    out = tmp_path / (fixture.replace(".csv", ".png"))
    rc = runner(["--in", str(FIXTURES / fixture), "--out", str(out)])
    assert rc == 0
    assert out.exists() and out.stat().st_size > 0


def test_entropy_fixture_has_eight_series(tmp_path):
    rows = read_rows(str(FIXTURES / "entropy_golden.csv"), ENTROPY_COLUMNS)
    series = {(r["scheme"], r["sigma"]) for r in rows}
    assert len(series) == 8  # 2 schemes x 2 noise families x 2 sigmas
    out = tmp_path / "entropy.png"
    plot_entropy(FigureSpec(str(FIXTURES / "entropy_golden.csv"), "entropy",
                            str(out)))
    assert out.exists()


def test_schema_corrupted_csv_rejected(tmp_path):
    src = (FIXTURES / "entropy_golden.csv").read_text().splitlines()
    src[0] = src[0].replace("measured", "Measured")
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(src))
    out = tmp_path / "never.png"
    rc = main_entropy(["--in", str(bad), "--out", str(out)])
    assert rc == 1
    assert not out.exists()


def test_empty_but_valid_csv_rejected(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("scheme,t,sigma,lower,measured,upper\n")
    rc = main_entropy(["--in", str(empty), "--out",
                       str(tmp_path / "no.png")])
    assert rc == 1
    assert not (tmp_path / "no.png").exists()


def test_wrong_kind_rejected_for_other_schema(tmp_path):
    rc = main_bits(["--in", str(FIXTURES / "entropy_golden.csv"),
                    "--out", str(tmp_path / "x.png")])
    assert rc == 1


def test_missing_file_errors(tmp_path):
    rc = main_mse(["--in", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "y.png")])
    assert rc == 1


def test_figure_spec_validates_kind():
    with pytest.raises(ValueError):
        FigureSpec("a.csv", "pie", "b.png")
