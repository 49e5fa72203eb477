import runpy
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("script", ["walk_or_bus.py", "new_mode_pricing.py"])
def test_demo_runs(script, capsys):
    runpy.run_path(str(DEMOS / script), run_name="__main__")
    assert "nominal" in capsys.readouterr().out


def test_make_data(tmp_path, monkeypatch):
    monkeypatch.setattr("sys.argv", ["make_data.py", str(tmp_path)])
    runpy.run_path(str(DEMOS / "make_data.py"), run_name="__main__")
    assert (tmp_path / "train.csv").exists() and (tmp_path / "clean.csv").exists()
