import json

import pytest

from src.config import THREADS_ENV
from src.core.config_manager import ConfigError, ConfigManager, read_csv_body, resolve_threads, write_preamble


def test_cli_overrides_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"sigma": 0.25, "n": 500}))
    cm = ConfigManager(str(path))
    cm.merge({"sigma": 0.5, "n": None, "seed": 3})
    assert cm.get_value("sigma") == 0.5
    assert cm.get_value("n") == 500
    assert cm.get_value("alpha", 0.001) == 0.001
    assert list(cm.resolved()) == ["n", "seed", "sigma"]


def test_bad_config_files(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        ConfigManager(str(broken))
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ConfigManager(str(listing))


def test_save_config(tmp_path):
    cm = ConfigManager()
    cm.set_value("seed", 1)
    cm.save_config(tmp_path / "out.json")
    assert ConfigManager(str(tmp_path / "out.json")).config == {"seed": 1}


def test_thread_resolution_order(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads(5) == 5
    assert resolve_threads(None) == 3
    monkeypatch.delenv(THREADS_ENV)
    assert resolve_threads(None) >= 1


@pytest.mark.parametrize("cli, env", [(0, None), (None, "zero"), (None, "-2")])
def test_invalid_thread_counts(monkeypatch, cli, env):
    if env is None:
        monkeypatch.delenv(THREADS_ENV, raising=False)
    else:
        monkeypatch.setenv(THREADS_ENV, env)
    with pytest.raises(ConfigError):
        resolve_threads(cli)


def test_preamble_layout(tmp_path):
    path = tmp_path / "out.csv"
    with open(path, "w", encoding="utf-8") as f:
        write_preamble(f, {"seed": 1, "alpha": 0.001})
        f.write("a,b\n1,2\n")
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# generated_at=")
    assert lines[1] == '# config={"alpha": 0.001, "seed": 1}'
    assert read_csv_body(path) == ["a,b", "1,2"]
