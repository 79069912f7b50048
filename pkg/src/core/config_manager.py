import json
import os
from datetime import datetime, timezone

from src.config import THREADS_ENV


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class ConfigManager:
    """
    Run configuration: an optional JSON file plus explicit command-line
    overrides. The resolved dictionary is what every output file embeds.
    """

    def __init__(self, config_path=None):
        self.config_path = os.path.abspath(config_path) if config_path else None
        self.config = self.load_config()

    def load_config(self):
        if not self.config_path:
            return {}
        if not os.path.exists(self.config_path):
            raise ConfigError(f"配置文件不存在: {self.config_path}")
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            raise ConfigError(f"无法读取配置文件 {self.config_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{self.config_path}: 顶层必须是 JSON 对象")
        return data

    def merge(self, overrides):
        # 命令行显式给出的值覆盖文件中的值; None 表示"未指定"
        for key, value in overrides.items():
            if value is not None:
                self.config[key] = value
        return self.config

    def get_value(self, key, default=None):
        value = self.config.get(key)
        return default if value is None else value

    def set_value(self, key, value):
        self.config[key] = value

    def resolved(self):
        return dict(sorted(self.config.items()))

    def save_config(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.resolved(), f, ensure_ascii=False, indent=4, sort_keys=True)


def resolve_threads(cli_threads=None):
    """--threads > CS_SMOOTH_THREADS > available parallelism."""
    if cli_threads is not None:
        value, source = cli_threads, "--threads"
    elif os.environ.get(THREADS_ENV):
        value, source = os.environ[THREADS_ENV], THREADS_ENV
    else:
        return os.cpu_count() or 1
    try:
        threads = int(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{source} 必须是正整数, 实际 {value!r}") from e
    if threads < 1:
        raise ConfigError(f"{source} 必须是正整数, 实际 {threads}")
    return threads


def write_preamble(f, config):
    """Line 1: timestamp (the only line allowed to differ between identical runs). Line 2: resolved config."""
    stamp = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    f.write(f"# generated_at={stamp}\n")
    f.write("# config=" + json.dumps(config, sort_keys=True, ensure_ascii=False) + "\n")


def read_csv_body(path):
    """Lines of a report CSV after the two preamble comment lines."""
    with open(path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()
    return [ln for ln in lines if not ln.startswith("#")]
