from __future__ import annotations

import contextlib
import datetime as dt
import functools
import os
import time

import numpy as np
import pytest

from rdit.cli import parse_schema
from rdit.strikes import StrikeRecord, SyntheticConfig, build_monthly_panel, generate_synthetic_corpus, parse_strike_csv


def strike(day: str, civ=(0.0, 0.0), child=(0.0, 0.0), total=(0.0, 0.0), sid: str | None = None) -> StrikeRecord:
    """Compact record builder for handcrafted fixtures."""
    return StrikeRecord(
        strike_id=sid or f"S-{day}",
        date=dt.date.fromisoformat(day),
        civ_min=float(civ[0]),
        civ_max=float(civ[1]),
        child_min=float(child[0]),
        child_max=float(child[1]),
        total_min=float(total[0]),
        total_max=float(total[1]),
    )


def corpus_args() -> tuple[str, dict[str, str] | None, str | None]:
    """Real-corpus location from the environment; skips the calling test when unset."""
    path = os.environ.get("RDIT_DATA")
    if not path:
        pytest.skip("RDIT_DATA not set")
    schema = os.environ.get("RDIT_SCHEMA")
    return path, parse_schema(schema) if schema else None, os.environ.get("RDIT_DATE_FORMAT")


@functools.lru_cache(maxsize=1)
def _load_corpus(path, schema_items, date_format):
    return tuple(parse_strike_csv(path, dict(schema_items) if schema_items else None, date_format=date_format))


def load_corpus() -> list[StrikeRecord]:
    path, schema, fmt = corpus_args()
    return list(_load_corpus(path, tuple(sorted(schema.items())) if schema else None, fmt))


@pytest.fixture
def corpus():
    return load_corpus()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def step_config() -> SyntheticConfig:
    # 60 months each side, cutoff lands on 2011-07
    return SyntheticConfig(n_months=120, cutoff_offset=60, pre_mean=10.0, post_mean=2.0, noise_sd=1.0, seed=7, start="2006-07")


@pytest.fixture(scope="session")
def step_corpus(step_config):
    return generate_synthetic_corpus(step_config)


@pytest.fixture(scope="session")
def step_panel(step_corpus, step_config):
    return build_monthly_panel(step_corpus, step_config.cutoff)


@pytest.fixture(scope="session")
def noiseless_config() -> SyntheticConfig:
    return SyntheticConfig(n_months=120, cutoff_offset=60, pre_mean=10.0, post_mean=2.0, noise_sd=0.0, seed=3, start="2006-07")


@pytest.fixture(scope="session")
def noiseless_panel(noiseless_config):
    return build_monthly_panel(generate_synthetic_corpus(noiseless_config), noiseless_config.cutoff)


# acceptance criteria report one line each in the terminal summary
_ACCEPTANCE = pytest.StashKey[list]()


class CriterionRecord:
    def __init__(self) -> None:
        self.detail = ""


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Context manager that logs PASS, FAIL or SKIP for one criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    @contextlib.contextmanager
    def record(key: str, label: str):
        rec = CriterionRecord()
        t0 = time.perf_counter()
        status = "PASS"
        try:
            yield rec
        except pytest.skip.Exception:
            status = "SKIP"
            rec.detail = rec.detail or "no data"
            raise
        except BaseException as exc:
            status = "FAIL"
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            rec.detail = f"{rec.detail} | {msg}" if rec.detail else msg
            raise
        finally:
            line = f"{status} criterion {key}: {label} [{time.perf_counter() - t0:.2f} s]"
            if rec.detail:
                line += f" {rec.detail if len(rec.detail) <= 240 else rec.detail[:237] + '...'}"
            lines.append(line)
            print(line)

    return record
