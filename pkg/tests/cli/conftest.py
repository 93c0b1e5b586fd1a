"""Fixtures for command-line tests."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from pathlib import Path

import pytest

from cdfgnn import run


@pytest.fixture(autouse=True)
def _restore_logging() -> Iterator[None]:
    """run() reconfigures the root logger; put it back after every test."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def generated(tmp_path: Path) -> Path:
    """Prefix of a small generated dataset (.edges/.feat/.labels)."""
    prefix = tmp_path / "data" / "g"
    status = run(
        [
            "gen-graph",
            "--n", "120",
            "--m", "2",
            "--classes", "3",
            "--dim", "8",
            "--seed", "1",
            "--out-prefix", str(prefix),
        ]
    )
    assert status == 0
    return prefix


@pytest.fixture
def dataset_args(generated: Path) -> list[str]:
    return [
        "--graph", f"{generated}.edges",
        "--features", f"{generated}.feat",
        "--labels", f"{generated}.labels",
    ]
