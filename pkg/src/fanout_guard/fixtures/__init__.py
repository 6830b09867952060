"""Bundled tutorial datasets: the retail business database driving the
golden tests (relations U, H, I, P, A, V) and the gender-bias database
(ad_view, user, purchase_history)."""

from importlib.resources import files
from pathlib import Path


def retail_dir() -> Path:
    return Path(str(files(__package__) / "retail"))


def bias_dir() -> Path:
    return Path(str(files(__package__) / "bias"))
