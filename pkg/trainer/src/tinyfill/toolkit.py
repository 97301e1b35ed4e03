"""Subprocess wrappers around the trackfill CLI.

Every exchange with the toolkit goes through these: the trainer holds no
import-level dependency on the toolkit package.
"""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

TOOLKIT = "trackfill"


def _run(args: list[str], *, ok_codes=(0,)) -> subprocess.CompletedProcess:
    result = subprocess.run([TOOLKIT, *map(str, args)],
                            capture_output=True, text=True)
    if result.returncode not in ok_codes:
        raise RuntimeError(
            f"{TOOLKIT} {' '.join(map(str, args))} failed "
            f"({result.returncode}): {result.stderr.strip()}")
    return result


def dump_vocab(path: Path) -> Path:
    _run(["vocab", "--out", path])
    return path


def detokenize(prompt_text_path: Path, out_midi: Path) -> Path:
    _run(["detokenize", prompt_text_path, "--out", out_midi])
    return out_midi


def make_dataset(corpus_dir: Path, task: str, n: int, out: Path, *, seed: int,
                 max_controls: bool = False,
                 conditioning_probs: tuple[float, float, float] | None = None) -> Path:
    args = ["--seed", seed, "make-dataset", corpus_dir, "--task", task,
            "--n", n, "--out", out]
    if max_controls:
        args.append("--max-controls")
    if conditioning_probs is not None:
        args += ["--conditioning-probs", *conditioning_probs]
    _run(args, ok_codes=(0, 1))  # 1 = some files skipped, still a dataset
    return out


def evaluate(examples: Path, outputs: Path, out_dir: Path) -> dict:
    _run(["eval", examples, outputs, "--out-dir", out_dir])
    return json.loads((out_dir / "summary.json").read_text())


def comply(outputs: Path, out_csv: Path, *, tolerance: int = 1) -> list[dict]:
    _run(["comply", outputs, "--tolerance", tolerance, "--out", out_csv])
    header, *rows = out_csv.read_text().splitlines()
    keys = header.split(",")
    return [dict(zip(keys, row.split(","))) for row in rows]
