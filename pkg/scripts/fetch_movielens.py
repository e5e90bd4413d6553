#!/usr/bin/env python3
"""
Fetch MovieLens 100k as a ``user item rating`` triplet file.

GroupLens hosts the canonical archive, but many sandboxes only reach a PyPI
mirror.  The ``recbole`` wheel bundles the same 100,000 ratings
(``dataset_example/ml-100k/ml-100k.inter``), so we download that wheel
without dependencies and convert the ratings file.

    python scripts/fetch_movielens.py [OUTPUT]

The default output is ``~/.cache/parmf/ml-100k.txt``.  The data is not
redistributed with this package; see the GroupLens usage license.
"""

from __future__ import annotations

import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

DEFAULT_PATH = Path.home() / ".cache" / "parmf" / "ml-100k.txt"
WHEEL_SPEC = "recbole==1.2.1"
MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def fetch(out: Path = DEFAULT_PATH) -> Path:
    if out.exists():
        return out
    out.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, WHEEL_SPEC],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            lines = z.read(MEMBER).decode().splitlines()
    rows = []
    for line in lines[1:]:
        user, item, rating = line.split("\t")[:3]
        rows.append(f"{user} {item} {rating}\n")
    tmp_out = out.with_suffix(".part")
    tmp_out.write_text("".join(rows))
    tmp_out.replace(out)
    return out


if __name__ == "__main__":
    print(fetch(Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_PATH))
