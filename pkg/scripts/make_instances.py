#!/usr/bin/env python3
"""Regenerate the canonical shipped instances from their fixed seeds.

Writes src/delayed_sharing/instances/{io,i1,i2,ia}.json.  The JSON files in
the repository are the source of truth for tests; rerunning this script must
reproduce them byte for byte.
"""

from pathlib import Path

from delayed_sharing import generate
from delayed_sharing.model import serialize_problem

OUT_DIR = Path(__file__).resolve().parents[1] / "src" / "delayed_sharing" / "instances"


def main():
    for name, maker in generate.CANONICAL.items():
        spec = maker()
        path = OUT_DIR / f"{name}.json"
        path.write_text(serialize_problem(spec), encoding="utf-8")
        print(f"wrote {path} (K={spec.K} T={spec.T} n={spec.n} |X|={spec.x_size})")


if __name__ == "__main__":
    main()
