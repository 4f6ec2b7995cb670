"""Run the robust-ensembles CLI from a source checkout without installing."""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from robust_ensembles.cli import main  # noqa: E402

if __name__ == "__main__":
    main()
